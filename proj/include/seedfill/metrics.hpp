#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "seedfill/fixtures.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

struct ViewScore {
  int camera_id = 0;
  int frame = 0;
  double psnr = 0.0;
  double background_l1 = 0.0;
};

struct EvalReport {
  std::vector<ViewScore> holdout;
  double holdout_psnr_min = 0.0;
  double holdout_psnr_mean = 0.0;
  std::vector<double> frame_psnr_min;  // per frame, over held-out cameras
  double background_l1 = 0.0;          // outside user masks, all evaluated views
  double render_inconsistency = 0.0;   // cross-view metric on field renders
  double image_inconsistency = 0.0;    // same metric on the final training images
  double masked_depth_rmse = 0.0;      // training views, inside user masks
  double render_temporal_inconsistency = 0.0;  // consecutive-frame metric on field renders
  double image_temporal_inconsistency = 0.0;
};

struct EvalOptions {
  RenderOptions render;
  double visibility_tolerance = 0.03;  // relative depth agreement for the warp check
};

// Images to compare, keyed by view id.
using ViewImages = std::map<int, RgbImage>;

// Warps the new-object pixels of every view into its nearest same-frame
// neighbour with ground-truth depth, skips pixels that are occluded there,
// and returns the mean absolute colour difference over all warped pixels.
double cross_view_inconsistency(const FixtureScene& scene, const SceneDataset& dataset, const ViewImages& images,
                                const EvalOptions& options = {});

// Motion-compensated counterpart across time: new-object pixels of each view
// at frame f are carried to frame f+1 of the same camera along the object's
// ground-truth rigid motion, then compared as above. Zero for one frame.
double temporal_inconsistency(const FixtureScene& scene, const SceneDataset& dataset, const ViewImages& images,
                              const EvalOptions& options = {});

// Root-mean-square depth error of the field against the target field,
// over the user masks of all training views.
double masked_depth_rmse(const FixtureScene& scene, const RadianceField& field, const SceneDataset& dataset,
                         const EvalOptions& options = {});

// `training_images` (optional) feeds image_inconsistency.
EvalReport evaluate_fixture(const FixtureScene& scene, const RadianceField& field, const SceneDataset& dataset,
                            const ViewImages* training_images = nullptr, const EvalOptions& options = {});

ViewImages render_views(const RadianceField& field, const SceneDataset& dataset, const RenderOptions& options = {});

}  // namespace seedfill
