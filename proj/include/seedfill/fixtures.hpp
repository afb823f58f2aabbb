#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "seedfill/corrector.hpp"
#include "seedfill/dynamic4d.hpp"
#include "seedfill/projection_correction.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

enum class PrimitiveKind { Box, Cylinder };

// Solid in object-local coordinates. Boxes use all three half extents;
// cylinders are y-aligned with radius = half_extents.x() and half height =
// half_extents.y().
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.5);
  std::function<Eigen::Vector3d(const Eigen::Vector3d& local)> color;

  double sdf(const Eigen::Vector3d& local) const;
};

struct ObjectPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

// Rigid object made of primitives, with one world pose per frame.
struct FixtureObject {
  std::vector<Primitive> parts;
  std::vector<ObjectPose> poses;

  const ObjectPose& pose(int frame) const { return poses.size() == 1 ? poses[0] : poses.at(frame); }
  Eigen::Vector3d to_local(const Eigen::Vector3d& world, int frame) const;
  Eigen::Vector3d to_world(const Eigen::Vector3d& local, int frame) const;
  double sdf(const Eigen::Vector3d& world, int frame) const;
  // World-space corners of the local bounding box of all parts.
  std::vector<Eigen::Vector3d> bounding_corners(int frame) const;
};

struct FixtureOptions {
  double spacing = 0.05;      // voxel spacing of the generated fields
  double edge_width = 0.03;   // soft surface transition width
  double sigma_max = 25.0;
  int width = 64;
  int height = 64;
  double focal = 80.0;
  int frames = 0;             // 0: the fixture's default
};

struct FixtureScene {
  std::string name;
  std::string prompt;
  FixtureOptions options;
  int frames = 1;
  RadianceField background_field;  // original scene, with the original object
  RadianceField target_field;      // original object replaced by the new one
  RadianceField clean_field;       // no object at all
  std::vector<Primitive> static_parts;
  FixtureObject original_object;
  FixtureObject new_object;
  std::vector<CameraView> rig;      // training cameras
  std::vector<CameraView> holdout;  // evaluation-only cameras
  std::vector<int> seed_camera_ids;
  std::optional<KeypointTracks> tracks;  // seed-view tracks of dynamic fixtures
  int user_mask_dilation = 2;

  int seed_camera() const { return seed_camera_ids.front(); }
  const CameraView& camera(int id) const;
};

std::vector<std::string> fixture_names();

// Known names: "cube-to-cylinder", "cube-to-card", "rotating-sword".
// Throws InvalidArgument for anything else.
FixtureScene make_scene(const std::string& name, const FixtureOptions& options = {});

// View ids: camera id + kFrameIdStride * frame.
inline constexpr int kFrameIdStride = 1000;
inline int fixture_view_id(int camera_id, int frame) { return camera_id + kFrameIdStride * frame; }

// Rays whose closest approach to the object's surface comes within
// `inflate` of it (sphere traced against the exact SDF).
Mask analytic_silhouette(const FixtureObject& object, const CameraView& camera, int frame, double inflate = 0.0);

// Dilated union of the original and new object silhouettes, inflated to
// cover every voxel the objects touch.
Mask fixture_user_mask(const FixtureScene& scene, const CameraView& camera, int frame);

double fixture_time(const FixtureScene& scene, int frame);

ViewRender render_original(const FixtureScene& scene, const CameraView& camera, int frame,
                           const RenderOptions& options = {});
ViewRender render_target(const FixtureScene& scene, const CameraView& camera, int frame,
                         const RenderOptions& options = {});
ViewRender render_clean(const FixtureScene& scene, const CameraView& camera, int frame,
                        const RenderOptions& options = {});

// Training views for every rig camera and frame, with original renders as
// images and fixture user masks. Seeds are the fixture seed cameras at frame 0.
SceneDataset build_dataset(const FixtureScene& scene, const RenderOptions& options = {});

// Clean (object-free) renders of the seed camera, one per frame.
std::vector<RgbImage> clean_background_frames(const FixtureScene& scene, int camera_id,
                                              const RenderOptions& options = {});

// Pixels differing from the clean render by more than `threshold` in any
// channel, restricted to `within` when given.
Mask difference_key(const RgbImage& image, const RgbImage& clean, double threshold,
                    const Mask* within = nullptr);

inline constexpr double kKeyThreshold = 0.08;

// Keys inpainted images against clean renders of the fixture.
ObjectSegmenter make_difference_segmenter(std::shared_ptr<const FixtureScene> scene,
                                          const RenderOptions& options = {},
                                          double threshold = kKeyThreshold);

// Looks up the camera and frame of a request by view id.
class ViewCatalog {
 public:
  ViewCatalog() = default;
  explicit ViewCatalog(const SceneDataset& dataset);
  void add(int view_id, const CameraView& camera, int frame);
  const CameraView& camera(int view_id) const;
  int frame(int view_id) const;

 private:
  std::map<int, std::pair<CameraView, int>> entries_;
};

// Blends the input toward the target-field render: (1-l)*input + l*truth
// inside the mask. Returns the keyed object mask of the truth render.
class OracleCorrector : public Corrector {
 public:
  OracleCorrector(std::shared_ptr<const FixtureScene> scene, ViewCatalog catalog, RenderOptions options = {});

  CorrectorResponse correct(const CorrectorRequest& request) const override;
  std::string name() const override { return "oracle"; }

  // Ground-truth render for the request's view (cached).
  const RgbImage& truth(int view_id) const;
  const Mask& truth_mask(int view_id) const;

 private:
  struct Entry {
    RgbImage image;
    Mask object_mask;
  };
  const Entry& entry(int view_id) const;

  std::shared_ptr<const FixtureScene> scene_;
  ViewCatalog catalog_;
  RenderOptions options_;
  mutable std::mutex mutex_;
  mutable std::map<int, std::unique_ptr<Entry>> cache_;
};

// Adds seeded low-frequency value noise inside the mask, standing in for
// the sample-to-sample variation of a generative model. Content is the
// input image, or the base corrector's full-strength output when given.
class JitterCorrector : public Corrector {
 public:
  explicit JitterCorrector(uint64_t seed, double amplitude = 0.2, int cell = 4,
                           std::shared_ptr<const Corrector> base = nullptr);

  CorrectorResponse correct(const CorrectorRequest& request) const override;
  std::string name() const override { return "jitter"; }

 private:
  uint64_t seed_;
  double amplitude_;
  int cell_;
  std::shared_ptr<const Corrector> base_;
};

// Projected keypoints of the new object in `camera`, one track per
// bounding-box corner and part center, for every frame.
KeypointTracks fixture_tracks(const FixtureScene& scene, const CameraView& camera);

}  // namespace seedfill
