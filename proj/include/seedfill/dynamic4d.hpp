#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "seedfill/corrector.hpp"
#include "seedfill/image.hpp"
#include "seedfill/projection_correction.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

// K x F pixel trajectories of tracked points in one view.
struct KeypointTracks {
  int num_points = 0;
  int num_frames = 0;
  std::vector<Eigen::Vector2d> points;  // index point * num_frames + frame
  std::vector<uint8_t> visibility;      // same indexing
  int source_view = 0;

  const Eigen::Vector2d& at(int point, int frame) const {
    return points[static_cast<size_t>(point) * num_frames + frame];
  }
  bool visible(int point, int frame) const {
    return visibility[static_cast<size_t>(point) * num_frames + frame] != 0;
  }
  void validate(int width, int height) const;
};

// JSON layout: {"num_points", "num_frames", "source_view",
// "points": [[[x,y], ...per frame], ...per point], "visibility": [[0/1...]...]}
KeypointTracks load_tracks(const std::string& path);
void save_tracks(const KeypointTracks& tracks, const std::string& path);

// x -> scale * rotation * x + translation, in pixel coordinates.
struct SimilarityTransform2D {
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  double scale = 1.0;
  double residual_rms = 0.0;

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return scale * (rotation * p) + translation; }
  SimilarityTransform2D inverse() const;
  // (this after other)(x) = this(other(x))
  SimilarityTransform2D compose(const SimilarityTransform2D& other) const;
  double angle() const;
};

// Least-squares Procrustes fit dst ~ T(src). Throws DegenerateConfiguration
// for coincident points, or collinear points when scale is estimated.
SimilarityTransform2D estimate_rigid_transform(std::span<const Eigen::Vector2d> src,
                                               std::span<const Eigen::Vector2d> dst, bool allow_scale);

struct SeedVideo {
  int camera_id = 0;
  std::vector<RgbImage> images;
  std::vector<Mask> object_masks;
  std::vector<SimilarityTransform2D> motions;  // frame 0 -> frame f
  std::vector<int> held_frames;                // frames that reused the previous motion
};

struct SeedVideoOptions {
  bool allow_scale = false;
  int min_points = 3;
};

// Animates the frame-0 object of the seed view along the tracked motion and
// composites it over the clean background of each frame. Pixels outside the
// per-frame user mask keep the original frame.
SeedVideo build_seed_video(const SceneDataset& dataset, int seed_camera_id,
                           const std::vector<RgbImage>& clean_background_frames, const KeypointTracks& tracks,
                           const RgbImage& frame0_seed, const Mask& frame0_object_mask,
                           const SeedVideoOptions& options = {});

// Preprocesses all views of frame `frame` (>= 1) from the seed video frame as
// the only seed. `plane_depth0` is the frame-0 object plane of the seed view.
void inpaint_frame_views(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                         const Corrector& corrector, const Codec& codec, const SeedVideo& video, int frame,
                         double plane_depth0, const PreprocessConfig& config,
                         const ObjectSegmenter& segmenter = {});

// Full temporal preprocessing: frame 0 through the static pipeline, then the
// seed video, then every later frame.
SeedVideo preprocess_dynamic(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                             const Corrector& corrector, const Codec& codec,
                             const std::vector<RgbImage>& clean_background_frames, const KeypointTracks& tracks,
                             const PreprocessConfig& config, const ObjectSegmenter& segmenter = {},
                             const SeedVideoOptions& video_options = {});

}  // namespace seedfill
