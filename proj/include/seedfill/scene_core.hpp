#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "seedfill/image.hpp"

namespace seedfill {

// Calibrated pinhole camera. `rotation` maps world to camera coordinates
// (x right, y down, z forward); `position` is the camera center in world units.
struct CameraView {
  int id = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double focal = 1.0;
  Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
  int width = 0;
  int height = 0;

  // Throws InvalidArgument when the rotation is not orthonormal or the
  // intrinsics are out of range.
  void validate() const;

  Eigen::Vector3d optical_axis() const { return rotation.row(2).transpose(); }
  // Unit world-space direction of the ray through a (continuous) pixel.
  Eigen::Vector3d ray_direction(const Eigen::Vector2d& pixel) const;
  // Ratio of camera-space z to distance along the ray for that pixel.
  double z_per_range(const Eigen::Vector2d& pixel) const;
};

// Camera at `position` looking at `target`; `up` is a world up hint.
CameraView look_at(int id, const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& up, double focal, int width, int height);

struct Projection {
  Eigen::Vector2d pixel;
  double depth = 0.0;  // camera-space z; <= 0 means behind the camera
};

Projection project_point(const CameraView& camera, const Eigen::Vector3d& p);
Eigen::Vector3d unproject_pixel(const CameraView& camera, const Eigen::Vector2d& pixel, double depth);

double camera_distance(const CameraView& a, const CameraView& b);

// The `n` cameras of `pool` closest to `target` (by center distance), ties by id.
std::vector<CameraView> nearest_neighbors(const CameraView& target,
                                          const std::vector<CameraView>& pool, int n);

// Normalized inverse-distance weights. A neighbor coinciding with the target
// (distance < 1e-9) receives all the weight.
std::vector<double> compute_view_weights(const CameraView& target,
                                         const std::vector<CameraView>& neighbors);

struct TrainingView {
  int id = 0;
  CameraView camera;
  RgbImage rgb;
  std::optional<RgbImage> inpainted_rgb;
  Mask user_mask;
  std::optional<Mask> object_mask;
  int frame = 0;
  bool is_seed = false;

  int width() const { return camera.width; }
  int height() const { return camera.height; }
};

struct SceneDataset {
  std::vector<TrainingView> views;
  std::vector<int> seed_ids;  // propagation order; first entry is the first seed
  int frames = 1;
  std::string prompt;

  void validate() const;
  TrainingView& view(int id);
  const TrainingView& view(int id) const;
  bool has_view(int id) const;
  // Views of one frame, in dataset order.
  std::vector<int> view_ids_for_frame(int frame) const;
  // The view showing camera `camera_id` at `frame`, if present.
  std::optional<int> find_view(int camera_id, int frame) const;
};

// Seeds as every `stride`-th camera of `camera_ids`, starting at the first.
std::vector<int> every_kth_seed(const std::vector<int>& camera_ids, int stride);

}  // namespace seedfill
