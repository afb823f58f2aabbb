#include "seedfill/scene_core.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "seedfill/errors.hpp"

namespace seedfill {

namespace {
constexpr double kCoincidentDistance = 1e-9;
}

void CameraView::validate() const {
  const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw InvalidArgument("camera " + std::to_string(id) + ": rotation is not orthonormal");
  if (!(focal > 0.0)) throw InvalidArgument("camera " + std::to_string(id) + ": focal must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("camera " + std::to_string(id) + ": empty image size");
  if (principal_point.x() < 0 || principal_point.y() < 0 || principal_point.x() > width ||
      principal_point.y() > height)
    throw InvalidArgument("camera " + std::to_string(id) + ": principal point outside image");
}

Eigen::Vector3d CameraView::ray_direction(const Eigen::Vector2d& pixel) const {
  const Eigen::Vector3d cam((pixel.x() - principal_point.x()) / focal,
                            (pixel.y() - principal_point.y()) / focal, 1.0);
  return (rotation.transpose() * cam).normalized();
}

double CameraView::z_per_range(const Eigen::Vector2d& pixel) const {
  const Eigen::Vector3d cam((pixel.x() - principal_point.x()) / focal,
                            (pixel.y() - principal_point.y()) / focal, 1.0);
  return 1.0 / cam.norm();
}

CameraView look_at(int id, const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& up, double focal, int width, int height) {
  const Eigen::Vector3d forward = (target - position).normalized();
  // Image y points down, so the camera "down" axis opposes the world up hint.
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) throw InvalidArgument("look_at: up is parallel to the view direction");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  CameraView cam;
  cam.id = id;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.position = position;
  cam.focal = focal;
  cam.principal_point = Eigen::Vector2d((width - 1) * 0.5, (height - 1) * 0.5);
  cam.width = width;
  cam.height = height;
  return cam;
}

Projection project_point(const CameraView& camera, const Eigen::Vector3d& p) {
  const Eigen::Vector3d pc = camera.rotation * (p - camera.position);
  Projection out;
  out.depth = pc.z();
  out.pixel = Eigen::Vector2d(camera.focal * pc.x() / pc.z() + camera.principal_point.x(),
                              camera.focal * pc.y() / pc.z() + camera.principal_point.y());
  return out;
}

Eigen::Vector3d unproject_pixel(const CameraView& camera, const Eigen::Vector2d& pixel, double depth) {
  if (!(depth > 0.0)) throw InvalidArgument("unproject_pixel: depth must be positive");
  const Eigen::Vector3d pc((pixel.x() - camera.principal_point.x()) / camera.focal * depth,
                           (pixel.y() - camera.principal_point.y()) / camera.focal * depth, depth);
  return camera.rotation.transpose() * pc + camera.position;
}

double camera_distance(const CameraView& a, const CameraView& b) {
  return (a.position - b.position).norm();
}

std::vector<CameraView> nearest_neighbors(const CameraView& target,
                                          const std::vector<CameraView>& pool, int n) {
  if (pool.empty()) throw InvalidArgument("nearest_neighbors: empty pool");
  if (n < 1) throw InvalidArgument("nearest_neighbors: n must be >= 1");
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) dist[i] = camera_distance(target, pool[i]);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return pool[a].id < pool[b].id;
  });
  const size_t k = std::min(pool.size(), static_cast<size_t>(n));
  std::vector<CameraView> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) out.push_back(pool[order[i]]);
  return out;
}

std::vector<double> compute_view_weights(const CameraView& target,
                                         const std::vector<CameraView>& neighbors) {
  if (neighbors.empty()) throw InvalidArgument("compute_view_weights: no neighbors");
  std::vector<double> dist(neighbors.size());
  for (size_t k = 0; k < neighbors.size(); ++k) dist[k] = camera_distance(target, neighbors[k]);

  std::vector<double> weights(neighbors.size(), 0.0);
  const auto nearest = std::min_element(dist.begin(), dist.end());
  if (*nearest < kCoincidentDistance) {
    weights[static_cast<size_t>(nearest - dist.begin())] = 1.0;
    return weights;
  }
  double total = 0.0;
  for (double d : dist) total += 1.0 / d;
  for (size_t k = 0; k < dist.size(); ++k) weights[k] = (1.0 / dist[k]) / total;
  return weights;
}

void SceneDataset::validate() const {
  std::set<int> ids;
  for (const auto& v : views) {
    if (!ids.insert(v.id).second) throw InvalidArgument("duplicate view id " + std::to_string(v.id));
    v.camera.validate();
    if (v.rgb.width != v.width() || v.rgb.height != v.height() || v.rgb.channels != 3)
      throw InvalidArgument("view " + std::to_string(v.id) + ": rgb shape does not match camera");
    if (v.user_mask.width != v.width() || v.user_mask.height != v.height())
      throw InvalidArgument("view " + std::to_string(v.id) + ": user mask shape does not match camera");
    if (v.object_mask && (v.object_mask->width != v.width() || v.object_mask->height != v.height()))
      throw InvalidArgument("view " + std::to_string(v.id) + ": object mask outside image bounds");
    if (v.frame < 0 || v.frame >= frames)
      throw InvalidArgument("view " + std::to_string(v.id) + ": frame index out of range");
  }
  for (int s : seed_ids)
    if (!ids.count(s)) throw InvalidArgument("seed id " + std::to_string(s) + " is not a view id");
  for (int f = 0; f < frames; ++f)
    if (view_ids_for_frame(f).empty()) throw InvalidArgument("frame " + std::to_string(f) + " has no views");
}

TrainingView& SceneDataset::view(int id) {
  for (auto& v : views)
    if (v.id == id) return v;
  throw InvalidArgument("unknown view id " + std::to_string(id));
}

const TrainingView& SceneDataset::view(int id) const {
  for (const auto& v : views)
    if (v.id == id) return v;
  throw InvalidArgument("unknown view id " + std::to_string(id));
}

bool SceneDataset::has_view(int id) const {
  return std::any_of(views.begin(), views.end(), [id](const TrainingView& v) { return v.id == id; });
}

std::vector<int> SceneDataset::view_ids_for_frame(int frame) const {
  std::vector<int> out;
  for (const auto& v : views)
    if (v.frame == frame) out.push_back(v.id);
  return out;
}

std::optional<int> SceneDataset::find_view(int camera_id, int frame) const {
  for (const auto& v : views)
    if (v.camera.id == camera_id && v.frame == frame) return v.id;
  return std::nullopt;
}

std::vector<int> every_kth_seed(const std::vector<int>& camera_ids, int stride) {
  if (stride < 1) throw InvalidArgument("seed stride must be >= 1");
  std::vector<int> out;
  for (size_t i = 0; i < camera_ids.size(); i += static_cast<size_t>(stride)) out.push_back(camera_ids[i]);
  return out;
}

}  // namespace seedfill
