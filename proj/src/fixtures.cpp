#include "seedfill/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seedfill/errors.hpp"

namespace seedfill {

using Eigen::Vector3d;

double Primitive::sdf(const Vector3d& local) const {
  const Vector3d p = local - center;
  if (kind == PrimitiveKind::Box) {
    const Vector3d q = p.cwiseAbs() - half_extents;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }
  const double radial = std::hypot(p.x(), p.z()) - half_extents.x();
  const double axial = std::abs(p.y()) - half_extents.y();
  const double outside = std::hypot(std::max(radial, 0.0), std::max(axial, 0.0));
  return outside + std::min(std::max(radial, axial), 0.0);
}

Vector3d FixtureObject::to_local(const Vector3d& world, int frame) const {
  const ObjectPose& p = pose(frame);
  return p.rotation.transpose() * (world - p.translation);
}

Vector3d FixtureObject::to_world(const Vector3d& local, int frame) const {
  const ObjectPose& p = pose(frame);
  return p.rotation * local + p.translation;
}

double FixtureObject::sdf(const Vector3d& world, int frame) const {
  const Vector3d local = to_local(world, frame);
  double d = std::numeric_limits<double>::infinity();
  for (const auto& part : parts) d = std::min(d, part.sdf(local));
  return d;
}

std::vector<Vector3d> FixtureObject::bounding_corners(int frame) const {
  Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
  Vector3d hi = -lo;
  for (const auto& part : parts) {
    Vector3d h = part.half_extents;
    if (part.kind == PrimitiveKind::Cylinder) h = Vector3d(h.x(), h.y(), h.x());
    lo = lo.cwiseMin(part.center - h);
    hi = hi.cwiseMax(part.center + h);
  }
  std::vector<Vector3d> corners;
  for (int i = 0; i < 8; ++i) {
    const Vector3d c((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
    corners.push_back(to_world(c, frame));
  }
  return corners;
}

const CameraView& FixtureScene::camera(int id) const {
  for (const auto& c : rig)
    if (c.id == id) return c;
  for (const auto& c : holdout)
    if (c.id == id) return c;
  throw InvalidArgument("fixture has no camera " + std::to_string(id));
}

namespace {

constexpr double kPi = std::numbers::pi;

double smooth_occupancy(double sdf, double width) {
  const double s = std::clamp(0.5 - sdf / (2.0 * width), 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

Primitive box(const Vector3d& center, const Vector3d& half, std::function<Vector3d(const Vector3d&)> color) {
  return Primitive{PrimitiveKind::Box, center, half, std::move(color)};
}

Primitive cylinder(const Vector3d& center, double radius, double half_height,
                   std::function<Vector3d(const Vector3d&)> color) {
  return Primitive{PrimitiveKind::Cylinder, center, Vector3d(radius, half_height, 0.0), std::move(color)};
}

std::function<Vector3d(const Vector3d&)> solid(const Vector3d& c) {
  return [c](const Vector3d&) { return c; };
}

std::vector<Primitive> room() {
  auto wall_color = [](const Vector3d& p) {
    return Vector3d(0.62 + 0.14 * std::sin(1.7 * p.x() + 0.4 * p.y()), 0.58 + 0.10 * std::cos(2.1 * p.y() - 0.3),
                    0.46 + 0.10 * std::sin(1.3 * (p.x() - p.y())));
  };
  auto floor_color = [](const Vector3d& p) {
    return Vector3d(0.50 + 0.10 * std::sin(2.5 * p.x()), 0.44 + 0.08 * std::sin(2.2 * p.z() + 0.7), 0.34);
  };
  return {box(Vector3d(0.0, 0.25, 1.15), Vector3d(2.0, 1.35, 0.15), wall_color),
          box(Vector3d(0.0, -0.95, 0.0), Vector3d(2.0, 0.15, 1.0), floor_color)};
}

Aabb room_bounds() { return Aabb{Vector3d(-2.0, -1.1, -1.0), Vector3d(2.0, 1.6, 1.3)}; }

void add_two_row_rig(FixtureScene& scene) {
  const FixtureOptions& o = scene.options;
  const Vector3d target(0.0, -0.25, 0.3);
  const Vector3d up(0.0, 1.0, 0.0);
  const double xs[6] = {-0.5, -0.3, -0.1, 0.1, 0.3, 0.5};
  for (int i = 0; i < 6; ++i)
    scene.rig.push_back(look_at(i, Vector3d(xs[i], 0.35, -3.4), target, up, o.focal, o.width, o.height));
  for (int i = 0; i < 6; ++i)
    scene.rig.push_back(look_at(6 + i, Vector3d(xs[5 - i], 0.05, -3.4), target, up, o.focal, o.width, o.height));
  scene.holdout.push_back(look_at(100, Vector3d(-0.2, 0.2, -3.4), target, up, o.focal, o.width, o.height));
  scene.holdout.push_back(look_at(101, Vector3d(0.2, 0.2, -3.4), target, up, o.focal, o.width, o.height));
  scene.seed_camera_ids = {0, 3, 6, 9};
}

GridShape grid_for(const Aabb& bounds, double spacing, int frames) {
  const Vector3d extent = bounds.hi - bounds.lo;
  auto count = [&](double e) { return std::max(2, static_cast<int>(std::lround(e / spacing)) + 1); };
  return GridShape{count(extent.x()), count(extent.y()), count(extent.z()), frames};
}

// Samples the soft union of the static parts and (optionally) one object
// onto the grid nodes of every frame.
RadianceField voxelize(const FixtureScene& scene, const FixtureObject* object, const Aabb& bounds) {
  const FixtureOptions& o = scene.options;
  const GridShape shape = grid_for(bounds, o.spacing, scene.frames);
  RadianceField field(shape, bounds, Vector3d(0.92, 0.92, 0.96));
  const double density_floor = 1e-4;
  for (int it = 0; it < shape.nt; ++it) {
    for (int iz = 0; iz < shape.nz; ++iz) {
      for (int iy = 0; iy < shape.ny; ++iy) {
        for (int ix = 0; ix < shape.nx; ++ix) {
          const Vector3d p = field.node_position(ix, iy, iz);
          double empty = 1.0;
          double occ_sum = 0.0;
          Vector3d color_sum = Vector3d::Zero();
          double nearest = std::numeric_limits<double>::infinity();
          Vector3d nearest_color = Vector3d::Constant(0.5);
          for (const auto& part : scene.static_parts) {
            const double d = part.sdf(p);
            const double occ = smooth_occupancy(d, o.edge_width);
            if (d < nearest) {
              nearest = d;
              nearest_color = part.color(p);
            }
            if (occ <= 0.0) continue;
            empty *= 1.0 - occ;
            occ_sum += occ;
            color_sum += occ * part.color(p);
          }
          if (object) {
            const Vector3d local = object->to_local(p, it);
            for (const auto& part : object->parts) {
              const double occ = smooth_occupancy(part.sdf(local), o.edge_width);
              if (occ <= 0.0) continue;
              empty *= 1.0 - occ;
              occ_sum += occ;
              color_sum += occ * part.color(local);
            }
          }
          const double sigma = std::max(o.sigma_max * (1.0 - empty), density_floor);
          const Vector3d color = occ_sum > 1e-9 ? Vector3d(color_sum / occ_sum) : nearest_color;
          const size_t node = field.node_index(ix, iy, iz, it);
          field.raw(node, 0) = softplus_inverse(sigma);
          for (int c = 0; c < 3; ++c) field.raw(node, 1 + c) = logit(std::clamp(color[c], 0.02, 0.98));
        }
      }
    }
  }
  return field;
}

Vector3d stripes(const Vector3d& local) {
  const double theta = std::atan2(local.z(), local.x());
  return Vector3d(0.10 + 0.06 * std::cos(2.0 * theta), 0.50 + 0.22 * std::sin(3.0 * theta),
                  0.85 - 0.08 * std::cos(theta));
}

FixtureScene cube_scene(const std::string& name, const FixtureOptions& options) {
  FixtureScene s;
  s.name = name;
  s.options = options;
  s.frames = 1;
  s.static_parts = room();
  add_two_row_rig(s);
  auto cube_color = [](const Vector3d& p) { return Vector3d(0.84 + 0.05 * p.y(), 0.20 + 0.05 * p.x(), 0.16); };
  s.original_object.parts = {box(Vector3d::Zero(), Vector3d::Constant(0.3), cube_color)};
  s.original_object.poses = {ObjectPose{Eigen::Matrix3d::Identity(), Vector3d(0.0, -0.5, 0.0)}};
  if (name == "cube-to-cylinder") {
    s.prompt = "a striped blue cylinder";
    s.new_object.parts = {cylinder(Vector3d::Zero(), 0.34, 0.55, stripes)};
    s.new_object.poses = {ObjectPose{Eigen::Matrix3d::Identity(), Vector3d(0.0, -0.25, 0.0)}};
  } else {
    s.prompt = "a yellow card";
    auto card_color = [](const Vector3d& p) { return Vector3d(0.92, 0.78 + 0.12 * p.y(), 0.18 + 0.1 * p.x()); };
    s.new_object.parts = {box(Vector3d::Zero(), Vector3d(0.42, 0.4, 0.02), card_color)};
    s.new_object.poses = {ObjectPose{Eigen::Matrix3d::Identity(), Vector3d(0.0, -0.4, -0.33)}};
  }
  return s;
}

FixtureScene sword_scene(const FixtureOptions& options) {
  FixtureScene s;
  s.name = "rotating-sword";
  s.prompt = "a steel sword";
  s.options = options;
  s.frames = options.frames > 0 ? options.frames : 3;
  s.static_parts = room();
  add_two_row_rig(s);
  s.original_object.parts = {box(Vector3d::Zero(), Vector3d(0.09, 0.45, 0.05), solid(Vector3d(0.82, 0.22, 0.18)))};
  auto blade = [](const Vector3d& p) { return Vector3d(0.55, 0.62 + 0.1 * p.y(), 0.92); };
  s.new_object.parts = {box(Vector3d(0.0, 0.08, 0.0), Vector3d(0.06, 0.40, 0.03), blade),
                        box(Vector3d(0.0, -0.32, 0.0), Vector3d(0.22, 0.04, 0.05), solid(Vector3d(0.90, 0.74, 0.20))),
                        box(Vector3d(0.0, -0.44, 0.0), Vector3d(0.04, 0.08, 0.04), solid(Vector3d(0.30, 0.18, 0.10)))};
  // Shared motion: spin about the seed camera's optical axis plus a drift
  // parallel to its image plane.
  const CameraView& seed = s.rig.front();
  const Vector3d axis = seed.optical_axis();
  const Vector3d right = seed.rotation.row(0).transpose();
  std::vector<ObjectPose> poses;
  for (int f = 0; f < s.frames; ++f) {
    const double angle = f * 15.0 * kPi / 180.0;
    ObjectPose pose;
    pose.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    pose.translation = Vector3d(-0.05, -0.2, 0.0) + 0.08 * f * right;
    poses.push_back(pose);
  }
  s.original_object.poses = poses;
  s.new_object.poses = poses;
  s.seed_camera_ids = {0, 3, 6, 9};
  return s;
}

}  // namespace

std::vector<std::string> fixture_names() { return {"cube-to-cylinder", "cube-to-card", "rotating-sword"}; }

FixtureScene make_scene(const std::string& name, const FixtureOptions& options) {
  if (!(options.spacing > 0.0) || !(options.edge_width > 0.0) || !(options.sigma_max > 0.0) || options.width < 4 ||
      options.height < 4 || !(options.focal > 0.0) || options.frames < 0)
    throw InvalidArgument("make_scene: invalid fixture options");
  FixtureScene s;
  if (name == "cube-to-cylinder" || name == "cube-to-card") {
    if (options.frames > 1) throw InvalidArgument("make_scene: " + name + " is a static fixture");
    s = cube_scene(name, options);
  } else if (name == "rotating-sword") {
    s = sword_scene(options);
  } else {
    throw InvalidArgument("make_scene: unknown fixture '" + name + "'");
  }
  const Aabb bounds = room_bounds();
  s.background_field = voxelize(s, &s.original_object, bounds);
  s.target_field = voxelize(s, &s.new_object, bounds);
  s.clean_field = voxelize(s, nullptr, bounds);
  if (s.frames > 1) s.tracks = fixture_tracks(s, s.camera(s.seed_camera()));
  return s;
}

Mask analytic_silhouette(const FixtureObject& object, const CameraView& camera, int frame, double inflate) {
  Mask mask(camera.width, camera.height);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Vector3d dir = camera.ray_direction(Eigen::Vector2d(x, y));
      double t = 0.0;
      for (int i = 0; i < 4000 && t < 20.0; ++i) {
        const double d = object.sdf(camera.position + t * dir, frame) - inflate;
        if (d < 1e-6) {
          mask.set(x, y, true);
          break;
        }
        t += std::max(d, 1e-5);
      }
    }
  }
  return mask;
}

Mask fixture_user_mask(const FixtureScene& scene, const CameraView& camera, int frame) {
  const double inflate = scene.options.edge_width + scene.options.spacing * std::sqrt(3.0);
  const Mask both = mask_union(analytic_silhouette(scene.original_object, camera, frame, inflate),
                               analytic_silhouette(scene.new_object, camera, frame, inflate));
  return dilate(both, scene.user_mask_dilation);
}

double fixture_time(const FixtureScene& scene, int frame) { return frame_time(frame, scene.frames); }

ViewRender render_original(const FixtureScene& scene, const CameraView& camera, int frame,
                           const RenderOptions& options) {
  return render_view(scene.background_field, camera, fixture_time(scene, frame), options);
}

ViewRender render_target(const FixtureScene& scene, const CameraView& camera, int frame,
                         const RenderOptions& options) {
  return render_view(scene.target_field, camera, fixture_time(scene, frame), options);
}

ViewRender render_clean(const FixtureScene& scene, const CameraView& camera, int frame, const RenderOptions& options) {
  return render_view(scene.clean_field, camera, fixture_time(scene, frame), options);
}

SceneDataset build_dataset(const FixtureScene& scene, const RenderOptions& options) {
  SceneDataset ds;
  ds.frames = scene.frames;
  ds.prompt = scene.prompt;
  for (int f = 0; f < scene.frames; ++f) {
    for (const auto& cam : scene.rig) {
      TrainingView v;
      v.id = fixture_view_id(cam.id, f);
      v.camera = cam;
      v.frame = f;
      v.rgb = render_original(scene, cam, f, options).rgb;
      v.user_mask = fixture_user_mask(scene, cam, f);
      ds.views.push_back(std::move(v));
    }
  }
  ds.seed_ids = scene.seed_camera_ids;
  for (int id : ds.seed_ids) ds.view(id).is_seed = true;
  ds.validate();
  return ds;
}

std::vector<RgbImage> clean_background_frames(const FixtureScene& scene, int camera_id,
                                              const RenderOptions& options) {
  std::vector<RgbImage> frames;
  const CameraView& cam = scene.camera(camera_id);
  for (int f = 0; f < scene.frames; ++f) frames.push_back(render_clean(scene, cam, f, options).rgb);
  return frames;
}

Mask difference_key(const RgbImage& image, const RgbImage& clean, double threshold, const Mask* within) {
  if (!image.same_shape(clean)) throw InvalidArgument("difference_key: shape mismatch");
  if (within && (within->width != image.width || within->height != image.height))
    throw InvalidArgument("difference_key: mask shape mismatch");
  Mask m(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (within && !within->at(x, y)) continue;
      double diff = 0.0;
      for (int c = 0; c < image.channels; ++c) diff = std::max(diff, std::abs(image.at(x, y, c) - clean.at(x, y, c)));
      m.set(x, y, diff > threshold);
    }
  }
  return m;
}

ObjectSegmenter make_difference_segmenter(std::shared_ptr<const FixtureScene> scene, const RenderOptions& options,
                                          double threshold) {
  auto cache = std::make_shared<std::map<int, RgbImage>>();
  auto mutex = std::make_shared<std::mutex>();
  return [scene, options, threshold, cache, mutex](const TrainingView& view,
                                                   const RgbImage& inpainted) -> std::optional<Mask> {
    RgbImage clean;
    {
      std::lock_guard lock(*mutex);
      auto it = cache->find(view.id);
      if (it == cache->end())
        it = cache->emplace(view.id, render_clean(*scene, view.camera, view.frame, options).rgb).first;
      clean = it->second;
    }
    return difference_key(inpainted, clean, threshold, &view.user_mask);
  };
}

ViewCatalog::ViewCatalog(const SceneDataset& dataset) {
  for (const auto& v : dataset.views) add(v.id, v.camera, v.frame);
}

void ViewCatalog::add(int view_id, const CameraView& camera, int frame) { entries_[view_id] = {camera, frame}; }

const CameraView& ViewCatalog::camera(int view_id) const {
  auto it = entries_.find(view_id);
  if (it == entries_.end()) throw InvalidArgument("unknown view " + std::to_string(view_id));
  return it->second.first;
}

int ViewCatalog::frame(int view_id) const {
  auto it = entries_.find(view_id);
  if (it == entries_.end()) throw InvalidArgument("unknown view " + std::to_string(view_id));
  return it->second.second;
}

OracleCorrector::OracleCorrector(std::shared_ptr<const FixtureScene> scene, ViewCatalog catalog,
                                 RenderOptions options)
    : scene_(std::move(scene)), catalog_(std::move(catalog)), options_(options) {
  if (!scene_) throw InvalidArgument("OracleCorrector: null scene");
}

const OracleCorrector::Entry& OracleCorrector::entry(int view_id) const {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(view_id);
  if (it != cache_.end()) return *it->second;
  const CameraView& cam = catalog_.camera(view_id);
  const int frame = catalog_.frame(view_id);
  auto e = std::make_unique<Entry>();
  e->image = render_target(*scene_, cam, frame, options_).rgb;
  e->object_mask = difference_key(e->image, render_clean(*scene_, cam, frame, options_).rgb, kKeyThreshold);
  return *cache_.emplace(view_id, std::move(e)).first->second;
}

const RgbImage& OracleCorrector::truth(int view_id) const { return entry(view_id).image; }
const Mask& OracleCorrector::truth_mask(int view_id) const { return entry(view_id).object_mask; }

CorrectorResponse OracleCorrector::correct(const CorrectorRequest& request) const {
  request.validate();
  const double lambda = request.noise_level;
  CorrectorResponse out{request.image, std::nullopt};
  if (lambda == 0.0) return out;
  const Entry& e = entry(request.view_id);
  if (!e.image.same_shape(request.image))
    throw CorrectorError(request.view_id, "oracle: request size differs from the fixture camera");
  for (int y = 0; y < request.image.height; ++y)
    for (int x = 0; x < request.image.width; ++x)
      if (request.mask.at(x, y))
        for (int c = 0; c < 3; ++c)
          out.image.at(x, y, c) = (1.0 - lambda) * request.image.at(x, y, c) + lambda * e.image.at(x, y, c);
  out.object_mask = mask_intersection(e.object_mask, request.mask);
  return out;
}

JitterCorrector::JitterCorrector(uint64_t seed, double amplitude, int cell, std::shared_ptr<const Corrector> base)
    : seed_(seed), amplitude_(amplitude), cell_(cell), base_(std::move(base)) {
  if (cell_ < 1 || !(amplitude_ >= 0.0)) throw InvalidArgument("JitterCorrector: invalid parameters");
}

CorrectorResponse JitterCorrector::correct(const CorrectorRequest& request) const {
  request.validate();
  const double lambda = request.noise_level;
  CorrectorResponse out{request.image, std::nullopt};
  if (lambda == 0.0) return out;

  RgbImage content = request.image;
  if (base_) {
    CorrectorRequest full = request;
    full.noise_level = 1.0;
    CorrectorResponse base = base_->correct(full);
    content = std::move(base.image);
    out.object_mask = std::move(base.object_mask);
  }

  const uint64_t key = derive_seed(seed_, request.rng_seed, static_cast<uint64_t>(request.view_id),
                                   static_cast<uint64_t>(request.frame));
  auto lattice = [&](int gx, int gy, int c) {
    const uint64_t h = derive_seed(key, static_cast<uint64_t>(gx), static_cast<uint64_t>(gy), static_cast<uint64_t>(c));
    return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
  };
  for (int y = 0; y < request.image.height; ++y) {
    for (int x = 0; x < request.image.width; ++x) {
      if (!request.mask.at(x, y)) continue;
      const double fx = static_cast<double>(x) / cell_, fy = static_cast<double>(y) / cell_;
      const int gx = static_cast<int>(std::floor(fx)), gy = static_cast<int>(std::floor(fy));
      const double ax = fx - gx, ay = fy - gy;
      for (int c = 0; c < 3; ++c) {
        const double n = (1 - ax) * (1 - ay) * lattice(gx, gy, c) + ax * (1 - ay) * lattice(gx + 1, gy, c) +
                         (1 - ax) * ay * lattice(gx, gy + 1, c) + ax * ay * lattice(gx + 1, gy + 1, c);
        const double v = std::clamp(content.at(x, y, c) + amplitude_ * n, 0.0, 1.0);
        out.image.at(x, y, c) = (1.0 - lambda) * request.image.at(x, y, c) + lambda * v;
      }
    }
  }
  return out;
}

KeypointTracks fixture_tracks(const FixtureScene& scene, const CameraView& camera) {
  std::vector<Vector3d> local;
  {
    Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (const auto& part : scene.original_object.parts) {
      lo = lo.cwiseMin(part.center - part.half_extents);
      hi = hi.cwiseMax(part.center + part.half_extents);
      local.push_back(part.center);
    }
    for (int i = 0; i < 8; ++i)
      local.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  KeypointTracks tracks;
  tracks.num_points = static_cast<int>(local.size());
  tracks.num_frames = scene.frames;
  tracks.source_view = camera.id;
  for (const auto& p : local) {
    for (int f = 0; f < scene.frames; ++f) {
      const Projection proj = project_point(camera, scene.original_object.to_world(p, f));
      const bool inside = proj.depth > 0.0 && proj.pixel.x() >= 0.0 && proj.pixel.y() >= 0.0 &&
                          proj.pixel.x() <= camera.width - 1 && proj.pixel.y() <= camera.height - 1;
      tracks.points.push_back(proj.pixel);
      tracks.visibility.push_back(inside ? 1 : 0);
    }
  }
  return tracks;
}

}  // namespace seedfill
