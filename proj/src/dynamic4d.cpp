#include "seedfill/dynamic4d.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "seedfill/errors.hpp"

namespace seedfill {

using Eigen::Matrix2d;
using Eigen::Vector2d;

void KeypointTracks::validate(int width, int height) const {
  if (num_points < 1 || num_frames < 1) throw InvalidArgument("tracks: need at least one point and one frame");
  const size_t n = static_cast<size_t>(num_points) * num_frames;
  if (points.size() != n || visibility.size() != n) throw InvalidArgument("tracks: array sizes do not match K x F");
  for (size_t i = 0; i < n; ++i) {
    if (!visibility[i]) continue;
    const Vector2d& p = points[i];
    if (!std::isfinite(p.x()) || !std::isfinite(p.y()) || p.x() < 0.0 || p.y() < 0.0 || p.x() > width - 1 ||
        p.y() > height - 1)
      throw InvalidArgument("tracks: visible point outside the image");
  }
}

KeypointTracks load_tracks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open track file " + path);
  nlohmann::json j;
  try {
    in >> j;
    KeypointTracks t;
    t.num_points = j.at("num_points").get<int>();
    t.num_frames = j.at("num_frames").get<int>();
    t.source_view = j.at("source_view").get<int>();
    const auto& pts = j.at("points");
    const auto& vis = j.at("visibility");
    if (!pts.is_array() || static_cast<int>(pts.size()) != t.num_points || !vis.is_array() ||
        static_cast<int>(vis.size()) != t.num_points)
      throw InvalidArgument("tracks: expected one entry per point");
    for (int k = 0; k < t.num_points; ++k) {
      if (static_cast<int>(pts[k].size()) != t.num_frames || static_cast<int>(vis[k].size()) != t.num_frames)
        throw InvalidArgument("tracks: expected one entry per frame");
      for (int f = 0; f < t.num_frames; ++f) {
        t.points.emplace_back(pts[k][f].at(0).get<double>(), pts[k][f].at(1).get<double>());
        t.visibility.push_back(vis[k][f].get<int>() ? 1 : 0);
      }
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed track file " + path + ": " + e.what());
  }
}

void save_tracks(const KeypointTracks& tracks, const std::string& path) {
  nlohmann::json j;
  j["num_points"] = tracks.num_points;
  j["num_frames"] = tracks.num_frames;
  j["source_view"] = tracks.source_view;
  j["points"] = nlohmann::json::array();
  j["visibility"] = nlohmann::json::array();
  for (int k = 0; k < tracks.num_points; ++k) {
    nlohmann::json row = nlohmann::json::array(), vis = nlohmann::json::array();
    for (int f = 0; f < tracks.num_frames; ++f) {
      const Vector2d& p = tracks.at(k, f);
      row.push_back({p.x(), p.y()});
      vis.push_back(tracks.visible(k, f) ? 1 : 0);
    }
    j["points"].push_back(row);
    j["visibility"].push_back(vis);
  }
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write track file " + path);
  out << j.dump(1) << "\n";
}

SimilarityTransform2D SimilarityTransform2D::inverse() const {
  SimilarityTransform2D inv;
  inv.rotation = rotation.transpose();
  inv.scale = 1.0 / scale;
  inv.translation = -(inv.scale * (inv.rotation * translation));
  return inv;
}

SimilarityTransform2D SimilarityTransform2D::compose(const SimilarityTransform2D& other) const {
  SimilarityTransform2D out;
  out.rotation = rotation * other.rotation;
  out.scale = scale * other.scale;
  out.translation = scale * (rotation * other.translation) + translation;
  return out;
}

double SimilarityTransform2D::angle() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

SimilarityTransform2D estimate_rigid_transform(std::span<const Vector2d> src, std::span<const Vector2d> dst,
                                               bool allow_scale) {
  if (src.size() != dst.size()) throw InvalidArgument("estimate_rigid_transform: point counts differ");
  const size_t min_points = allow_scale ? 3 : 2;
  if (src.size() < min_points)
    throw InvalidArgument("estimate_rigid_transform: need at least " + std::to_string(min_points) + " points");
  const double n = static_cast<double>(src.size());
  Vector2d mu_s = Vector2d::Zero(), mu_d = Vector2d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  Matrix2d cov = Matrix2d::Zero();   // sum of x y^T
  Matrix2d spread = Matrix2d::Zero();  // sum of x x^T
  double var_s = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    const Vector2d x = src[i] - mu_s;
    const Vector2d y = dst[i] - mu_d;
    cov += x * y.transpose();
    spread += x * x.transpose();
    var_s += x.squaredNorm();
  }
  const double extent = std::max({1.0, mu_s.norm(), std::sqrt(var_s / n)});
  if (var_s <= 1e-20 * extent * extent * n)
    throw DegenerateConfiguration("estimate_rigid_transform: source points are coincident");
  if (allow_scale) {
    Eigen::JacobiSVD<Matrix2d> sv(spread);
    if (sv.singularValues()(1) <= 1e-12 * sv.singularValues()(0))
      throw DegenerateConfiguration("estimate_rigid_transform: collinear points with scale estimation");
  }

  Eigen::JacobiSVD<Matrix2d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix2d& U = svd.matrixU();
  const Matrix2d& V = svd.matrixV();
  Matrix2d D = Matrix2d::Identity();
  D(1, 1) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  SimilarityTransform2D t;
  t.rotation = V * D * U.transpose();
  if (allow_scale) t.scale = (svd.singularValues().asDiagonal() * D).trace() / var_s;
  t.translation = mu_d - t.scale * (t.rotation * mu_s);
  double sq = 0.0;
  for (size_t i = 0; i < src.size(); ++i) sq += (t.apply(src[i]) - dst[i]).squaredNorm();
  t.residual_rms = std::sqrt(sq / n);
  return t;
}

SeedVideo build_seed_video(const SceneDataset& dataset, int seed_camera_id,
                           const std::vector<RgbImage>& clean_background_frames, const KeypointTracks& tracks,
                           const RgbImage& frame0_seed, const Mask& frame0_object_mask, const SeedVideoOptions& options) {
  const int frames = dataset.frames;
  if (static_cast<int>(clean_background_frames.size()) != frames)
    throw InvalidArgument("build_seed_video: need one clean background frame per frame");
  if (tracks.num_frames != frames) throw InvalidArgument("build_seed_video: track length differs from frame count");
  const auto v0 = dataset.find_view(seed_camera_id, 0);
  if (!v0) throw InvalidArgument("build_seed_video: seed camera has no frame-0 view");
  const TrainingView& seed0 = dataset.view(*v0);
  tracks.validate(seed0.width(), seed0.height());
  if (!frame0_seed.same_shape(seed0.rgb) || frame0_object_mask.width != seed0.width() ||
      frame0_object_mask.height != seed0.height())
    throw InvalidArgument("build_seed_video: frame-0 seed shape mismatch");

  SeedVideo video;
  video.camera_id = seed_camera_id;
  SimilarityTransform2D previous;
  for (int f = 0; f < frames; ++f) {
    const auto vid = dataset.find_view(seed_camera_id, f);
    if (!vid) throw InvalidArgument("build_seed_video: seed camera missing frame " + std::to_string(f));
    const TrainingView& view = dataset.view(*vid);
    if (!clean_background_frames[f].same_shape(view.rgb))
      throw InvalidArgument("build_seed_video: clean background shape mismatch");

    SimilarityTransform2D motion;
    if (f > 0) {
      std::vector<Vector2d> src, dst;
      for (int k = 0; k < tracks.num_points; ++k) {
        if (!tracks.visible(k, 0) || !tracks.visible(k, f)) continue;
        src.push_back(tracks.at(k, 0));
        dst.push_back(tracks.at(k, f));
      }
      if (static_cast<int>(src.size()) < std::max(options.min_points, options.allow_scale ? 3 : 2)) {
        std::cerr << "warning: frame " << f << " has " << src.size()
                  << " visible track points; holding the previous motion\n";
        motion = previous;
        video.held_frames.push_back(f);
      } else {
        motion = estimate_rigid_transform(src, dst, options.allow_scale);
      }
    }
    previous = motion;

    const SimilarityTransform2D back = motion.inverse();
    RgbImage image = view.rgb;
    Mask object(view.width(), view.height());
    for (int y = 0; y < view.height(); ++y) {
      for (int x = 0; x < view.width(); ++x) {
        if (!view.user_mask.at(x, y)) continue;
        const Vector2d q = back.apply(Vector2d(x, y));
        const long qx = std::lround(q.x()), qy = std::lround(q.y());
        const bool hit = qx >= 0 && qy >= 0 && qx < view.width() && qy < view.height() &&
                         frame0_object_mask.at(static_cast<int>(qx), static_cast<int>(qy));
        for (int c = 0; c < 3; ++c)
          image.at(x, y, c) = hit ? sample_bilinear(frame0_seed, q.x(), q.y(), c) : clean_background_frames[f].at(x, y, c);
        object.set(x, y, hit);
      }
    }
    video.images.push_back(std::move(image));
    video.object_masks.push_back(std::move(object));
    video.motions.push_back(motion);
  }
  return video;
}

void inpaint_frame_views(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                         const Corrector& corrector, const Codec& codec, const SeedVideo& video, int frame,
                         double plane_depth0, const PreprocessConfig& config, const ObjectSegmenter& segmenter) {
  if (frame < 1 || frame >= dataset.frames || frame >= static_cast<int>(video.images.size()))
    throw InvalidArgument("inpaint_frame_views: frame out of range");
  const auto seed_id = dataset.find_view(video.camera_id, frame);
  if (!seed_id) throw InvalidArgument("inpaint_frame_views: no seed view for frame " + std::to_string(frame));
  ensure_original_depth(dataset, state, field, dataset.view_ids_for_frame(frame), config.render);

  TrainingView& seed = dataset.view(*seed_id);
  seed.is_seed = true;
  CorrectionResult res =
      correct_image(video.images[frame], seed, state.original_depth.at(*seed_id), config.lambda_seed, corrector,
                    dataset.prompt,
                    derive_seed(config.rng_seed, 5, static_cast<uint64_t>(*seed_id), static_cast<uint64_t>(frame)));
  seed.inpainted_rgb = std::move(res.image);
  seed.object_mask = res.object_mask ? std::move(res.object_mask) : video.object_masks[frame];
  state.depth[*seed_id] = compose_two_layer_depth(
      inpaint_background_depth(state.original_depth.at(*seed_id), seed.user_mask), plane_depth0, *seed.object_mask);
  ViewProvenance prov;
  prov.noise_level = config.lambda_seed;
  prov.stage = "seed-video";
  state.provenance[*seed_id] = prov;

  generate_other_views(dataset, state, field, corrector, codec, config, segmenter, frame,
                       std::vector<int>{*seed_id});
}

SeedVideo preprocess_dynamic(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                             const Corrector& corrector, const Codec& codec,
                             const std::vector<RgbImage>& clean_background_frames, const KeypointTracks& tracks,
                             const PreprocessConfig& config, const ObjectSegmenter& segmenter,
                             const SeedVideoOptions& video_options) {
  preprocess_static(dataset, state, field, corrector, codec, config, segmenter);
  if (config.independent) {
    for (int f = 1; f < dataset.frames; ++f)
      generate_independent_views(dataset, state, field, corrector, config, segmenter, f);
  }
  const int first = config.independent ? dataset.view_ids_for_frame(0).front() : dataset.seed_ids.front();
  const TrainingView& seed0 = dataset.view(first);
  if (dataset.frames == 1 || config.independent) {
    SeedVideo video;
    video.camera_id = seed0.camera.id;
    if (seed0.inpainted_rgb) video.images.push_back(*seed0.inpainted_rgb);
    if (seed0.object_mask) video.object_masks.push_back(*seed0.object_mask);
    video.motions.emplace_back();
    return video;
  }
  if (!seed0.object_mask) throw MissingObjectMask(seed0.id);
  SeedVideo video = build_seed_video(dataset, seed0.camera.id, clean_background_frames, tracks, *seed0.inpainted_rgb,
                                     *seed0.object_mask, video_options);
  const double plane0 = state.depth.at(seed0.id).object_plane_depth;
  for (int f = 1; f < dataset.frames; ++f)
    inpaint_frame_views(dataset, state, field, corrector, codec, video, f, plane0, config, segmenter);
  return video;
}

}  // namespace seedfill
