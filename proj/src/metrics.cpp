#include "seedfill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seedfill/errors.hpp"

namespace seedfill {

namespace {

std::optional<double> time_of(const RadianceField& field, const SceneDataset& dataset, int frame) {
  if (!field.is_dynamic()) return std::nullopt;
  return frame_time(frame, dataset.frames);
}

Mask complement(const Mask& m) {
  Mask out(m.width, m.height);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] ? 0 : 1;
  return out;
}

}  // namespace

ViewImages render_views(const RadianceField& field, const SceneDataset& dataset, const RenderOptions& options) {
  ViewImages out;
  for (const auto& v : dataset.views)
    out[v.id] = render_view(field, v.camera, time_of(field, dataset, v.frame), options).rgb;
  return out;
}

namespace {

struct Truth {
  DepthMap depth;
  Mask has_depth;
  Mask object;
};

std::map<int, Truth> truth_layers(const FixtureScene& scene, const SceneDataset& dataset, const EvalOptions& options) {
  std::map<int, Truth> truth;
  for (const auto& v : dataset.views) {
    ViewRender r = render_target(scene, v.camera, v.frame, options.render);
    truth[v.id] = Truth{std::move(r.depth), std::move(r.has_depth),
                        analytic_silhouette(scene.new_object, v.camera, v.frame)};
  }
  return truth;
}

// Accumulates |src - dst| over the new-object pixels of `v` whose mapped
// world point is visible in `w`.
template <class MapPoint>
void accumulate_warp(const TrainingView& v, const TrainingView& w, const Truth& ts, const Truth& td,
                     const RgbImage& src, const RgbImage& dst, const EvalOptions& options, MapPoint map_point,
                     double& sum, size_t& count) {
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      if (!ts.object.at(x, y) || !ts.has_depth.at(x, y)) continue;
      const Eigen::Vector3d world = map_point(unproject_pixel(v.camera, Eigen::Vector2d(x, y), ts.depth.at(x, y)));
      const Projection p = project_point(w.camera, world);
      if (!(p.depth > 0.0)) continue;
      const long qx = std::lround(p.pixel.x()), qy = std::lround(p.pixel.y());
      if (qx < 0 || qy < 0 || qx >= w.width() || qy >= w.height()) continue;
      const int ix = static_cast<int>(qx), iy = static_cast<int>(qy);
      if (!td.has_depth.at(ix, iy)) continue;
      if (std::abs(td.depth.at(ix, iy) - p.depth) > options.visibility_tolerance * p.depth) continue;
      for (int c = 0; c < 3; ++c) sum += std::abs(src.at(x, y, c) - dst.at(ix, iy, c));
      count += 3;
    }
  }
}

}  // namespace

double cross_view_inconsistency(const FixtureScene& scene, const SceneDataset& dataset, const ViewImages& images,
                                const EvalOptions& options) {
  const std::map<int, Truth> truth = truth_layers(scene, dataset, options);
  double sum = 0.0;
  size_t count = 0;
  for (const auto& v : dataset.views) {
    std::vector<CameraView> pool;
    std::map<int, int> view_of_camera;
    for (int id : dataset.view_ids_for_frame(v.frame)) {
      if (id == v.id) continue;
      pool.push_back(dataset.view(id).camera);
      view_of_camera[dataset.view(id).camera.id] = id;
    }
    if (pool.empty()) continue;
    const int nb = view_of_camera.at(nearest_neighbors(v.camera, pool, 1).front().id);
    accumulate_warp(v, dataset.view(nb), truth.at(v.id), truth.at(nb), images.at(v.id), images.at(nb), options,
                    [](const Eigen::Vector3d& p) { return p; }, sum, count);
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double temporal_inconsistency(const FixtureScene& scene, const SceneDataset& dataset, const ViewImages& images,
                              const EvalOptions& options) {
  if (dataset.frames < 2) return 0.0;
  const std::map<int, Truth> truth = truth_layers(scene, dataset, options);
  double sum = 0.0;
  size_t count = 0;
  for (const auto& v : dataset.views) {
    if (v.frame + 1 >= dataset.frames) continue;
    const auto next = std::find_if(dataset.views.begin(), dataset.views.end(), [&](const TrainingView& o) {
      return o.frame == v.frame + 1 && o.camera.id == v.camera.id;
    });
    if (next == dataset.views.end()) continue;
    const FixtureObject& obj = scene.new_object;
    accumulate_warp(v, *next, truth.at(v.id), truth.at(next->id), images.at(v.id), images.at(next->id), options,
                    [&](const Eigen::Vector3d& p) { return obj.to_world(obj.to_local(p, v.frame), v.frame + 1); },
                    sum, count);
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double masked_depth_rmse(const FixtureScene& scene, const RadianceField& field, const SceneDataset& dataset,
                         const EvalOptions& options) {
  double sq = 0.0;
  size_t n = 0;
  for (const auto& v : dataset.views) {
    const ViewRender r = render_view(field, v.camera, time_of(field, dataset, v.frame), options.render);
    const ViewRender t = render_target(scene, v.camera, v.frame, options.render);
    for (int y = 0; y < v.height(); ++y) {
      for (int x = 0; x < v.width(); ++x) {
        if (!v.user_mask.at(x, y) || !r.has_depth.at(x, y) || !t.has_depth.at(x, y)) continue;
        const double d = r.depth.at(x, y) - t.depth.at(x, y);
        sq += d * d;
        ++n;
      }
    }
  }
  return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

EvalReport evaluate_fixture(const FixtureScene& scene, const RadianceField& field, const SceneDataset& dataset,
                            const ViewImages* training_images, const EvalOptions& options) {
  if (dataset.frames != scene.frames) throw InvalidArgument("evaluate_fixture: frame count differs from the fixture");
  EvalReport report;
  double bg_sum = 0.0;
  size_t bg_views = 0;
  report.frame_psnr_min.assign(static_cast<size_t>(scene.frames), std::numeric_limits<double>::infinity());
  double psnr_sum = 0.0;
  report.holdout_psnr_min = std::numeric_limits<double>::infinity();
  for (int f = 0; f < scene.frames; ++f) {
    for (const auto& cam : scene.holdout) {
      const ViewRender r = render_view(field, cam, time_of(field, dataset, f), options.render);
      const RgbImage truth = render_target(scene, cam, f, options.render).rgb;
      const RgbImage original = render_original(scene, cam, f, options.render).rgb;
      ViewScore s{cam.id, f, psnr(r.rgb, truth),
                  masked_mean_abs(r.rgb, original, complement(fixture_user_mask(scene, cam, f)))};
      report.frame_psnr_min[f] = std::min(report.frame_psnr_min[f], s.psnr);
      report.holdout_psnr_min = std::min(report.holdout_psnr_min, s.psnr);
      psnr_sum += s.psnr;
      bg_sum += s.background_l1;
      ++bg_views;
      report.holdout.push_back(s);
    }
  }
  if (!report.holdout.empty()) report.holdout_psnr_mean = psnr_sum / static_cast<double>(report.holdout.size());

  const ViewImages renders = render_views(field, dataset, options.render);
  for (const auto& v : dataset.views) {
    const RgbImage original = render_original(scene, v.camera, v.frame, options.render).rgb;
    bg_sum += masked_mean_abs(renders.at(v.id), original, complement(v.user_mask));
    ++bg_views;
  }
  report.background_l1 = bg_views ? bg_sum / static_cast<double>(bg_views) : 0.0;
  report.render_inconsistency = cross_view_inconsistency(scene, dataset, renders, options);
  if (training_images) report.image_inconsistency = cross_view_inconsistency(scene, dataset, *training_images, options);
  report.render_temporal_inconsistency = temporal_inconsistency(scene, dataset, renders, options);
  if (training_images)
    report.image_temporal_inconsistency = temporal_inconsistency(scene, dataset, *training_images, options);
  report.masked_depth_rmse = masked_depth_rmse(scene, field, dataset, options);
  return report;
}

}  // namespace seedfill
