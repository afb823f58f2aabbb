#include "seedfill/projection_correction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "seedfill/errors.hpp"
#include "seedfill/parallel.hpp"

namespace seedfill {

ProjectionResult forward_warp(const TrainingView& src, const TwoLayerDepth& src_depth, const TrainingView& dst,
                              const WarpOptions& options) {
  if (!src.inpainted_rgb) throw InvalidState("forward_warp: source view " + std::to_string(src.id) + " is not inpainted");
  if (src_depth.composite.width != src.width() || src_depth.composite.height != src.height())
    throw InvalidArgument("forward_warp: source depth shape mismatch");
  const int s = std::max(1, options.subsamples);
  ProjectionResult out{dst.rgb, Mask(dst.width(), dst.height()), src.id};
  std::vector<double> zbuf(static_cast<size_t>(dst.width()) * dst.height(), std::numeric_limits<double>::infinity());
  const RgbImage& colors = *src.inpainted_rgb;

  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (!src.user_mask.at(x, y)) continue;
      const double d = src_depth.composite.at(x, y);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      for (int j = 0; j < s; ++j) {
        for (int i = 0; i < s; ++i) {
          const Eigen::Vector2d px(x + (i + 0.5) / s - 0.5, y + (j + 0.5) / s - 0.5);
          const Projection p = project_point(dst.camera, unproject_pixel(src.camera, px, d));
          if (!(p.depth > 0.0)) continue;
          const long qx = std::lround(p.pixel.x());
          const long qy = std::lround(p.pixel.y());
          if (qx < 0 || qy < 0 || qx >= dst.width() || qy >= dst.height()) continue;
          const int ix = static_cast<int>(qx), iy = static_cast<int>(qy);
          if (!dst.user_mask.at(ix, iy)) continue;
          double& z = zbuf[static_cast<size_t>(iy) * dst.width() + ix];
          if (p.depth >= z) continue;
          z = p.depth;
          for (int c = 0; c < 3; ++c) out.image.at(ix, iy, c) = colors.at(x, y, c);
          out.coverage.set(ix, iy, true);
        }
      }
    }
  }
  return out;
}

RgbImage blend_projections(const std::vector<ProjectionResult>& projections, const std::vector<double>& weights,
                           BlendSpace space, const Codec& codec, const RgbImage& target, const Mask& target_mask) {
  if (projections.empty() || projections.size() != weights.size())
    throw InvalidArgument("blend_projections: need one weight per projection");
  double total = 0.0;
  for (double w : weights) total += w;
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("blend_projections: weights must sum to 1");
  for (const auto& p : projections)
    if (!p.image.same_shape(target)) throw InvalidArgument("blend_projections: projection shape mismatch");

  RgbImage out = target;
  const auto positive = std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; });
  if (positive == 1) {
    // A one-hot blend is the projection itself in either space.
    const size_t k = static_cast<size_t>(
        std::find_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }) - weights.begin());
    for (int y = 0; y < target.height; ++y)
      for (int x = 0; x < target.width; ++x)
        if (target_mask.at(x, y) && projections[k].coverage.at(x, y))
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = projections[k].image.at(x, y, c);
  } else if (space == BlendSpace::Image) {
    for (int y = 0; y < target.height; ++y) {
      for (int x = 0; x < target.width; ++x) {
        if (!target_mask.at(x, y)) continue;
        double wsum = 0.0;
        double acc[3] = {0, 0, 0};
        for (size_t k = 0; k < projections.size(); ++k) {
          if (!projections[k].coverage.at(x, y)) continue;
          wsum += weights[k];
          for (int c = 0; c < 3; ++c) acc[c] += weights[k] * projections[k].image.at(x, y, c);
        }
        if (wsum <= 0.0) continue;
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = acc[c] / wsum;
      }
    }
  } else {
    std::vector<LatentCode> codes;
    codes.reserve(projections.size());
    for (const auto& p : projections) codes.push_back(codec.encode(p.image));
    const RgbImage decoded = codec.decode(combine_codes(codes, weights));
    for (int y = 0; y < target.height; ++y)
      for (int x = 0; x < target.width; ++x)
        if (target_mask.at(x, y))
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = decoded.at(x, y, c);
  }
  clamp_unit(out);
  return out;
}

CorrectionResult correct_image(const RgbImage& raw, const TrainingView& view, const DepthMap& depth,
                               double noise_level, const Corrector& corrector, const std::string& prompt,
                               uint64_t rng_seed) {
  if (!(noise_level >= 0.0 && noise_level <= 1.0)) throw InvalidArgument("correct_image: noise level outside [0,1]");
  if (noise_level == 0.0) return {raw, std::nullopt};
  CorrectorRequest request{raw, view.user_mask, depth, prompt, noise_level, rng_seed, view.id, view.frame};
  CorrectorResponse response;
  try {
    response = corrector.correct(request);
  } catch (const CorrectorError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorrectorError(view.id, std::string(corrector.name()) + " failed: " + e.what());
  }
  response = enforce_contract(request, std::move(response));
  return {std::move(response.image), std::move(response.object_mask)};
}

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b, uint64_t c) {
  auto mix = [](uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  uint64_t h = mix(base);
  h = mix(h ^ a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  return h;
}

void ensure_original_depth(const SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                           const std::vector<int>& view_ids, const RenderOptions& render) {
  for (int id : view_ids) {
    if (state.original_depth.count(id)) continue;
    const TrainingView& v = dataset.view(id);
    state.original_depth[id] = render_view(field, v.camera, frame_time(v.frame, dataset.frames), render).depth;
  }
}

namespace {

enum Stage : uint64_t { kSeedStage = 1, kOtherStage = 2, kIndependentStage = 3 };

struct ViewOutcome {
  RgbImage image;
  std::optional<Mask> object_mask;
  ViewProvenance provenance;
};

}  // namespace

void commit_view(SceneDataset& dataset, PreprocessState& state, int view_id, RgbImage image,
                 std::optional<Mask> object_mask, ViewProvenance provenance, const ObjectSegmenter& segmenter,
                 const std::optional<Mask>& fallback_mask) {
  TrainingView& view = dataset.view(view_id);
  view.inpainted_rgb = std::move(image);
  if (object_mask) {
    view.object_mask = std::move(object_mask);
  } else if (auto m = segmenter ? segmenter(view, *view.inpainted_rgb) : std::nullopt) {
    view.object_mask = std::move(m);
  } else if (fallback_mask) {
    view.object_mask = fallback_mask;
  } else {
    view.object_mask.reset();
  }
  state.depth[view_id] = build_two_layer_depth(view, state.original_depth.at(view_id));
  state.provenance[view_id] = std::move(provenance);
}

void generate_seed_images(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                          const Corrector& corrector, const Codec& /*codec*/, const PreprocessConfig& config,
                          const ObjectSegmenter& segmenter) {
  if (dataset.seed_ids.empty()) throw InvalidArgument("generate_seed_images: no seed views configured");
  ensure_original_depth(dataset, state, field, dataset.seed_ids, config.render);

  for (size_t i = 0; i < dataset.seed_ids.size(); ++i) {
    const int id = dataset.seed_ids[i];
    TrainingView& view = dataset.view(id);
    view.is_seed = true;
    ViewOutcome outcome;
    outcome.provenance.stage = "seed";
    RgbImage raw = view.rgb;
    double lambda = config.lambda_seed0;
    if (i > 0) {
      const int prev = dataset.seed_ids[i - 1];
      // One source only: the previous seed in the chain.
      ProjectionResult proj = forward_warp(dataset.view(prev), state.depth.at(prev), view, config.warp);
      if (proj.coverage.any()) {
        raw = std::move(proj.image);
        lambda = config.lambda_seed;
        outcome.provenance.source_views = {prev};
        outcome.provenance.weights = {1.0};
      } else {
        outcome.provenance.fallback = true;
      }
    }
    CorrectionResult res = correct_image(raw, view, state.original_depth.at(id), lambda, corrector, dataset.prompt,
                                         derive_seed(config.rng_seed, kSeedStage, static_cast<uint64_t>(id),
                                                     static_cast<uint64_t>(view.frame)));
    outcome.image = std::move(res.image);
    outcome.object_mask = std::move(res.object_mask);
    outcome.provenance.noise_level = lambda;
    commit_view(dataset, state, id, std::move(outcome.image), std::move(outcome.object_mask),
                std::move(outcome.provenance), segmenter);
  }
}

void generate_other_views(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                          const Corrector& corrector, const Codec& codec, const PreprocessConfig& config,
                          const ObjectSegmenter& segmenter, int frame, std::optional<std::vector<int>> seed_views) {
  const std::vector<int> seeds = seed_views.value_or(dataset.seed_ids);
  if (seeds.empty()) throw InvalidArgument("generate_other_views: no seed views");
  std::vector<CameraView> pool;
  std::map<int, int> seed_by_camera;
  for (int s : seeds) {
    const TrainingView& v = dataset.view(s);
    if (!v.inpainted_rgb || !state.depth.count(s))
      throw InvalidState("generate_other_views: seed view " + std::to_string(s) + " is not inpainted");
    pool.push_back(v.camera);
    seed_by_camera[v.camera.id] = s;
  }
  const std::set<int> seed_set(seeds.begin(), seeds.end());
  std::vector<int> targets;
  for (int id : dataset.view_ids_for_frame(frame))
    if (!seed_set.count(id)) targets.push_back(id);
  ensure_original_depth(dataset, state, field, targets, config.render);

  const SceneDataset& ds = dataset;
  const PreprocessState& st = state;
  auto process = [&](size_t k) {
    const TrainingView& view = ds.view(targets[k]);
    const auto neighbors = nearest_neighbors(view.camera, pool, config.neighbors);
    const auto weights = compute_view_weights(view.camera, neighbors);

    std::vector<ProjectionResult> projections;
    std::vector<double> used_weights;
    ViewOutcome outcome;
    outcome.provenance.stage = "propagated";
    bool coincident = false;
    std::optional<Mask> coincident_mask;
    for (size_t n = 0; n < neighbors.size(); ++n) {
      if (weights[n] <= 0.0) continue;
      const int src = seed_by_camera.at(neighbors[n].id);
      if (weights[n] == 1.0 && camera_distance(view.camera, neighbors[n]) < 1e-9) {
        coincident = true;
        coincident_mask = ds.view(src).object_mask;
      }
      projections.push_back(forward_warp(ds.view(src), st.depth.at(src), view, config.warp));
      used_weights.push_back(weights[n]);
      outcome.provenance.source_views.push_back(src);
      outcome.provenance.weights.push_back(weights[n]);
    }

    const bool covered = std::any_of(projections.begin(), projections.end(),
                                     [](const ProjectionResult& p) { return p.coverage.any(); });
    RgbImage raw = view.rgb;
    double lambda = config.lambda_seed0;
    if (covered) {
      raw = blend_projections(projections, used_weights, config.blend_space, codec, view.rgb, view.user_mask);
      lambda = coincident ? 0.0 : config.lambda_nonseed;
    } else {
      outcome.provenance.fallback = true;
    }
    CorrectionResult res = correct_image(raw, view, st.original_depth.at(view.id), lambda, corrector, ds.prompt,
                                         derive_seed(config.rng_seed, kOtherStage, static_cast<uint64_t>(view.id),
                                                     static_cast<uint64_t>(view.frame)));
    outcome.image = std::move(res.image);
    outcome.object_mask = std::move(res.object_mask);
    outcome.provenance.noise_level = lambda;
    return std::make_pair(std::move(outcome), coincident_mask);
  };

  auto results = bounded_map(targets.size(), config.max_concurrency, process);
  for (size_t k = 0; k < targets.size(); ++k) {
    ViewOutcome& o = results[k].first;
    commit_view(dataset, state, targets[k], std::move(o.image), std::move(o.object_mask), std::move(o.provenance),
                segmenter, results[k].second);
  }
}

void generate_independent_views(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                                const Corrector& corrector, const PreprocessConfig& config,
                                const ObjectSegmenter& segmenter, int frame) {
  const auto ids = dataset.view_ids_for_frame(frame);
  ensure_original_depth(dataset, state, field, ids, config.render);
  for (int id : ids) {
    const TrainingView& view = dataset.view(id);
    CorrectionResult res = correct_image(view.rgb, view, state.original_depth.at(id), config.lambda_seed0, corrector,
                                         dataset.prompt,
                                         derive_seed(config.rng_seed, kIndependentStage, static_cast<uint64_t>(id),
                                                     static_cast<uint64_t>(view.frame)));
    ViewOutcome outcome{std::move(res.image), std::move(res.object_mask), {}};
    outcome.provenance.noise_level = config.lambda_seed0;
    outcome.provenance.stage = "independent";
    commit_view(dataset, state, id, std::move(outcome.image), std::move(outcome.object_mask),
                std::move(outcome.provenance), segmenter);
  }
}

void preprocess_static(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                       const Corrector& corrector, const Codec& codec, const PreprocessConfig& config,
                       const ObjectSegmenter& segmenter) {
  if (config.independent) {
    generate_independent_views(dataset, state, field, corrector, config, segmenter, 0);
    return;
  }
  generate_seed_images(dataset, state, field, corrector, codec, config, segmenter);
  generate_other_views(dataset, state, field, corrector, codec, config, segmenter, 0);
}

}  // namespace seedfill
