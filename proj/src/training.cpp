#include "seedfill/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seedfill/errors.hpp"
#include "seedfill/parallel.hpp"

namespace seedfill {

double TimestepSchedule::at(int round, int rounds) const {
  if (rounds < 1 || round < 0 || round >= rounds) throw InvalidArgument("TimestepSchedule: round out of range");
  if (rounds == 1) return lambda_end;
  if (round == rounds - 1) return lambda_end;
  return lambda_start + (lambda_end - lambda_start) * static_cast<double>(round) / (rounds - 1);
}

void TrainConfig::validate(int image_width, int image_height) const {
  if (warmup_steps < 0 || idu_rounds < 0 || steps_per_round < 1 || patches_per_step < 1)
    throw InvalidArgument("TrainConfig: step counts must be positive");
  if (w_rgb < 0.0 || w_depth < 0.0 || w_perc < 0.0 || w_depth_warmup.value_or(0.0) < 0.0) throw InvalidArgument("TrainConfig: loss weights must be >= 0");
  if (patch_size < 8 || patch_size > image_width || patch_size > image_height)
    throw InvalidArgument("TrainConfig: patch_size must be in [8, image size]");
  if (!(blend_beta >= 0.0 && blend_beta <= 1.0)) throw InvalidArgument("TrainConfig: blend_beta outside [0,1]");
  if (!(mask_focus >= 0.0 && mask_focus <= 1.0)) throw InvalidArgument("TrainConfig: mask_focus outside [0,1]");
  if (!(schedule.lambda_start >= 0.0 && schedule.lambda_start <= 1.0 && schedule.lambda_end >= 0.0 &&
        schedule.lambda_end <= schedule.lambda_start))
    throw InvalidArgument("TrainConfig: schedule must satisfy 0 <= lambda_end <= lambda_start <= 1");
  if (!(adam.lr_density > 0.0 && adam.lr_color > 0.0)) throw InvalidArgument("TrainConfig: learning rates must be > 0");
  if (render.samples < 2) throw InvalidArgument("TrainConfig: at least 2 samples per ray");
}

double photometric_loss(const RgbImage& render, const RgbImage& target, const Mask* mask) {
  if (!render.same_shape(target)) throw InvalidArgument("photometric_loss: shape mismatch");
  if (mask && (mask->width != render.width || mask->height != render.height))
    throw InvalidArgument("photometric_loss: mask shape mismatch");
  double sum = 0.0;
  size_t n = 0;
  for (int y = 0; y < render.height; ++y) {
    for (int x = 0; x < render.width; ++x) {
      if (mask && !mask->at(x, y)) continue;
      for (int c = 0; c < render.channels; ++c) sum += std::abs(render.at(x, y, c) - target.at(x, y, c));
      n += static_cast<size_t>(render.channels);
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double depth_loss(const DepthMap& rendered_depth, const Image& rendered_opacity, const TwoLayerDepth& two_layer,
                  const Mask* mask, double opacity_floor) {
  const DepthMap& ref = two_layer.composite;
  if (!rendered_depth.same_shape(ref) || !rendered_opacity.same_shape(ref))
    throw InvalidArgument("depth_loss: shape mismatch");
  if (mask && (mask->width != ref.width || mask->height != ref.height))
    throw InvalidArgument("depth_loss: mask shape mismatch");
  double sum = 0.0;
  size_t n = 0;
  for (int y = 0; y < ref.height; ++y) {
    for (int x = 0; x < ref.width; ++x) {
      if (mask && !mask->at(x, y)) continue;
      if (!(rendered_opacity.at(x, y) > opacity_floor) || !(ref.at(x, y) > 0.0)) continue;
      const double d = rendered_depth.at(x, y) - ref.at(x, y);
      sum += d * d;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

RgbImage crop(const Image& img, const PatchRect& rect) {
  if (rect.x < 0 || rect.y < 0 || rect.width < 1 || rect.height < 1 || rect.x + rect.width > img.width ||
      rect.y + rect.height > img.height)
    throw InvalidArgument("crop: rectangle outside the image");
  Image out(rect.width, rect.height, img.channels);
  for (int y = 0; y < rect.height; ++y)
    for (int x = 0; x < rect.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(rect.x + x, rect.y + y, c);
  return out;
}

namespace {

Image downsample2(const Image& img) {
  Image out(img.width / 2, img.height / 2, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                  img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
  return out;
}

struct GradientFeature {
  double fx, fy, s;
  double gx, gy;
};

GradientFeature feature(const Image& img, int x, int y, int c, double eps) {
  const double gx = img.at(x + 1, y, c) - img.at(x, y, c);
  const double gy = img.at(x, y + 1, c) - img.at(x, y, c);
  const double s = std::sqrt(gx * gx + gy * gy + eps * eps);
  return {gx / s, gy / s, s, gx, gy};
}

}  // namespace

double perceptual_patch_loss(const RgbImage& a, const RgbImage& b, const PerceptualOptions& options,
                             RgbImage* grad_a) {
  if (!a.same_shape(b)) throw InvalidArgument("perceptual_patch_loss: shape mismatch");
  if (a.width < 8 || a.height < 8) throw InvalidArgument("perceptual_patch_loss: patches must be at least 8x8");
  if (options.octaves < 1 || (a.width >> (options.octaves - 1)) < 2 || (a.height >> (options.octaves - 1)) < 2)
    throw InvalidArgument("perceptual_patch_loss: too many octaves for the patch size");
  const double eps = options.epsilon;

  std::vector<Image> pa{a}, pb{b};
  for (int l = 1; l < options.octaves; ++l) {
    pa.push_back(downsample2(pa.back()));
    pb.push_back(downsample2(pb.back()));
  }
  std::vector<Image> ga;
  if (grad_a)
    for (const auto& level : pa) ga.emplace_back(level.width, level.height, level.channels);

  double total = 0.0;
  for (int l = 0; l < options.octaves; ++l) {
    const Image& A = pa[l];
    const Image& B = pb[l];
    const double n = static_cast<double>(A.width - 1) * (A.height - 1) * A.channels;
    double sum = 0.0;
    for (int y = 0; y + 1 < A.height; ++y) {
      for (int x = 0; x + 1 < A.width; ++x) {
        for (int c = 0; c < A.channels; ++c) {
          const GradientFeature fa = feature(A, x, y, c, eps);
          const GradientFeature fb = feature(B, x, y, c, eps);
          const double dx = fa.fx - fb.fx, dy = fa.fy - fb.fy;
          sum += dx * dx + dy * dy;
          if (!grad_a) continue;
          const double scale = 2.0 / (n * options.octaves);
          const double dfx = scale * dx, dfy = scale * dy;
          const double s3 = fa.s * fa.s * fa.s;
          const double dgx = (dfx * (fa.gy * fa.gy + eps * eps) - dfy * fa.gx * fa.gy) / s3;
          const double dgy = (dfy * (fa.gx * fa.gx + eps * eps) - dfx * fa.gx * fa.gy) / s3;
          Image& G = ga[l];
          G.at(x + 1, y, c) += dgx;
          G.at(x, y + 1, c) += dgy;
          G.at(x, y, c) -= dgx + dgy;
        }
      }
    }
    total += sum / n;
  }
  if (grad_a) {
    for (int l = options.octaves - 1; l > 0; --l) {
      const Image& coarse = ga[l];
      Image& fine = ga[l - 1];
      for (int y = 0; y < coarse.height; ++y)
        for (int x = 0; x < coarse.width; ++x)
          for (int c = 0; c < coarse.channels; ++c) {
            const double g = 0.25 * coarse.at(x, y, c);
            fine.at(2 * x, 2 * y, c) += g;
            fine.at(2 * x + 1, 2 * y, c) += g;
            fine.at(2 * x, 2 * y + 1, c) += g;
            fine.at(2 * x + 1, 2 * y + 1, c) += g;
          }
    }
    *grad_a = std::move(ga[0]);
  }
  return total / options.octaves;
}

TrainingSet make_training_set(const SceneDataset& dataset, const PreprocessState& state) {
  TrainingSet set;
  for (const auto& v : dataset.views) {
    if (!v.inpainted_rgb) throw InvalidState("view " + std::to_string(v.id) + " has not been preprocessed");
    auto it = state.depth.find(v.id);
    if (it == state.depth.end()) throw InvalidState("view " + std::to_string(v.id) + " has no two-layer depth");
    set.targets[v.id] = TrainTarget{*v.inpainted_rgb, it->second};
  }
  return set;
}

TrainingSet make_original_training_set(const SceneDataset& dataset) {
  TrainingSet set;
  for (const auto& v : dataset.views) set.targets[v.id] = TrainTarget{v.rgb, {}};
  return set;
}

LossBreakdown patch_loss_and_grad(const RadianceField& field, const TrainingView& view, const TrainTarget& target,
                                  const PatchRect& rect, std::optional<double> time, const TrainConfig& config,
                                  std::span<double> grad) {
  const auto outs = render_patch(field, view.camera, rect, time, config.render);
  const size_t n = outs.size();
  RgbImage rendered(rect.width, rect.height, 3);
  for (int y = 0; y < rect.height; ++y)
    for (int x = 0; x < rect.width; ++x)
      for (int c = 0; c < 3; ++c) rendered.at(x, y, c) = outs[static_cast<size_t>(y) * rect.width + x].rgb[c];
  const RgbImage goal = crop(target.image, rect);

  std::vector<RayUpstream> up(n);
  LossBreakdown loss;

  double l1 = 0.0;
  const double l1_scale = config.w_rgb / (3.0 * static_cast<double>(n));
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d = outs[i].rgb[c] - goal.data[i * 3 + c];
      l1 += std::abs(d);
      up[i].d_rgb[c] += l1_scale * ((d > 0.0) - (d < 0.0));
    }
  }
  loss.rgb = l1 / (3.0 * static_cast<double>(n));

  if (config.w_depth > 0.0 && !target.depth.composite.empty()) {
    const DepthMap& ref = target.depth.composite;
    size_t m = 0;
    for (int y = 0; y < rect.height; ++y)
      for (int x = 0; x < rect.width; ++x)
        if (outs[static_cast<size_t>(y) * rect.width + x].has_depth && ref.at(rect.x + x, rect.y + y) > 0.0) ++m;
    if (m) {
      double sum = 0.0;
      for (int y = 0; y < rect.height; ++y) {
        for (int x = 0; x < rect.width; ++x) {
          const size_t i = static_cast<size_t>(y) * rect.width + x;
          const double r = ref.at(rect.x + x, rect.y + y);
          if (!outs[i].has_depth || !(r > 0.0)) continue;
          const double d = outs[i].depth - r;
          sum += d * d;
          up[i].d_depth = config.w_depth * 2.0 * d / static_cast<double>(m);
        }
      }
      loss.depth = sum / static_cast<double>(m);
    }
  }

  if (config.w_perc > 0.0) {
    RgbImage g;
    loss.perceptual = perceptual_patch_loss(rendered, goal, {}, grad.empty() ? nullptr : &g);
    if (!grad.empty())
      for (size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) up[i].d_rgb[c] += config.w_perc * g.data[i * 3 + c];
  }

  loss.total = config.w_rgb * loss.rgb + config.w_depth * loss.depth + config.w_perc * loss.perceptual;
  if (!grad.empty() && std::isfinite(loss.total))
    backprop_patch(field, view.camera, rect, time, config.render, up, grad);
  return loss;
}

AdamOptimizer::AdamOptimizer(size_t size, AdamConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void AdamOptimizer::step(std::vector<double>& params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw InvalidArgument("AdamOptimizer: size mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    if (m_[i] == 0.0) continue;
    const double lr = (i % RadianceField::kChannels == 0) ? config_.lr_density : config_.lr_color;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
  }
}

PatchSampler::PatchSampler(const SceneDataset& dataset, int patch_size, double mask_focus, uint64_t seed)
    : patch_size_(patch_size), mask_focus_(mask_focus), rng_(seed) {
  if (dataset.views.empty()) throw InvalidArgument("PatchSampler: empty dataset");
  for (const auto& v : dataset.views) {
    if (patch_size > v.width() || patch_size > v.height())
      throw InvalidArgument("PatchSampler: patch larger than view " + std::to_string(v.id));
    Entry e{v.id, v.width(), v.height(), v.width(), v.height(), -1, -1};
    for (int y = 0; y < v.height(); ++y)
      for (int x = 0; x < v.width(); ++x)
        if (!v.user_mask.empty() && v.user_mask.at(x, y)) {
          e.x0 = std::min(e.x0, x);
          e.y0 = std::min(e.y0, y);
          e.x1 = std::max(e.x1, x);
          e.y1 = std::max(e.y1, y);
        }
    entries_.push_back(e);
  }
  order_.resize(entries_.size());
  cursor_ = order_.size();
}

std::pair<int, PatchRect> PatchSampler::next() {
  if (cursor_ >= order_.size()) {
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
    cursor_ = 0;
  }
  const Entry& e = entries_[order_[cursor_++]];
  const int p = patch_size_;
  auto uniform = [&](int lo, int hi) { return lo + static_cast<int>(rng_() % static_cast<uint64_t>(hi - lo + 1)); };
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  int x, y;
  if (u < mask_focus_ && e.x0 <= e.x1) {
    const int cx = uniform(e.x0, e.x1), cy = uniform(e.y0, e.y1);
    x = std::clamp(cx - p / 2, 0, e.width - p);
    y = std::clamp(cy - p / 2, 0, e.height - p);
  } else {
    x = uniform(0, e.width - p);
    y = uniform(0, e.height - p);
  }
  return {e.view_id, PatchRect{x, y, p, p}};
}

namespace {

std::optional<double> view_time(const RadianceField& field, const SceneDataset& dataset, const TrainingView& view) {
  if (!field.is_dynamic()) return std::nullopt;
  return frame_time(view.frame, dataset.frames);
}

int first_width(const SceneDataset& d) { return d.views.empty() ? 0 : d.views.front().width(); }
int first_height(const SceneDataset& d) { return d.views.empty() ? 0 : d.views.front().height(); }

}  // namespace

Trainer::Trainer(RadianceField& field, const SceneDataset& dataset, TrainingSet set, TrainConfig config,
                 TrainLogger logger)
    : field_(field),
      dataset_(dataset),
      set_(std::move(set)),
      config_(config),
      logger_(std::move(logger)),
      adam_(field.params().size(), config.adam),
      sampler_(dataset, config.patch_size, config.mask_focus, config.rng_seed ^ 0x5eed5eedULL),
      grad_(field.params().size(), 0.0) {
  config_.validate(first_width(dataset), first_height(dataset));
  for (const auto& v : dataset.views)
    if (!set_.targets.count(v.id)) throw InvalidState("no training target for view " + std::to_string(v.id));
}

void Trainer::run_steps(int steps, const std::string& phase, int round, double lambda) {
  for (int s = 0; s < steps; ++s) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
    LossBreakdown sum;
    for (int p = 0; p < config_.patches_per_step; ++p) {
      const auto [view_id, rect] = sampler_.next();
      const TrainingView& view = dataset_.view(view_id);
      const LossBreakdown l = patch_loss_and_grad(field_, view, set_.targets.at(view_id), rect,
                                                  view_time(field_, dataset_, view), config_, grad_);
      if (!std::isfinite(l.total)) {
        std::ostringstream msg;
        msg << "non-finite loss in " << phase << " at step " << global_step_ << ", view " << view_id << ", patch ("
            << rect.x << "," << rect.y << "," << rect.width << "x" << rect.height << ")";
        throw TrainingDiverged(msg.str());
      }
      sum.total += l.total;
      sum.rgb += l.rgb;
      sum.depth += l.depth;
      sum.perceptual += l.perceptual;
    }
    const double inv = 1.0 / config_.patches_per_step;
    if (config_.patches_per_step > 1)
      for (double& g : grad_) g *= inv;
    adam_.step(field_.params(), grad_);
    ++global_step_;
    if (logger_) {
      TrainLogEntry e{phase, global_step_, round, lambda,
                      LossBreakdown{sum.total * inv, sum.rgb * inv, sum.depth * inv, sum.perceptual * inv}};
      logger_(e);
    }
  }
}

void Trainer::warmup() {
  const double w_depth = config_.w_depth;
  if (config_.w_depth_warmup) config_.w_depth = *config_.w_depth_warmup;
  try {
    run_steps(config_.warmup_steps, "warmup");
  } catch (...) {
    config_.w_depth = w_depth;
    throw;
  }
  config_.w_depth = w_depth;
}

RoundReport Trainer::idu_round(const Corrector& corrector, int round_index, const Codec* codec) {
  if (config_.blend_space == BlendSpace::Latent && !codec)
    throw InvalidArgument("idu_round: latent blending needs a codec");
  RoundReport report;
  report.round = round_index;
  report.lambda = config_.schedule.at(round_index, config_.idu_rounds);
  const std::vector<double> before = field_.params();

  struct Refresh {
    std::optional<RgbImage> image;
  };
  auto refresh = [&](size_t k) -> Refresh {
    const TrainingView& view = dataset_.views[k];
    if (!view.inpainted_rgb) throw InvalidState("view " + std::to_string(view.id) + " has not been preprocessed");
    const ViewRender r = render_view(field_, view.camera, view_time(field_, dataset_, view), config_.render);
    const double beta = config_.blend_beta;
    RgbImage mixed(view.width(), view.height(), 3);
    if (config_.blend_space == BlendSpace::Latent) {
      mixed = codec->decode(combine_codes({codec->encode(r.rgb), codec->encode(*view.inpainted_rgb)}, {beta, 1.0 - beta}));
    } else {
      for (size_t i = 0; i < mixed.data.size(); ++i)
        mixed.data[i] = beta * r.rgb.data[i] + (1.0 - beta) * view.inpainted_rgb->data[i];
    }
    RgbImage raw = view.rgb;
    for (int y = 0; y < view.height(); ++y)
      for (int x = 0; x < view.width(); ++x)
        if (view.user_mask.at(x, y))
          for (int c = 0; c < 3; ++c) raw.at(x, y, c) = std::clamp(mixed.at(x, y, c), 0.0, 1.0);
    try {
      CorrectionResult res = correct_image(raw, view, r.depth, report.lambda, corrector, dataset_.prompt,
                                           derive_seed(config_.rng_seed, 4, static_cast<uint64_t>(round_index),
                                                       static_cast<uint64_t>(view.id)));
      return {std::move(res.image)};
    } catch (const CorrectorError&) {
      return {std::nullopt};
    }
  };
  auto results = bounded_map(dataset_.views.size(), config_.max_concurrency, refresh);
  for (size_t k = 0; k < results.size(); ++k) {
    const int id = dataset_.views[k].id;
    if (results[k].image) {
      RgbImage& target = set_.targets.at(id).image;
      double change = 0.0;
      for (size_t i = 0; i < target.data.size(); ++i) change += std::abs(results[k].image->data[i] - target.data[i]);
      report.target_delta += change / static_cast<double>(std::max<size_t>(target.data.size(), 1));
      target = std::move(*results[k].image);
      report.refreshed.push_back(id);
    } else {
      report.skipped.push_back(id);
    }
  }
  if (report.skipped.size() * 2 > dataset_.views.size())
    throw CorrectorUnavailable(report.skipped.front(), "update round " + std::to_string(round_index) + ": " +
                                                           std::to_string(report.skipped.size()) + " of " +
                                                           std::to_string(dataset_.views.size()) +
                                                           " corrector calls failed");

  if (!report.refreshed.empty()) report.target_delta /= static_cast<double>(report.refreshed.size());

  run_steps(config_.steps_per_round, "idu", round_index, report.lambda);

  double sq = 0.0;
  for (size_t i = 0; i < before.size(); ++i) {
    const double d = field_.params()[i] - before[i];
    sq += d * d;
  }
  report.parameter_delta = before.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(before.size()));
  return report;
}

void warmup_train(RadianceField& field, const SceneDataset& dataset, const PreprocessState& state,
                  const TrainConfig& config, TrainLogger logger) {
  Trainer trainer(field, dataset, make_training_set(dataset, state), config, std::move(logger));
  trainer.warmup();
}

std::vector<RoundReport> train_full(RadianceField& field, const SceneDataset& dataset, const PreprocessState& state,
                                    const Corrector& corrector, const TrainConfig& config, TrainLogger logger,
                                    const Codec* codec) {
  Trainer trainer(field, dataset, make_training_set(dataset, state), config, std::move(logger));
  trainer.warmup();
  std::vector<RoundReport> reports;
  for (int k = 0; k < config.idu_rounds; ++k) reports.push_back(trainer.idu_round(corrector, k, codec));
  return reports;
}

}  // namespace seedfill
