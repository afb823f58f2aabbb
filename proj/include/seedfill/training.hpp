#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seedfill/corrector.hpp"
#include "seedfill/depth_proxy.hpp"
#include "seedfill/image.hpp"
#include "seedfill/projection_correction.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

// Noise level per update round, falling linearly from start to end.
struct TimestepSchedule {
  double lambda_start = 0.45;
  double lambda_end = 0.05;

  double at(int round, int rounds) const;
};

struct AdamConfig {
  double lr_density = 0.1;
  double lr_color = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int warmup_steps = 300;
  int idu_rounds = 10;  // 0 skips the update phase
  int steps_per_round = 200;
  int patch_size = 32;
  int patches_per_step = 2;
  double w_rgb = 1.0;
  double w_depth = 0.05;
  std::optional<double> w_depth_warmup;  // overrides w_depth during warmup
  double w_perc = 0.1;
  TimestepSchedule schedule;
  AdamConfig adam;
  double blend_beta = 0.5;  // weight of the current render in the update blend
  BlendSpace blend_space = BlendSpace::Image;
  double mask_focus = 0.75;  // probability a patch is centred on the user mask
  RenderOptions render;
  uint64_t rng_seed = 0;
  int max_concurrency = 1;

  // Throws InvalidArgument on counts < 1, negative weights or a patch larger
  // than the images.
  void validate(int image_width, int image_height) const;
};

double photometric_loss(const RgbImage& render, const RgbImage& target, const Mask* mask = nullptr);

// Mean squared depth error over mask and pixels whose rendered opacity
// exceeds `opacity_floor`. Empty effective mask gives 0.
double depth_loss(const DepthMap& rendered_depth, const Image& rendered_opacity, const TwoLayerDepth& two_layer,
                  const Mask* mask = nullptr, double opacity_floor = 1e-3);

// Multi-scale normalized-gradient feature distance between two patches of
// at least 8x8 pixels. When `grad_a` is given it receives d(loss)/d(a).
struct PerceptualOptions {
  int octaves = 3;
  double epsilon = 0.05;
};
double perceptual_patch_loss(const RgbImage& a, const RgbImage& b, const PerceptualOptions& options = {},
                             RgbImage* grad_a = nullptr);

// Crop helpers for patch-level losses.
RgbImage crop(const Image& img, const PatchRect& rect);

// Per-view training targets; the image is refreshed by each update round.
struct TrainTarget {
  RgbImage image;
  TwoLayerDepth depth;
};

struct TrainingSet {
  std::map<int, TrainTarget> targets;
};

// Initial targets: the preprocessed images and their two-layer depths.
TrainingSet make_training_set(const SceneDataset& dataset, const PreprocessState& state);

// Targets for fitting the original scene (no depth supervision).
TrainingSet make_original_training_set(const SceneDataset& dataset);

struct LossBreakdown {
  double total = 0.0;
  double rgb = 0.0;
  double depth = 0.0;
  double perceptual = 0.0;
};

// Loss of one patch and (optionally) its gradient, accumulated into `grad`.
LossBreakdown patch_loss_and_grad(const RadianceField& field, const TrainingView& view, const TrainTarget& target,
                                  const PatchRect& rect, std::optional<double> time, const TrainConfig& config,
                                  std::span<double> grad);

class AdamOptimizer {
 public:
  AdamOptimizer(size_t size, AdamConfig config);
  void step(std::vector<double>& params, std::span<const double> grad);
  int steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

// Deterministic patch sampler: every view once per epoch (shuffled), patches
// fully inside the image and biased toward the user mask.
class PatchSampler {
 public:
  PatchSampler(const SceneDataset& dataset, int patch_size, double mask_focus, uint64_t seed);
  std::pair<int, PatchRect> next();

 private:
  struct Entry {
    int view_id;
    int width, height;
    int x0, y0, x1, y1;  // user mask bounding box, inclusive; x0 > x1 when empty
  };
  std::vector<Entry> entries_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int patch_size_;
  double mask_focus_;
  std::mt19937_64 rng_;
};

struct TrainLogEntry {
  std::string phase;
  int step = 0;
  int round = -1;
  double lambda = 0.0;
  LossBreakdown loss;
};

struct RoundReport {
  int round = 0;
  double lambda = 0.0;
  std::vector<int> refreshed;
  std::vector<int> skipped;
  double parameter_delta = 0.0;  // RMS parameter change over the round
  double target_delta = 0.0;     // mean absolute change of the refreshed targets
};

using TrainLogger = std::function<void(const TrainLogEntry&)>;

// Owns the optimizer state across warmup and update rounds.
class Trainer {
 public:
  Trainer(RadianceField& field, const SceneDataset& dataset, TrainingSet set, TrainConfig config,
          TrainLogger logger = {});

  // Optimizes against the current targets for `steps` steps. Throws
  // TrainingDiverged on a non-finite loss.
  void run_steps(int steps, const std::string& phase, int round = -1, double lambda = 0.0);
  void warmup();

  // One iterative dataset update: refresh every view's target through the
  // corrector at the scheduled noise level, then optimize.
  RoundReport idu_round(const Corrector& corrector, int round_index, const Codec* codec = nullptr);

  const TrainingSet& training_set() const { return set_; }
  const TrainConfig& config() const { return config_; }
  int global_step() const { return global_step_; }

 private:
  RadianceField& field_;
  const SceneDataset& dataset_;
  TrainingSet set_;
  TrainConfig config_;
  TrainLogger logger_;
  AdamOptimizer adam_;
  PatchSampler sampler_;
  std::vector<double> grad_;
  int global_step_ = 0;
};

// Warmup only, on fixed preprocessed images.
void warmup_train(RadianceField& field, const SceneDataset& dataset, const PreprocessState& state,
                  const TrainConfig& config, TrainLogger logger = {});

// Warmup followed by all update rounds.
std::vector<RoundReport> train_full(RadianceField& field, const SceneDataset& dataset, const PreprocessState& state,
                                    const Corrector& corrector, const TrainConfig& config, TrainLogger logger = {},
                                    const Codec* codec = nullptr);

}  // namespace seedfill
