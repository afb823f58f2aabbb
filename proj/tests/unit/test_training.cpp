#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <set>

#include "../support/fixture_run.hpp"
#include "generators.hpp"
#include "seedfill/fixtures.hpp"
#include "seedfill/training.hpp"

using namespace seedfill;
using seedfill::testgen::Gen;

namespace {

std::shared_ptr<const FixtureScene> cylinder_scene() {
  static const auto scene = std::make_shared<const FixtureScene>(make_scene("cube-to-cylinder"));
  return scene;
}

std::shared_ptr<const FixtureScene> card_scene() {
  static const auto scene = std::make_shared<const FixtureScene>(make_scene("cube-to-card"));
  return scene;
}

// Records the noise level of every call, then behaves like the identity.
class RecordingCorrector final : public Corrector {
 public:
  CorrectorResponse correct(const CorrectorRequest& r) const override {
    std::lock_guard lock(mutex_);
    levels.insert(r.noise_level);
    return {r.image, std::nullopt};
  }
  std::string name() const override { return "recording"; }
  mutable std::set<double> levels;

 private:
  mutable std::mutex mutex_;
};

class FailingCorrector final : public Corrector {
 public:
  explicit FailingCorrector(std::function<bool(int)> fails) : fails_(std::move(fails)) {}
  CorrectorResponse correct(const CorrectorRequest& r) const override {
    if (fails_(r.view_id)) throw CorrectorUnavailable(r.view_id, "down");
    return {r.image, std::nullopt};
  }
  std::string name() const override { return "failing"; }

 private:
  std::function<bool(int)> fails_;
};

TwoLayerDepth flat_two_layer(int w, int h, double d) {
  return compose_two_layer_depth(DepthMap(w, h, 1, d), d, Mask(w, h));
}

// Small training problem on a 4x4x4 field for gradient checks.
struct TinyProblem {
  RadianceField field;
  TrainingView view;
  TrainTarget target;

  explicit TinyProblem(Gen& g) : field({4, 4, 4}, Aabb{}, {0.3, 0.3, 0.3}) {
    for (size_t n = 0; n < field.shape().nodes(); ++n) {
      field.raw(n, 0) = g.uniform(-0.5, 1.5);
      for (int c = 1; c < 4; ++c) field.raw(n, c) = g.uniform(-2, 2);
    }
    view.camera = look_at(0, {0.4, -0.3, -2.5}, {0, 0, 0}, {0, -1, 0}, 12, 10, 10);
    view.rgb = g.image(10, 10, 3);
    view.user_mask = Mask(10, 10, true);
    target.image = g.image(10, 10, 3);
    target.depth = compose_two_layer_depth(g.image(10, 10, 1, 1.5, 3.5), 2.0, Mask(10, 10));
  }
};

}  // namespace

TEST(PhotometricLoss, Examples) {
  Gen g(1);
  const RgbImage a = g.image(6, 4, 3, 0.2, 0.8);
  EXPECT_EQ(photometric_loss(a, a), 0.0);
  RgbImage b = a;
  for (double& v : b.data) v += 0.1;
  EXPECT_NEAR(photometric_loss(a, b), 0.1, 1e-12);

  RgbImage half = a;
  Mask m(6, 4);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 6; ++x) {
      m.set(x, y, true);
      for (int c = 0; c < 3; ++c) half.at(x, y, c) += 0.2;
    }
  EXPECT_NEAR(photometric_loss(a, half, &m), 0.2, 1e-12);
  const Mask none(6, 4);
  EXPECT_EQ(photometric_loss(a, b, &none), 0.0);
}

TEST(DepthLoss, Examples) {
  const TwoLayerDepth ref = flat_two_layer(5, 5, 2.0);
  DepthMap rendered(5, 5, 1, 2.0);
  const Image opaque(5, 5, 1, 1.0);
  EXPECT_EQ(depth_loss(rendered, opaque, ref), 0.0);
  for (double& v : rendered.data) v += 0.3;
  EXPECT_NEAR(depth_loss(rendered, opaque, ref), 0.09, 1e-12);

  Image partly = opaque;
  partly.at(1, 1) = 0.0;  // background-flagged
  const double before = depth_loss(rendered, partly, ref);
  rendered.at(1, 1) = 40.0;
  EXPECT_EQ(depth_loss(rendered, partly, ref), before);
  EXPECT_EQ(depth_loss(rendered, Image(5, 5, 1, 0.0), ref), 0.0);
}

TEST(PerceptualLoss, IdentitySymmetryAndOrdering) {
  Gen g(2);
  const auto fixture = cylinder_scene();
  const RgbImage img = crop(render_target(*fixture, fixture->rig[2], 0).rgb, {16, 16, 32, 32});
  EXPECT_EQ(perceptual_patch_loss(img, img), 0.0);
  auto noisy = [&](double amp) {
    RgbImage out = img;
    for (double& v : out.data) v = std::clamp(v + g.uniform(-amp, amp), 0.0, 1.0);
    return out;
  };
  const RgbImage weak = noisy(0.02), strong = noisy(0.3);
  EXPECT_NEAR(perceptual_patch_loss(img, strong), perceptual_patch_loss(strong, img), 1e-12);
  EXPECT_GT(perceptual_patch_loss(img, strong), perceptual_patch_loss(img, weak));
  EXPECT_THROW(perceptual_patch_loss(RgbImage(7, 8, 3), RgbImage(7, 8, 3)), InvalidArgument);
  EXPECT_THROW(perceptual_patch_loss(RgbImage(8, 8, 3), RgbImage(9, 8, 3)), InvalidArgument);
}

TEST(PerceptualLoss, GradientMatchesFiniteDifferences) {
  Gen g(3);
  RgbImage a = g.image(12, 12, 3);
  const RgbImage b = g.image(12, 12, 3);
  RgbImage grad;
  perceptual_patch_loss(a, b, {}, &grad);
  const double h = 1e-6;
  for (size_t i = 0; i < a.data.size(); i += 7) {
    const double keep = a.data[i];
    a.data[i] = keep + h;
    const double lp = perceptual_patch_loss(a, b);
    a.data[i] = keep - h;
    const double lm = perceptual_patch_loss(a, b);
    a.data[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    EXPECT_NEAR(grad.data[i], fd, 1e-3 * std::max(std::abs(fd), 1e-3)) << i;
  }
}

TEST(Schedule, LinearNonincreasingAndEndsAtEnd) {
  const TimestepSchedule s;
  for (int rounds : {1, 2, 5, 10}) {
    double prev = 1.0;
    for (int k = 0; k < rounds; ++k) {
      const double l = s.at(k, rounds);
      EXPECT_LE(l, prev);
      prev = l;
    }
    EXPECT_EQ(s.at(rounds - 1, rounds), s.lambda_end);
  }
  EXPECT_EQ(s.at(0, 10), 0.45);
  EXPECT_NEAR(s.at(5, 11), 0.25, 1e-15);
  EXPECT_THROW(s.at(3, 3), InvalidArgument);
}

TEST(TrainConfig, ValidateRejectsBadValues) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate(64, 64));
  auto bad = c;
  bad.patch_size = 65;
  EXPECT_THROW(bad.validate(64, 64), InvalidArgument);
  bad = c;
  bad.w_depth = -1;
  EXPECT_THROW(bad.validate(64, 64), InvalidArgument);
  bad = c;
  bad.patches_per_step = 0;
  EXPECT_THROW(bad.validate(64, 64), InvalidArgument);
  bad = c;
  bad.steps_per_round = 0;
  EXPECT_THROW(bad.validate(64, 64), InvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamConfig cfg;
  AdamOptimizer adam(8, cfg);
  std::vector<double> p(8, 0.0);
  const std::vector<double> grad = {1, -2, 0.5, -0.1, 3, -3, 0.01, 1};
  adam.step(p, grad);
  for (size_t i = 0; i < p.size(); ++i) {
    const double lr = (i % 4 == 0) ? cfg.lr_density : cfg.lr_color;
    EXPECT_NEAR(p[i], -lr * (grad[i] > 0 ? 1 : -1), 1e-6) << i;
  }
  EXPECT_EQ(adam.steps(), 1);
}

TEST(PatchSamplerProperty, CoversEveryViewPerEpochInsideBounds) {
  const auto scene = card_scene();
  const SceneDataset ds = build_dataset(*scene);
  for (uint64_t seed : {1u, 2u, 3u}) {
    PatchSampler sampler(ds, 24, 0.75, seed);
    for (int epoch = 0; epoch < 3; ++epoch) {
      std::set<int> seen;
      for (size_t i = 0; i < ds.views.size(); ++i) {
        const auto [id, rect] = sampler.next();
        seen.insert(id);
        const auto& v = ds.view(id);
        ASSERT_GE(rect.x, 0);
        ASSERT_GE(rect.y, 0);
        ASSERT_LE(rect.x + rect.width, v.width());
        ASSERT_LE(rect.y + rect.height, v.height());
        ASSERT_EQ(rect.width, 24);
      }
      EXPECT_EQ(seen.size(), ds.views.size());
    }
  }
}

TEST(LossGradients, EveryTermMatchesFiniteDifferences) {
  Gen g(5);
  TinyProblem prob(g);
  const PatchRect rect{1, 1, 8, 8};
  struct Term {
    const char* name;
    double w_rgb, w_depth, w_perc;
  };
  for (const Term& t : {Term{"rgb", 1, 0, 0}, Term{"depth", 0, 1, 0}, Term{"perceptual", 0, 0, 1}}) {
    TrainConfig cfg;
    cfg.w_rgb = t.w_rgb;
    cfg.w_depth = t.w_depth;
    cfg.w_perc = t.w_perc;
    std::vector<double> grad(prob.field.params().size(), 0.0);
    patch_loss_and_grad(prob.field, prob.view, prob.target, rect, std::nullopt, cfg, grad);
    const double h = 1e-4;
    int checked = 0;
    for (size_t i = 0; i < grad.size(); ++i) {
      const double keep = prob.field.params()[i];
      prob.field.params()[i] = keep + h;
      const double lp = patch_loss_and_grad(prob.field, prob.view, prob.target, rect, std::nullopt, cfg, {}).total;
      prob.field.params()[i] = keep - h;
      const double lm = patch_loss_and_grad(prob.field, prob.view, prob.target, rect, std::nullopt, cfg, {}).total;
      prob.field.params()[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      if (std::abs(fd) < 1e-6 && std::abs(grad[i]) < 1e-6) continue;
      ++checked;
      ASSERT_LT(std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-4}), 1e-3)
          << t.name << " param " << i;
    }
    EXPECT_GT(checked, 20) << t.name;
  }
}

TEST(Warmup, ZeroStepsLeavesFieldUnchanged) {
  const auto scene = card_scene();
  const SceneDataset base = build_dataset(*scene);
  const OracleCorrector oracle(scene, ViewCatalog(base));
  auto run = seedfill::testing::preprocess_fixture(scene, oracle, PreprocessConfig{});
  TrainConfig cfg;
  cfg.warmup_steps = 0;
  const RadianceField before = run.field;
  warmup_train(run.field, run.dataset, run.state, cfg);
  EXPECT_TRUE(run.field == before);
}

TEST(Warmup, NonFiniteLossAborts) {
  const auto scene = card_scene();
  const SceneDataset base = build_dataset(*scene);
  const OracleCorrector oracle(scene, ViewCatalog(base));
  auto run = seedfill::testing::preprocess_fixture(scene, oracle, PreprocessConfig{});
  for (auto& v : run.dataset.views)
    for (double& x : v.inpainted_rgb->data) x = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.warmup_steps = 5;
  EXPECT_THROW(warmup_train(run.field, run.dataset, run.state, cfg), TrainingDiverged);
}

TEST(Warmup, OracleFixtureConvergesWithDecreasingLoss) {
  const auto scene = cylinder_scene();
  const SceneDataset base = build_dataset(*scene);
  const OracleCorrector oracle(scene, ViewCatalog(base));
  auto run = seedfill::testing::preprocess_fixture(scene, oracle, PreprocessConfig{});
  std::vector<double> trace;
  warmup_train(run.field, run.dataset, run.state, TrainConfig{},
               [&](const TrainLogEntry& e) { trace.push_back(e.loss.total); });
  ASSERT_EQ(trace.size(), 300u);
  for (double l : trace) ASSERT_TRUE(std::isfinite(l));
  auto window_mean = [&](size_t from) {
    double s = 0;
    for (size_t i = from; i < from + 50; ++i) s += trace[i];
    return s / 50;
  };
  for (size_t w = 50; w + 50 <= trace.size(); w += 50) EXPECT_LT(window_mean(w), window_mean(w - 50)) << w;

  double worst = 1e9;
  for (const auto& v : run.dataset.views) {
    const ViewRender r = render_view(run.field, v.camera, std::nullopt);
    worst = std::min(worst, psnr(r.rgb, oracle.truth(v.id)));
  }
  EXPECT_GE(worst, 25.0);
}

TEST(IduRound, UsesScheduledNoiseLevel) {
  const auto scene = card_scene();
  const SceneDataset base = build_dataset(*scene);
  const OracleCorrector oracle(scene, ViewCatalog(base));
  auto run = seedfill::testing::preprocess_fixture(scene, oracle, PreprocessConfig{});
  TrainConfig cfg;
  cfg.warmup_steps = 5;
  cfg.idu_rounds = 4;
  cfg.steps_per_round = 2;
  Trainer trainer(run.field, run.dataset, make_training_set(run.dataset, run.state), cfg);
  trainer.warmup();
  for (int k = 0; k < cfg.idu_rounds; ++k) {
    RecordingCorrector rec;
    const RoundReport rep = trainer.idu_round(rec, k);
    EXPECT_EQ(rep.lambda, cfg.schedule.at(k, cfg.idu_rounds));
    EXPECT_EQ(rec.levels, (std::set<double>{cfg.schedule.at(k, cfg.idu_rounds)}));
    EXPECT_EQ(rep.refreshed.size(), run.dataset.views.size());
  }
  EXPECT_EQ(trainer.global_step(), 5 + 4 * 2);
}

TEST(IduRound, FailedViewsAreSkippedUntilMajorityFails) {
  const auto scene = card_scene();
  const SceneDataset base = build_dataset(*scene);
  const OracleCorrector oracle(scene, ViewCatalog(base));
  auto run = seedfill::testing::preprocess_fixture(scene, oracle, PreprocessConfig{});
  TrainConfig cfg;
  cfg.warmup_steps = 0;
  cfg.idu_rounds = 2;
  cfg.steps_per_round = 1;
  Trainer trainer(run.field, run.dataset, make_training_set(run.dataset, run.state), cfg);
  const RoundReport half = trainer.idu_round(FailingCorrector([](int id) { return id % 2 == 1; }), 0);
  EXPECT_EQ(half.skipped.size(), run.dataset.views.size() / 2);
  for (int id : half.skipped) EXPECT_EQ(id % 2, 1);
  EXPECT_THROW(trainer.idu_round(FailingCorrector([](int id) { return id != 0; }), 1), CorrectorError);
}

TEST(IduRound, IdentityCorrectorApproachesAFixedPoint) {
  const auto scene = card_scene();
  const SceneDataset base = build_dataset(*scene);
  const OracleCorrector oracle(scene, ViewCatalog(base));
  auto run = seedfill::testing::preprocess_fixture(scene, oracle, PreprocessConfig{});
  TrainConfig cfg;
  cfg.warmup_steps = 150;
  cfg.idu_rounds = 8;
  cfg.steps_per_round = 40;
  const IdentityCorrector identity;
  const auto reports = train_full(run.field, run.dataset, run.state, identity, cfg);
  ASSERT_EQ(reports.size(), 8u);
  for (size_t k = 4; k < reports.size(); ++k) {
    EXPECT_LT(reports[k].parameter_delta, reports[k - 1].parameter_delta) << "round " << k;
    EXPECT_LT(reports[k].target_delta, reports[k - 1].target_delta) << "round " << k;
  }
  EXPECT_LT(reports.back().parameter_delta, 0.6 * reports.front().parameter_delta);
  EXPECT_LT(reports.back().target_delta, 0.3 * reports.front().target_delta);
}

TEST(Training, FixedSeedIsByteReproducible) {
  const auto scene = card_scene();
  const SceneDataset base = build_dataset(*scene);
  const auto oracle = std::make_shared<const OracleCorrector>(scene, ViewCatalog(base));
  const JitterCorrector jitter(4, 0.2, 4, oracle);
  TrainConfig cfg;
  cfg.warmup_steps = 20;
  cfg.idu_rounds = 2;
  cfg.steps_per_round = 10;
  cfg.rng_seed = 8;
  const auto a = seedfill::testing::run_fixture(scene, jitter, PreprocessConfig{}, cfg);
  cfg.max_concurrency = 3;
  const auto b = seedfill::testing::run_fixture(scene, jitter, PreprocessConfig{}, cfg);
  EXPECT_EQ(serialize_field(a.field), serialize_field(b.field));
}
