// Acceptance gate: one pass/fail line per criterion. Optional arguments
// select criteria by number, e.g. `seedfill_acceptance 1 2 9`.

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>
#include <string>

#include "../support/fixture_run.hpp"
#include "../support/stub_server.hpp"
#include "seedfill/depth_proxy.hpp"
#include "seedfill/dynamic4d.hpp"
#include "seedfill/image_io.hpp"
#include "seedfill/metrics.hpp"
#include "seedfill/pipeline.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/remote_corrector.hpp"
#include "seedfill/scene_core.hpp"

using namespace seedfill;
using namespace seedfill::testing;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.str().empty()) detail << "; ";
    detail << what << (ok ? "" : " [FAILED]");
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

CameraView random_camera(std::mt19937_64& rng, int id) {
  std::uniform_real_distribution<double> u(-5.0, 5.0), f(50.0, 800.0), s(32.0, 640.0);
  CameraView c;
  c.id = id;
  c.rotation = random_rotation(rng);
  c.position = Vector3d(u(rng), u(rng), u(rng));
  c.focal = f(rng);
  c.width = static_cast<int>(s(rng));
  c.height = static_cast<int>(s(rng));
  std::uniform_real_distribution<double> px(0.0, c.width - 1.0), py(0.0, c.height - 1.0);
  c.principal_point = Vector2d(px(rng), py(rng));
  return c;
}

// ------------------------------------------------------------------ 1

void geometry(Outcome& out) {
  std::mt19937_64 rng(11);
  double worst_px = 0.0, worst_depth = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const CameraView c = random_camera(rng, i);
    std::uniform_real_distribution<double> ux(0.0, c.width), uy(0.0, c.height), ud(0.05, 100.0);
    const Vector2d q(ux(rng), uy(rng));
    const double d = ud(rng);
    const Projection p = project_point(c, unproject_pixel(c, q, d));
    worst_px = std::max(worst_px, (p.pixel - q).norm());
    worst_depth = std::max(worst_depth, std::abs(p.depth - d));
  }
  out.require(worst_px < 1e-6, "round trip max " + fmt(worst_px) + " px over 1000 draws");
  out.require(worst_depth < 1e-9, "depth max " + fmt(worst_depth));

  // Pure translation rig over a fronto-parallel plane: the warp must follow
  // the plane-induced homography K (I - t n^T / d) K^-1.
  double worst_h = 0.0;
  size_t checked = 0;
  const int W = 64, H = 48;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> ut(-0.3, 0.3), ud(2.0, 6.0), uf(40.0, 90.0);
    const double plane = ud(rng);
    CameraView src;
    src.id = 0;
    src.focal = uf(rng);
    src.width = W;
    src.height = H;
    src.principal_point = Vector2d(W / 2.0 - 0.5, H / 2.0 - 0.5);
    src.rotation = random_rotation(rng);
    CameraView dst = src;
    dst.id = 1;
    const Vector3d t_cam(ut(rng), ut(rng), 0.3 * ut(rng));
    dst.position = src.position + src.rotation.transpose() * t_cam;

    TrainingView vs, vd;
    vs.id = 0;
    vs.camera = src;
    vd.id = 1;
    vd.camera = dst;
    vs.rgb = RgbImage(W, H, 3);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        vs.rgb.at(x, y, 0) = (x + 0.5) / W;
        vs.rgb.at(x, y, 1) = (y + 0.5) / H;
      }
    vs.inpainted_rgb = vs.rgb;
    vs.user_mask = Mask(W, H, false);
    for (int y = 8; y < H - 8; ++y)
      for (int x = 8; x < W - 8; ++x) vs.user_mask.set(x, y, true);
    vs.object_mask = vs.user_mask;
    vd.rgb = RgbImage(W, H, 3, -1.0);
    vd.user_mask = Mask(W, H, true);
    const TwoLayerDepth depth = compose_two_layer_depth(DepthMap(W, H, 1, plane), plane, vs.user_mask);
    const ProjectionResult r = forward_warp(vs, depth, vd);

    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    K(0, 0) = K(1, 1) = src.focal;
    K(0, 2) = src.principal_point.x();
    K(1, 2) = src.principal_point.y();
    const Eigen::Matrix3d Hm = K * (Eigen::Matrix3d::Identity() - t_cam * Vector3d(0, 0, 1).transpose() / plane) *
                               K.inverse();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (!r.coverage.at(x, y)) continue;
        const Vector3d p(r.image.at(x, y, 0) * W - 0.5, r.image.at(x, y, 1) * H - 0.5, 1.0);
        const Vector3d q = Hm * p;
        worst_h = std::max(worst_h, (q.head<2>() / q.z() - Vector2d(x, y)).cwiseAbs().maxCoeff());
        ++checked;
      }
    }
  }
  out.require(checked > 10000 && worst_h <= 1.0,
              "warp vs homography max " + fmt(worst_h) + " px over " + std::to_string(checked) + " pixels");
}

// ------------------------------------------------------------------ 2

void weights(Outcome& out) {
  CameraView target;
  auto at = [](int id, double d) {
    CameraView c;
    c.id = id;
    c.position = Vector3d(d, 0.0, 0.0);
    return c;
  };
  const auto w13 = compute_view_weights(target, {at(1, 1.0), at(2, 3.0)});
  const auto w124 = compute_view_weights(target, {at(1, 1.0), at(2, 2.0), at(3, 4.0)});
  const double s13 = 1.0 / 1.0 + 1.0 / 3.0, s124 = 1.0 / 1.0 + 1.0 / 2.0 + 1.0 / 4.0;
  const bool exact = w13[0] == (1.0 / 1.0) / s13 && w13[1] == (1.0 / 3.0) / s13 && w124[0] == (1.0 / 1.0) / s124 &&
                     w124[1] == (1.0 / 2.0) / s124 && w124[2] == (1.0 / 4.0) / s124;
  out.require(exact && w13[0] == 0.75 && w13[1] == 0.25, "hand-normalized cases exact");
  bool equal_ok = true;
  for (int n = 1; n <= 6; ++n) {
    std::vector<CameraView> nb;
    for (int k = 0; k < n; ++k) {
      CameraView c;
      c.id = k + 1;
      c.position = 2.0 * Vector3d(std::cos(k * 2.0 * M_PI / n), std::sin(k * 2.0 * M_PI / n), 0.0);
      nb.push_back(c);
    }
    for (double w : compute_view_weights(target, nb)) equal_ok = equal_ok && std::abs(w - 1.0 / n) < 1e-15;
  }
  out.require(equal_ok, "equidistant neighbours 1/n");

  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_int_distribution<int> count(1, 12);
  double worst_sum = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 2000; ++trial) {
    CameraView t;
    t.position = Vector3d(u(rng), u(rng), u(rng));
    std::vector<CameraView> nb;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      CameraView c;
      c.id = k;
      c.position = Vector3d(u(rng), u(rng), u(rng));
      nb.push_back(c);
    }
    const auto w = compute_view_weights(t, nb);
    double sum = 0.0;
    for (double x : w) sum += x;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (camera_distance(t, nb[a]) < camera_distance(t, nb[b]) && !(w[a] > w[b])) monotone = false;
  }
  out.require(worst_sum < 1e-12, "|sum-1| max " + fmt(worst_sum) + " over 2000 draws");
  out.require(monotone, "strictly decreasing in distance");
}

// ------------------------------------------------------------------ 3

void rendering(Outcome& out) {
  double worst_slab = 0.0, worst_tel = 0.0;
  std::mt19937_64 rng(33);
  for (double sigma : {0.05, 0.3, 1.0, 2.5, 6.0}) {
    RadianceField f(GridShape{5, 5, 5, 1}, Aabb{Vector3d(-1, -1, 0), Vector3d(1, 1, 0.5)}, Vector3d::Zero(),
                    softplus_inverse(sigma), 0.0);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    for (int k = 0; k < 20; ++k) {
      const Vector3d origin(u(rng), u(rng), -2.0);
      const Vector3d dir = Vector3d(u(rng) * 0.3, u(rng) * 0.3, 1.0).normalized();
      const double L = 0.5 / dir.z();
      const RenderOutput r = render_ray(f, origin, dir, std::nullopt, RenderOptions{64, 1e-3});
      worst_slab = std::max(worst_slab, std::abs(r.opacity - (1.0 - std::exp(-sigma * L))));
      worst_tel = std::max(worst_tel, std::abs(r.weight_total - 1.0));
    }
  }
  // Heterogeneous fields for telescoping.
  for (int k = 0; k < 200; ++k) {
    RadianceField f(GridShape{4, 4, 4, 1}, Aabb{}, Vector3d::Zero());
    std::normal_distribution<double> n(0.0, 2.0);
    for (double& p : f.params()) p = n(rng);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const Vector3d dir = Vector3d(u(rng), u(rng), 1.0).normalized();
    const RenderOutput r = render_ray(f, Vector3d(u(rng), u(rng), -3.0), dir, std::nullopt);
    worst_tel = std::max(worst_tel, std::abs(r.weight_total - 1.0));
  }
  out.require(worst_slab < 1e-3, "slab opacity err " + fmt(worst_slab));
  out.require(worst_tel < 1e-6, "telescoping err " + fmt(worst_tel));

  // Analytic vs central finite differences on a 4^3 field.
  RadianceField f(GridShape{4, 4, 4, 1}, Aabb{}, Vector3d(0.2, 0.3, 0.4));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& p : f.params()) p = n(rng);
  struct Ray {
    Vector3d o, d;
    RayUpstream up;
  };
  std::vector<Ray> rays;
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int k = 0; k < 6; ++k) {
    Ray r;
    r.o = Vector3d(u(rng), u(rng), -2.5);
    r.d = Vector3d(u(rng) * 0.4, u(rng) * 0.4, 1.0).normalized();
    r.up.d_rgb = Vector3d(n(rng), n(rng), n(rng));
    r.up.d_depth = n(rng);
    r.up.d_opacity = n(rng);
    rays.push_back(r);
  }
  const RenderOptions ro{24, 1e-3};
  auto loss = [&](const RadianceField& g) {
    double s = 0.0;
    for (const auto& r : rays) {
      const RenderOutput o = render_ray(g, r.o, r.d, std::nullopt, ro);
      s += r.up.d_rgb.dot(o.rgb) + r.up.d_depth * o.depth + r.up.d_opacity * o.opacity;
    }
    return s;
  };
  std::vector<double> grad(f.params().size(), 0.0);
  for (const auto& r : rays) backprop_ray(f, r.o, r.d, std::nullopt, ro, r.up, grad);
  double worst_rel = 0.0;
  size_t compared = 0;
  const double h = 1e-5;
  for (size_t i = 0; i < f.params().size(); ++i) {
    RadianceField a = f, b = f;
    a.params()[i] += h;
    b.params()[i] -= h;
    const double fd = (loss(a) - loss(b)) / (2.0 * h);
    const double scale = std::max(std::abs(fd), std::abs(grad[i]));
    if (scale < 1e-6) continue;
    worst_rel = std::max(worst_rel, std::abs(fd - grad[i]) / scale);
    ++compared;
  }
  out.require(compared > 50 && worst_rel < 1e-3,
              "gradient rel err " + fmt(worst_rel) + " over " + std::to_string(compared) + " params");
}

// ------------------------------------------------------------------ 4

void depth_proxy(Outcome& out) {
  const int W = 40, H = 32;
  DepthMap ramp(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) ramp.at(x, y) = 2.0 + 0.05 * x - 0.03 * y;
  Mask hole(W, H);
  for (int y = 6; y < 26; ++y)
    for (int x = 5; x < 33; ++x) hole.set(x, y, true);
  DepthMap corrupted = ramp;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (hole.at(x, y)) corrupted.at(x, y) = 50.0;
  const DepthMap filled = inpaint_background_depth(corrupted, hole);
  double worst = 0.0;
  for (size_t i = 0; i < ramp.data.size(); ++i) worst = std::max(worst, std::abs(filled.data[i] - ramp.data[i]));
  out.require(worst < 1e-4, "ramp restored within " + fmt(worst));

  std::mt19937_64 rng(44);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_real_distribution<double> u(0.5, 9.0);
    DepthMap d(W, H, 1);
    for (double& v : d.data) v = u(rng);
    Mask m(W, H);
    std::bernoulli_distribution b(0.35);
    for (int y = 1; y < H - 1; ++y)
      for (int x = 1; x < W - 1; ++x) m.set(x, y, b(rng));
    if (trial % 3 == 0) m = dilate(m, 2);
    for (int x = 0; x < W; ++x) m.set(x, 0, false);
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (!m.at(x, y)) {
          lo = std::min(lo, d.at(x, y));
          hi = std::max(hi, d.at(x, y));
        }
    const DepthMap f = inpaint_background_depth(d, m);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (m.at(x, y) && (f.at(x, y) < lo - 1e-9 || f.at(x, y) > hi + 1e-9)) ++violations;
  }
  out.require(violations == 0, "maximum principle on 100 random masks (" + std::to_string(violations) + " violations)");
}

// ------------------------------------------------------------------ 5

void end_to_end(Outcome& out) {
  auto scene = std::make_shared<const FixtureScene>(make_scene("cube-to-cylinder"));
  const OracleCorrector oracle(scene, ViewCatalog(build_dataset(*scene)));
  const FixtureRun run = run_fixture(scene, oracle, PreprocessConfig{}, TrainConfig{});
  const EvalReport rep = evaluate_fixture(*scene, run.field, run.dataset);
  out.require(rep.holdout_psnr_min >= 30.0, "held-out PSNR min " + fmt(rep.holdout_psnr_min) + " dB (>= 30)");
  out.require(rep.background_l1 < 0.02, "background L1 " + fmt(rep.background_l1) + " (< 0.02)");
  out.require(run.rounds.size() == 10, std::to_string(run.rounds.size()) + " update rounds");
}

// ------------------------------------------------------------------ 6

// Planar replacement object: the two-layer depth proxy is exact for it, so the
// comparison isolates view independence and depth supervision.
void ablations(Outcome& out) {
  auto scene = std::make_shared<const FixtureScene>(make_scene("cube-to-card"));
  const ViewCatalog catalog(build_dataset(*scene));
  auto oracle = std::make_shared<const OracleCorrector>(scene, catalog);
  const JitterCorrector jitter(7, 0.2, 4, oracle);
  TrainConfig tc;
  PreprocessConfig base;
  PreprocessConfig independent;
  independent.independent = true;
  TrainConfig no_depth = tc;
  no_depth.w_depth_warmup = 0.0;

  const FixtureRun b = run_fixture(scene, jitter, base, tc);
  const FixtureRun i = run_fixture(scene, jitter, independent, tc);
  const FixtureRun n = run_fixture(scene, jitter, base, no_depth);
  const EvalReport rb = evaluate_fixture(*scene, b.field, b.dataset, &b.preprocessed);
  const EvalReport ri = evaluate_fixture(*scene, i.field, i.dataset, &i.preprocessed);
  const EvalReport rn = evaluate_fixture(*scene, n.field, n.dataset, &n.preprocessed);
  const double ratio = ri.image_inconsistency / rb.image_inconsistency;
  out.require(ratio >= 2.0, "independent/baseline inconsistency " + fmt(ri.image_inconsistency) + "/" +
                                fmt(rb.image_inconsistency) + " = " + fmt(ratio) + "x (>= 2; renders " +
                                fmt(ri.render_inconsistency / rb.render_inconsistency) + "x)");
  out.require(ri.masked_depth_rmse > rb.masked_depth_rmse,
              "independent depth RMSE " + fmt(ri.masked_depth_rmse) + " > " + fmt(rb.masked_depth_rmse));
  out.require(rn.masked_depth_rmse > rb.masked_depth_rmse,
              "no-depth warmup depth RMSE " + fmt(rn.masked_depth_rmse) + " > " + fmt(rb.masked_depth_rmse));
}

// ------------------------------------------------------------------ 7

void four_d(Outcome& out) {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_real_distribution<double> ua(-M_PI, M_PI), ut(-100.0, 100.0), up(-50.0, 50.0);
    std::uniform_int_distribution<int> count(3, 20);
    const double a = ua(rng);
    Eigen::Matrix2d R;
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const Vector2d t(ut(rng), ut(rng));
    std::vector<Vector2d> src, dst;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      src.emplace_back(up(rng), up(rng));
      dst.push_back(R * src.back() + t);
    }
    const SimilarityTransform2D T = estimate_rigid_transform(src, dst, false);
    worst = std::max({worst, (T.rotation - R).cwiseAbs().maxCoeff(), (T.translation - t).cwiseAbs().maxCoeff()});
  }
  out.require(worst < 1e-6, "Procrustes max err " + fmt(worst) + " over 1000 trials");

  auto sword = std::make_shared<const FixtureScene>(make_scene("rotating-sword"));
  const OracleCorrector oracle(sword, ViewCatalog(build_dataset(*sword)));
  const FixtureRun run = run_fixture(sword, oracle, PreprocessConfig{}, TrainConfig{}, PreprocessPath::Dynamic);
  const EvalReport rep = evaluate_fixture(*sword, run.field, run.dataset);
  bool all = rep.frame_psnr_min.size() == 3;
  std::string per;
  for (double p : rep.frame_psnr_min) {
    all = all && p >= 30.0;
    per += (per.empty() ? "" : ", ") + fmt(p);
  }
  out.require(all, "3-frame per-frame PSNR min [" + per + "] dB (>= 30)");

  FixtureOptions one;
  one.frames = 1;
  auto single = std::make_shared<const FixtureScene>(make_scene("rotating-sword", one));
  const OracleCorrector oracle1(single, ViewCatalog(build_dataset(*single)));
  TrainConfig small;
  small.warmup_steps = 40;
  small.idu_rounds = 2;
  small.steps_per_round = 20;
  const FixtureRun dyn = run_fixture(single, oracle1, PreprocessConfig{}, small, PreprocessPath::Dynamic);
  const FixtureRun stat = run_fixture(single, oracle1, PreprocessConfig{}, small, PreprocessPath::Static);
  bool images_equal = true;
  for (const auto& [id, img] : dyn.preprocessed) images_equal = images_equal && img == stat.preprocessed.at(id);
  out.require(images_equal && serialize_field(dyn.field) == serialize_field(stat.field),
              "1-frame dynamic run byte-identical to static");
}

// ------------------------------------------------------------------ 8

void determinism(Outcome& out) {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / ("seedfill_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  auto run_once = [&](const std::string& name) {
    RunConfig c = parse_run_config(R"({"corrector": "jitter", "rng_seed": 1234,
      "train": {"warmup_steps": 60, "idu_rounds": 3, "steps_per_round": 25, "max_concurrency": 2},
      "preprocess": {"max_concurrency": 2}})");
    c.output_dir = (base / name).string();
    std::ostringstream log;
    Pipeline p(c, log);
    p.run("all");
  };
  run_once("a");
  run_once("b");
  size_t compared = 0;
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), base / "a");
    const std::string ext = rel.extension().string();
    if (ext != ".bin" && rel.filename() != "metrics.jsonl" && rel.filename() != "metrics.json" &&
        rel.filename() != "log.jsonl")
      continue;
    same = same && read_file_bytes(e.path().string()) == read_file_bytes((base / "b" / rel).string());
    ++compared;
  }
  out.require(same && compared >= 7, std::to_string(compared) + " checkpoint/metrics files byte-identical");
  fs::remove_all(base);
}

// ------------------------------------------------------------------ 9

void corrector_contract(Outcome& out) {
  auto scene = std::make_shared<const FixtureScene>(make_scene("cube-to-card"));
  const SceneDataset ds = build_dataset(*scene);
  auto oracle = std::make_shared<const OracleCorrector>(scene, ViewCatalog(ds));
  auto jitter = std::make_shared<const JitterCorrector>(5, 0.2, 4, nullptr);
  StubCorrectorServer server([jitter](const CorrectorRequest& r) {
    CorrectorResponse resp = jitter->correct(r);
    // Misbehave outside the mask; the client must undo it.
    for (int y = 0; y < r.image.height; ++y)
      for (int x = 0; x < r.image.width; ++x)
        if (!r.mask.at(x, y))
          for (int c = 0; c < 3; ++c) resp.image.at(x, y, c) = 0.5;
    return resp;
  });
  const RemoteCorrector remote(server.endpoint());
  const IdentityCorrector identity;
  const std::vector<std::pair<std::string, const Corrector*>> all = {
      {"identity", &identity}, {"oracle", oracle.get()}, {"jitter", jitter.get()}, {"remote", &remote}};

  std::mt19937_64 rng(99);
  for (const auto& [name, corr] : all) {
    bool zero_identity = true, outside = true, deterministic = true;
    const int hits_before = server.hits();
    for (int k = 0; k < 8; ++k) {
      const TrainingView& v = ds.views[static_cast<size_t>(k) % ds.views.size()];
      CorrectorRequest req;
      req.image = v.rgb;
      req.mask = (k % 2 == 0) ? v.user_mask : dilate(v.user_mask, k);
      req.depth = DepthMap(v.width(), v.height(), 1, 3.0);
      req.prompt = "a card";
      req.view_id = v.id;
      req.rng_seed = rng();
      req.noise_level = 0.0;
      zero_identity = zero_identity && corr->correct(req).image == req.image;
      for (double lambda : {0.3, 1.0}) {
        req.noise_level = lambda;
        const CorrectorResponse a = corr->correct(req), b = corr->correct(req);
        deterministic = deterministic && a.image == b.image && a.object_mask == b.object_mask;
        for (int y = 0; y < v.height(); ++y)
          for (int x = 0; x < v.width(); ++x)
            if (!req.mask.at(x, y))
              for (int c = 0; c < 3; ++c) outside = outside && a.image.at(x, y, c) == req.image.at(x, y, c);
      }
    }
    if (name == "remote") zero_identity = zero_identity && server.hits() - hits_before == 8 * 4;
    out.require(zero_identity && outside && deterministic,
                name + (zero_identity ? "" : " lambda0") + (outside ? "" : " outside-mask") +
                    (deterministic ? "" : " determinism"));
  }
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "geometry suite", 10, geometry},
      {2, "view weight suite", 1, weights},
      {3, "rendering suite", 60, rendering},
      {4, "depth proxy suite", 30, depth_proxy},
      {5, "end-to-end oracle run (cube-to-cylinder)", 15 * 60, end_to_end},
      {6, "ablation reproduction", 30 * 60, ablations},
      {7, "4D suite", 20 * 60, four_d},
      {8, "determinism", 0, determinism},
      {9, "corrector contract suite", 30, corrector_contract},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0) o.require(secs < c.budget_s, "runtime " + fmt(secs, 3) + " s (< " + fmt(c.budget_s) + " s)");
    else o.require(true, "runtime " + fmt(secs, 3) + " s");
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail.str()
              << std::endl;
  }
  std::cout << (failed ? "ACCEPTANCE FAILED: " + std::to_string(failed) + " criterion(s)" : "ACCEPTANCE PASSED")
            << std::endl;
  return failed ? 1 : 0;
}
