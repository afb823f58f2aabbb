#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "generators.hpp"
#include "seedfill/depth_proxy.hpp"
#include "seedfill/fixtures.hpp"

using namespace seedfill;
using seedfill::testgen::Gen;

namespace {

DepthMap ramp(int w, int h, double a, double bx, double by) {
  DepthMap d(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d.at(x, y) = a + bx * x + by * y;
  return d;
}

// Unmasked neighbours of masked pixels: the Dirichlet data of the fill.
std::pair<double, double> boundary_range(const DepthMap& d, const Mask& m) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      if (m.at(x, y)) continue;
      bool touches = false;
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}})
        touches |= m.contains(x + dx, y + dy) && m.at(x + dx, y + dy);
      if (touches) {
        lo = std::min(lo, d.at(x, y));
        hi = std::max(hi, d.at(x, y));
      }
    }
  return {lo, hi};
}

TrainingView flat_view(int w, int h) {
  TrainingView v;
  v.camera = testgen::pinhole(0, {0, 0, 0}, 50, w, h);
  v.rgb = RgbImage(w, h, 3);
  v.user_mask = Mask(w, h);
  return v;
}

}  // namespace

TEST(HarmonicFill, EmptyMaskLeavesInputUnchanged) {
  Gen g(1);
  const DepthMap d = g.image(12, 9, 1, 0.5, 4.0);
  EXPECT_EQ(inpaint_background_depth(d, Mask(12, 9)), d);
}

TEST(HarmonicFill, ConstantStaysConstant) {
  Gen g(2);
  const DepthMap d(20, 14, 1, 3.25);
  const DepthMap out = inpaint_background_depth(d, g.mask(20, 14, 0.6));
  for (double v : out.data) EXPECT_NEAR(v, 3.25, 1e-9);
}

TEST(HarmonicFill, RestoresLinearRampInRectangularHole) {
  const DepthMap truth = ramp(32, 24, 1.0, 0.05, -0.02);
  DepthMap holed = truth;
  Mask hole(32, 24);
  for (int y = 5; y < 19; ++y)
    for (int x = 8; x < 27; ++x) {
      hole.set(x, y, true);
      holed.at(x, y) = 100.0;
    }
  const DepthMap out = inpaint_background_depth(holed, hole);
  for (size_t i = 0; i < out.data.size(); ++i) EXPECT_NEAR(out.data[i], truth.data[i], 1e-4);
}

TEST(HarmonicFill, RejectsFullMaskAndShapeMismatch) {
  EXPECT_THROW(inpaint_background_depth(DepthMap(5, 5, 1, 1.0), Mask(5, 5, true)), InvalidArgument);
  EXPECT_THROW(inpaint_background_depth(DepthMap(5, 5, 1, 1.0), Mask(4, 5)), InvalidArgument);
}

TEST(HarmonicFillProperty, MaximumPrincipleAndIdempotence) {
  Gen g(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = g.integer(6, 28), h = g.integer(6, 28);
    const DepthMap d = g.image(w, h, 1, 0.5, 6.0);
    const Mask m = g.coin() ? g.interior_rect(w, h) : g.mask(w, h, g.uniform(0.1, 0.7));
    if (m.all() || !m.any()) continue;
    const DepthMap out = inpaint_background_depth(d, m);
    const auto [lo, hi] = boundary_range(d, m);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (m.at(x, y)) {
          ASSERT_GE(out.at(x, y), lo - 1e-9);
          ASSERT_LE(out.at(x, y), hi + 1e-9);
        } else {
          ASSERT_EQ(out.at(x, y), d.at(x, y));
        }
      }
    const DepthMap again = inpaint_background_depth(out, m);
    for (size_t i = 0; i < out.data.size(); ++i) ASSERT_NEAR(again.data[i], out.data[i], 1e-8);
  }
}

TEST(PlaneDepth, MedianOverMask) {
  DepthMap d(3, 2, 1, 50.0);
  Mask m(3, 2);
  d.at(0, 0) = 1;
  d.at(1, 0) = 9;
  d.at(2, 1) = 2;
  m.set(0, 0, true);
  m.set(1, 0, true);
  m.set(2, 1, true);
  EXPECT_DOUBLE_EQ(planar_object_depth(d, m), 2.0);
  EXPECT_DOUBLE_EQ(planar_object_depth(DepthMap(4, 4, 1, 2.0), Mask(4, 4, true)), 2.0);
}

TEST(PlaneDepth, RejectsEmptyMask) {
  EXPECT_THROW(planar_object_depth(DepthMap(4, 4, 1, 2.0), Mask(4, 4)), InvalidArgument);
}

TEST(PlaneDepth, CubeFixtureLiesBetweenNearAndFarFaces) {
  const FixtureScene scene = make_scene("cube-to-cylinder");
  for (int cam_id : scene.seed_camera_ids) {
    const CameraView& cam = scene.camera(cam_id);
    const ViewRender r = render_original(scene, cam, 0);
    const double plane = planar_object_depth(r.depth, analytic_silhouette(scene.original_object, cam, 0));
    double near = std::numeric_limits<double>::infinity(), far = 0.0;
    for (const auto& corner : scene.original_object.bounding_corners(0)) {
      const double z = project_point(cam, corner).depth;
      near = std::min(near, z);
      far = std::max(far, z);
    }
    EXPECT_GE(plane, near) << "camera " << cam_id;
    EXPECT_LE(plane, far) << "camera " << cam_id;
  }
}

TEST(TwoLayerDepth, MissingObjectMaskIsReported) {
  TrainingView v = flat_view(8, 8);
  v.id = 4;
  v.user_mask.set(3, 3, true);
  try {
    build_two_layer_depth(v, DepthMap(8, 8, 1, 2.0));
    FAIL() << "expected MissingObjectMask";
  } catch (const MissingObjectMask& e) {
    EXPECT_EQ(e.view_id(), 4);
  }
}

TEST(TwoLayerDepth, EmptyObjectMaskGivesBackgroundEverywhere) {
  TrainingView v = flat_view(16, 12);
  for (int y = 3; y < 8; ++y)
    for (int x = 4; x < 11; ++x) v.user_mask.set(x, y, true);
  v.object_mask = Mask(16, 12);
  const DepthMap rendered = ramp(16, 12, 2.0, 0.01, 0.02);
  const TwoLayerDepth t = build_two_layer_depth(v, rendered);
  EXPECT_EQ(t.composite, t.background_depth);
  for (size_t i = 0; i < rendered.data.size(); ++i) EXPECT_NEAR(t.composite.data[i], rendered.data[i], 1e-6);
}

TEST(TwoLayerDepth, ObjectMaskEqualToUserMaskOnConstantScene) {
  TrainingView v = flat_view(10, 10);
  for (int y = 2; y < 7; ++y)
    for (int x = 3; x < 8; ++x) v.user_mask.set(x, y, true);
  v.object_mask = v.user_mask;
  DepthMap rendered(10, 10, 1, 4.0);
  for (int y = 2; y < 7; ++y)
    for (int x = 3; x < 8; ++x) rendered.at(x, y) = 1.5;
  const TwoLayerDepth t = build_two_layer_depth(v, rendered);
  EXPECT_DOUBLE_EQ(t.object_plane_depth, 1.5);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) EXPECT_DOUBLE_EQ(t.composite.at(x, y), v.user_mask.at(x, y) ? 1.5 : 4.0);
}

TEST(TwoLayerDepthProperty, CompositeIsPiecewiseExact) {
  Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = g.integer(4, 20), h = g.integer(4, 20);
    const DepthMap bg = g.image(w, h, 1, 0.5, 5.0);
    const Mask obj = g.mask(w, h, g.uniform(0, 1));
    const double plane = g.uniform(0.5, 5.0);
    const TwoLayerDepth t = compose_two_layer_depth(bg, plane, obj);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ASSERT_EQ(t.composite.at(x, y), obj.at(x, y) ? plane : bg.at(x, y));
    for (double v : t.composite.data) ASSERT_GT(v, 0.0);
  }
}

TEST(TwoLayerDepth, RejectsNonPositivePlane) {
  EXPECT_THROW(compose_two_layer_depth(DepthMap(3, 3, 1, 1.0), 0.0, Mask(3, 3, true)), InvalidArgument);
}
