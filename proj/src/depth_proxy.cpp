#include "seedfill/depth_proxy.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "seedfill/errors.hpp"

namespace seedfill {

DepthMap inpaint_background_depth(const DepthMap& depth, const Mask& mask, const HarmonicFillOptions& options) {
  if (depth.channels != 1 || depth.width != mask.width || depth.height != mask.height)
    throw InvalidArgument("inpaint_background_depth: shape mismatch");
  if (mask.all()) throw InvalidArgument("inpaint_background_depth: mask covers the whole image");
  DepthMap out = depth;
  if (!mask.any()) return out;

  const int w = depth.width;
  const int h = depth.height;
  std::vector<int> unknown;
  double boundary_sum = 0.0;
  int boundary_count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y)) {
        unknown.push_back(y * w + x);
        continue;
      }
      const bool touches = (x > 0 && mask.at(x - 1, y)) || (x + 1 < w && mask.at(x + 1, y)) ||
                           (y > 0 && mask.at(x, y - 1)) || (y + 1 < h && mask.at(x, y + 1));
      if (touches) {
        boundary_sum += depth.at(x, y);
        ++boundary_count;
      }
    }
  }
  const double init = boundary_count ? boundary_sum / boundary_count : 0.0;
  for (int idx : unknown) out.data[static_cast<size_t>(idx)] = init;

  // Image borders are reflective: only in-image neighbors take part.
  auto neighbor_mean = [&](int x, int y) {
    double s = 0.0;
    int n = 0;
    if (x > 0) { s += out.at(x - 1, y); ++n; }
    if (x + 1 < w) { s += out.at(x + 1, y); ++n; }
    if (y > 0) { s += out.at(x, y - 1); ++n; }
    if (y + 1 < h) { s += out.at(x, y + 1); ++n; }
    return s / n;
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    for (int idx : unknown) {
      const int x = idx % w, y = idx / w;
      double& v = out.at(x, y);
      v += options.relaxation * (neighbor_mean(x, y) - v);
    }
    double residual = 0.0;
    for (int idx : unknown) {
      const int x = idx % w, y = idx / w;
      residual = std::max(residual, std::abs(neighbor_mean(x, y) - out.at(x, y)));
    }
    if (residual < options.tolerance) break;
  }
  return out;
}

double planar_object_depth(const DepthMap& original_depth, const Mask& user_mask) {
  if (original_depth.width != user_mask.width || original_depth.height != user_mask.height)
    throw InvalidArgument("planar_object_depth: shape mismatch");
  std::vector<double> values;
  for (int y = 0; y < user_mask.height; ++y)
    for (int x = 0; x < user_mask.width; ++x)
      if (user_mask.at(x, y)) values.push_back(original_depth.at(x, y));
  if (values.empty()) throw InvalidArgument("planar_object_depth: empty mask");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

TwoLayerDepth compose_two_layer_depth(DepthMap background_depth, double plane_depth, Mask object_mask) {
  if (background_depth.width != object_mask.width || background_depth.height != object_mask.height)
    throw InvalidArgument("two-layer depth: shape mismatch");
  if (object_mask.any() && !(plane_depth > 0.0 && std::isfinite(plane_depth)))
    throw InvalidArgument("two-layer depth: plane depth must be positive and finite");
  TwoLayerDepth out;
  out.composite = background_depth;
  for (int y = 0; y < object_mask.height; ++y)
    for (int x = 0; x < object_mask.width; ++x)
      if (object_mask.at(x, y)) out.composite.at(x, y) = plane_depth;
  out.background_depth = std::move(background_depth);
  out.object_plane_depth = plane_depth;
  out.object_mask = std::move(object_mask);
  return out;
}

TwoLayerDepth build_two_layer_depth(const TrainingView& view, const DepthMap& rendered_depth) {
  if (!view.object_mask) throw MissingObjectMask(view.id);
  DepthMap background = inpaint_background_depth(rendered_depth, view.user_mask);
  const double plane = planar_object_depth(rendered_depth, view.user_mask);
  return compose_two_layer_depth(std::move(background), plane, *view.object_mask);
}

}  // namespace seedfill
