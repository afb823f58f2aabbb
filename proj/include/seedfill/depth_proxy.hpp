#pragma once

#include "seedfill/image.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

// Per-view depth supervision: a constant plane inside the object mask and a
// background-consistent fill everywhere else.
struct TwoLayerDepth {
  DepthMap background_depth;
  double object_plane_depth = 0.0;
  Mask object_mask;
  DepthMap composite;
};

struct HarmonicFillOptions {
  double tolerance = 1e-10;  // max abs Laplacian residual
  double relaxation = 1.8;   // SOR factor
  int max_iterations = 200000;
};

// Solves the discrete Laplace equation inside `mask`, using the unmasked
// values as Dirichlet data. Unmasked pixels are returned unchanged.
DepthMap inpaint_background_depth(const DepthMap& depth, const Mask& mask,
                                  const HarmonicFillOptions& options = {});

// Median of `original_depth` over `user_mask`.
double planar_object_depth(const DepthMap& original_depth, const Mask& user_mask);

TwoLayerDepth compose_two_layer_depth(DepthMap background_depth, double plane_depth, Mask object_mask);

// Throws MissingObjectMask when the view has not been segmented.
TwoLayerDepth build_two_layer_depth(const TrainingView& view, const DepthMap& rendered_depth);

}  // namespace seedfill
