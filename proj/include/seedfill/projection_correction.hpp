#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seedfill/corrector.hpp"
#include "seedfill/depth_proxy.hpp"
#include "seedfill/image.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

struct ProjectionResult {
  RgbImage image;
  Mask coverage;
  int source_view = 0;
};

struct WarpOptions {
  int subsamples = 2;  // per-axis source subsamples per pixel
};

// Splats every source pixel inside the source user mask, at its composite
// depth, into the destination view (nearest pixel, nearest depth wins).
// Outside the destination user mask the result equals dst.rgb exactly.
ProjectionResult forward_warp(const TrainingView& src, const TwoLayerDepth& src_depth, const TrainingView& dst,
                              const WarpOptions& options = {});

enum class BlendSpace { Image, Latent };

// `target` supplies the pixels no projection covers and everything outside
// `target_mask`.
RgbImage blend_projections(const std::vector<ProjectionResult>& projections, const std::vector<double>& weights,
                           BlendSpace space, const Codec& codec, const RgbImage& target, const Mask& target_mask);

// Object segmentation fallback when a corrector does not return a mask.
using ObjectSegmenter = std::function<std::optional<Mask>(const TrainingView& view, const RgbImage& inpainted)>;

struct CorrectionResult {
  RgbImage image;
  std::optional<Mask> object_mask;
};

// Runs the corrector on `raw` inside the view's user mask. noise_level 0
// returns raw without calling the corrector.
CorrectionResult correct_image(const RgbImage& raw, const TrainingView& view, const DepthMap& depth,
                               double noise_level, const Corrector& corrector, const std::string& prompt,
                               uint64_t rng_seed);

struct PreprocessConfig {
  int neighbors = 3;
  double lambda_seed0 = 1.0;
  double lambda_seed = 0.55;
  double lambda_nonseed = 0.45;
  BlendSpace blend_space = BlendSpace::Latent;
  WarpOptions warp;
  RenderOptions render;
  uint64_t rng_seed = 0;
  int max_concurrency = 1;
  bool independent = false;  // every view from its own image at lambda_seed0
};

struct ViewProvenance {
  double noise_level = 0.0;
  std::vector<int> source_views;
  std::vector<double> weights;
  bool fallback = false;
  std::string stage;
};

// Per-view artifacts produced alongside the inpainted images.
struct PreprocessState {
  std::map<int, DepthMap> original_depth;
  std::map<int, TwoLayerDepth> depth;
  std::map<int, ViewProvenance> provenance;
};

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0);

// Renders the original depth of every listed view that lacks one.
void ensure_original_depth(const SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                           const std::vector<int>& view_ids, const RenderOptions& render);

// Stores a corrected image on the view, resolves its object mask (response,
// then segmenter, then `fallback_mask`) and builds its two-layer depth.
void commit_view(SceneDataset& dataset, PreprocessState& state, int view_id, RgbImage image,
                 std::optional<Mask> object_mask, ViewProvenance provenance, const ObjectSegmenter& segmenter,
                 const std::optional<Mask>& fallback_mask = std::nullopt);

void generate_seed_images(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                          const Corrector& corrector, const Codec& codec, const PreprocessConfig& config,
                          const ObjectSegmenter& segmenter = {});

// Propagates from the listed seed views (default: dataset.seed_ids) to every
// other view of `frame`.
void generate_other_views(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                          const Corrector& corrector, const Codec& codec, const PreprocessConfig& config,
                          const ObjectSegmenter& segmenter = {}, int frame = 0,
                          std::optional<std::vector<int>> seed_views = std::nullopt);

// View-independent variant: every view of `frame` corrected from its own image.
void generate_independent_views(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                                const Corrector& corrector, const PreprocessConfig& config,
                                const ObjectSegmenter& segmenter = {}, int frame = 0);

// Seeds, then other views, for one frame (or the independent variant).
void preprocess_static(SceneDataset& dataset, PreprocessState& state, const RadianceField& field,
                       const Corrector& corrector, const Codec& codec, const PreprocessConfig& config,
                       const ObjectSegmenter& segmenter = {});

}  // namespace seedfill
