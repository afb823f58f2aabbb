#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedfill/image.hpp"

namespace seedfill {

// One noise-then-denoise refinement request. noise_level is the fraction of
// the denoising horizon that is re-run (0 = untouched, 1 = full generation).
struct CorrectorRequest {
  RgbImage image;
  Mask mask;
  DepthMap depth;
  std::string prompt;
  double noise_level = 0.0;
  uint64_t rng_seed = 0;
  int view_id = 0;
  int frame = 0;

  void validate() const;
};

struct CorrectorResponse {
  RgbImage image;
  std::optional<Mask> object_mask;
};

class CorrectorError : public std::runtime_error {
 public:
  CorrectorError(int view_id, const std::string& what, int attempts = 1)
      : std::runtime_error("view " + std::to_string(view_id) + ": " + what),
        view_id_(view_id),
        attempts_(attempts) {}
  int view_id() const { return view_id_; }
  int attempts() const { return attempts_; }

 private:
  int view_id_;
  int attempts_;
};

class CorrectorTimeout : public CorrectorError {
 public:
  using CorrectorError::CorrectorError;
};

class CorrectorUnavailable : public CorrectorError {
 public:
  using CorrectorError::CorrectorError;
};

class MalformedResponse : public CorrectorError {
 public:
  using CorrectorError::CorrectorError;
};

class CorrectorHttpError : public CorrectorError {
 public:
  CorrectorHttpError(int view_id, int status, int attempts)
      : CorrectorError(view_id, "corrector returned HTTP " + std::to_string(status), attempts), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Implementations must be safe for concurrent correct() calls, must return
// the input unchanged outside the mask, and must be the identity at
// noise_level 0.
class Corrector {
 public:
  virtual ~Corrector() = default;
  virtual CorrectorResponse correct(const CorrectorRequest& request) const = 0;
  virtual std::string name() const = 0;
};

class IdentityCorrector final : public Corrector {
 public:
  CorrectorResponse correct(const CorrectorRequest& request) const override;
  std::string name() const override { return "identity"; }
};

// Clips to [0,1] and restores every pixel outside the request mask from the
// request image. Throws MalformedResponse on a shape mismatch.
CorrectorResponse enforce_contract(const CorrectorRequest& request, CorrectorResponse response);

struct LatentCode {
  int width = 0;   // source image size
  int height = 0;
  std::vector<double> values;
};

LatentCode combine_codes(const std::vector<LatentCode>& codes, const std::vector<double>& weights);

class Codec {
 public:
  virtual ~Codec() = default;
  virtual LatentCode encode(const RgbImage& image) const = 0;
  virtual RgbImage decode(const LatentCode& code) const = 0;
  // Round-trip error bound on images the codec represents exactly.
  virtual double tolerance() const = 0;
};

// Linear stand-in for an image autoencoder. Per 4x4 block and channel the code
// holds the block mean and the orthonormal DCT-II coefficients of the
// residual whose frequency indices satisfy u + v <= max_band.
class BlockDctCodec final : public Codec {
 public:
  static constexpr int kBlock = 4;

  explicit BlockDctCodec(int max_band = 3);

  LatentCode encode(const RgbImage& image) const override;
  RgbImage decode(const LatentCode& code) const override;
  double tolerance() const override { return 1e-6; }

  int coefficients_per_block() const { return static_cast<int>(bands_.size()) + 1; }
  // Basis image value at (x,y) of band (u,v) inside one block.
  static double basis(int u, int v, int x, int y);

 private:
  std::vector<std::pair<int, int>> bands_;
};

}  // namespace seedfill
