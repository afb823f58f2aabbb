#include "seedfill/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seedfill/errors.hpp"

namespace seedfill {

void CorrectorRequest::validate() const {
  if (!(noise_level >= 0.0 && noise_level <= 1.0))
    throw InvalidArgument("corrector request: noise level must lie in [0,1]");
  if (image.channels != 3) throw InvalidArgument("corrector request: image must be RGB");
  if (mask.width != image.width || mask.height != image.height)
    throw InvalidArgument("corrector request: mask shape differs from image");
  if (!depth.empty() && (depth.width != image.width || depth.height != image.height))
    throw InvalidArgument("corrector request: depth shape differs from image");
}

CorrectorResponse IdentityCorrector::correct(const CorrectorRequest& request) const {
  request.validate();
  return {request.image, std::nullopt};
}

CorrectorResponse enforce_contract(const CorrectorRequest& request, CorrectorResponse response) {
  if (!response.image.same_shape(request.image))
    throw MalformedResponse(request.view_id, "corrected image has the wrong shape");
  if (response.object_mask &&
      (response.object_mask->width != request.image.width || response.object_mask->height != request.image.height))
    throw MalformedResponse(request.view_id, "object mask has the wrong shape");
  RgbImage& img = response.image;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double& v = img.at(x, y, c);
        v = request.mask.at(x, y) ? std::clamp(v, 0.0, 1.0) : request.image.at(x, y, c);
      }
  return response;
}

LatentCode combine_codes(const std::vector<LatentCode>& codes, const std::vector<double>& weights) {
  if (codes.empty() || codes.size() != weights.size()) throw InvalidArgument("combine_codes: size mismatch");
  LatentCode out = codes.front();
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (size_t k = 0; k < codes.size(); ++k) {
    if (codes[k].values.size() != out.values.size() || codes[k].width != out.width ||
        codes[k].height != out.height)
      throw InvalidArgument("combine_codes: code shapes differ");
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += weights[k] * codes[k].values[i];
  }
  return out;
}

BlockDctCodec::BlockDctCodec(int max_band) {
  if (max_band < 0 || max_band > 2 * (kBlock - 1)) throw InvalidArgument("BlockDctCodec: max_band out of range");
  for (int u = 0; u < kBlock; ++u)
    for (int v = 0; v < kBlock; ++v)
      if ((u || v) && u + v <= max_band) bands_.emplace_back(u, v);
}

double BlockDctCodec::basis(int u, int v, int x, int y) {
  auto axis = [](int k, int n) {
    const double scale = k == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
    return scale * std::cos(std::numbers::pi * (2 * n + 1) * k / (2.0 * kBlock));
  };
  return axis(u, x) * axis(v, y);
}

LatentCode BlockDctCodec::encode(const RgbImage& image) const {
  if (image.channels != 3 || image.width % kBlock || image.height % kBlock)
    throw InvalidArgument("BlockDctCodec: image must be RGB with sides divisible by 4");
  const int bw = image.width / kBlock, bh = image.height / kBlock;
  const int per_block = coefficients_per_block();
  LatentCode code{image.width, image.height, {}};
  code.values.resize(static_cast<size_t>(bw) * bh * 3 * per_block);
  size_t k = 0;
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        double mean = 0.0;
        for (int y = 0; y < kBlock; ++y)
          for (int x = 0; x < kBlock; ++x) mean += image.at(bx * kBlock + x, by * kBlock + y, c);
        mean /= kBlock * kBlock;
        code.values[k++] = mean;
        for (const auto& [u, v] : bands_) {
          double coeff = 0.0;
          for (int y = 0; y < kBlock; ++y)
            for (int x = 0; x < kBlock; ++x)
              coeff += (image.at(bx * kBlock + x, by * kBlock + y, c) - mean) * basis(u, v, x, y);
          code.values[k++] = coeff;
        }
      }
    }
  }
  return code;
}

RgbImage BlockDctCodec::decode(const LatentCode& code) const {
  if (code.width % kBlock || code.height % kBlock) throw InvalidArgument("BlockDctCodec: bad code size");
  const int bw = code.width / kBlock, bh = code.height / kBlock;
  const int per_block = coefficients_per_block();
  if (code.values.size() != static_cast<size_t>(bw) * bh * 3 * per_block)
    throw InvalidArgument("BlockDctCodec: code length does not match its shape");
  RgbImage img(code.width, code.height, 3);
  size_t k = 0;
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        const double mean = code.values[k++];
        for (int y = 0; y < kBlock; ++y)
          for (int x = 0; x < kBlock; ++x) img.at(bx * kBlock + x, by * kBlock + y, c) = mean;
        for (const auto& [u, v] : bands_) {
          const double coeff = code.values[k++];
          for (int y = 0; y < kBlock; ++y)
            for (int x = 0; x < kBlock; ++x) img.at(bx * kBlock + x, by * kBlock + y, c) += coeff * basis(u, v, x, y);
        }
      }
    }
  }
  return img;
}

}  // namespace seedfill
