#include "seedfill/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seedfill/errors.hpp"

namespace seedfill {

size_t Mask::count() const {
  return static_cast<size_t>(std::count_if(data.begin(), data.end(), [](uint8_t v) { return v != 0; }));
}

namespace {
void check_same(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidArgument("mask shape mismatch");
}
}  // namespace

Mask mask_union(const Mask& a, const Mask& b) {
  check_same(a, b);
  Mask out(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = (a.data[i] || b.data[i]) ? 1 : 0;
  return out;
}

Mask mask_intersection(const Mask& a, const Mask& b) {
  check_same(a, b);
  Mask out(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = (a.data[i] && b.data[i]) ? 1 : 0;
  return out;
}

Mask dilate(const Mask& m, int radius) {
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dx * dx + dy * dy > radius * radius) continue;
          if (out.contains(x + dx, y + dy)) out.set(x + dx, y + dy, true);
        }
      }
    }
  }
  return out;
}

double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InvalidArgument("image shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double masked_psnr(const Image& a, const Image& b, const Mask& mask) {
  if (!a.same_shape(b) || a.width != mask.width || a.height != mask.height)
    throw InvalidArgument("masked_psnr shape mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        acc += d * d;
        ++n;
      }
    }
  }
  if (n == 0 || acc == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(n) / acc);
}

double masked_mean_abs(const Image& a, const Image& b, const Mask& mask) {
  if (!a.same_shape(b) || a.width != mask.width || a.height != mask.height)
    throw InvalidArgument("masked_mean_abs shape mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < a.channels; ++c) {
        acc += std::abs(a.at(x, y, c) - b.at(x, y, c));
        ++n;
      }
    }
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

double sample_bilinear(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = std::min(static_cast<int>(x), img.width - 1);
  const int y0 = std::min(static_cast<int>(y), img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
  return top * (1 - fy) + bottom * fy;
}

void clamp_unit(Image& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace seedfill
