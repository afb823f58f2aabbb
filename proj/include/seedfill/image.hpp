#pragma once

#include <cstdint>
#include <vector>

namespace seedfill {

// Row-major, channel-interleaved image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  size_t index(int x, int y, int c = 0) const {
    return (static_cast<size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  bool operator==(const Image&) const = default;
};

using RgbImage = Image;    // 3 channels, values in [0,1]
using DepthMap = Image;    // 1 channel, camera-space z

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool empty() const { return data.empty(); }
  bool at(int x, int y) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  size_t count() const;
  bool any() const { return count() > 0; }
  bool all() const { return count() == data.size(); }

  bool operator==(const Mask&) const = default;
};

Mask mask_union(const Mask& a, const Mask& b);
Mask mask_intersection(const Mask& a, const Mask& b);
Mask dilate(const Mask& m, int radius);

// Mean squared error over all pixels and channels.
double mean_squared_error(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);
// PSNR restricted to masked pixels; +inf when identical.
double masked_psnr(const Image& a, const Image& b, const Mask& mask);
double masked_mean_abs(const Image& a, const Image& b, const Mask& mask);

// Bilinear sample with border clamping.
double sample_bilinear(const Image& img, double x, double y, int c);

void clamp_unit(Image& img);

}  // namespace seedfill
