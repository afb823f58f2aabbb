#include "seedfill/image_io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "seedfill/errors.hpp"

namespace seedfill {

namespace {

struct PngWriteBuffer {
  std::vector<uint8_t>* out;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + length);
}

void png_flush_cb(png_structp) {}

struct PngReadBuffer {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + length > buf->bytes.size()) png_error(png, "PNG data truncated");
  std::memcpy(data, buf->bytes.data() + buf->pos, length);
  buf->pos += length;
}

std::vector<uint8_t> encode_png(int width, int height, int color_type, int bit_depth,
                                const std::vector<std::vector<uint8_t>>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng initialisation failed");
  std::vector<uint8_t> out;
  PngWriteBuffer buf{&out};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed");
  }
  png_set_write_fn(png, &buf, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, const_cast<png_bytep>(row.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

struct DecodedPng {
  int width = 0, height = 0, channels = 0;
  std::vector<double> values;  // normalized to [0,1]
};

DecodedPng decode_png(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw InvalidArgument("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng initialisation failed");
  PngReadBuffer buf{bytes, 0};
  DecodedPng out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InvalidArgument("PNG decoding failed");
  }
  png_set_read_fn(png, &buf, png_read_cb);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host order
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> row(rowbytes);
  out.values.resize(static_cast<size_t>(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int i = 0; i < out.width * out.channels; ++i) {
      double v;
      if (out_depth == 16) {
        uint16_t s;
        std::memcpy(&s, row.data() + 2 * i, 2);
        v = s / 65535.0;
      } else {
        v = row[static_cast<size_t>(i)] / 255.0;
      }
      out.values[static_cast<size_t>(y) * out.width * out.channels + i] = v;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

std::vector<uint8_t> encode_png_rgb(const RgbImage& img, int bit_depth) {
  if (img.channels != 3) throw InvalidArgument("encode_png_rgb expects 3 channels");
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("PNG bit depth must be 8 or 16");
  std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    auto& row = rows[static_cast<size_t>(y)];
    row.reserve(static_cast<size_t>(img.width) * 3 * (bit_depth / 8));
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        if (bit_depth == 8) {
          row.push_back(static_cast<uint8_t>(std::lround(v * 255.0)));
        } else {
          const auto s = static_cast<uint16_t>(std::lround(v * 65535.0));
          row.push_back(static_cast<uint8_t>(s >> 8));  // PNG is big-endian
          row.push_back(static_cast<uint8_t>(s & 0xff));
        }
      }
    }
  }
  return encode_png(img.width, img.height, PNG_COLOR_TYPE_RGB, bit_depth, rows);
}

std::vector<uint8_t> encode_png_mask(const Mask& mask) {
  std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(mask.height));
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) rows[static_cast<size_t>(y)].push_back(mask.at(x, y) ? 255 : 0);
  return encode_png(mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, rows);
}

RgbImage decode_png_rgb(std::span<const uint8_t> bytes) {
  const DecodedPng d = decode_png(bytes);
  RgbImage img(d.width, d.height, 3);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = d.channels >= 3 ? c : 0;
        img.at(x, y, c) = d.values[(static_cast<size_t>(y) * d.width + x) * d.channels + src_c];
      }
  return img;
}

Mask decode_png_mask(std::span<const uint8_t> bytes) {
  const DecodedPng d = decode_png(bytes);
  Mask m(d.width, d.height);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      m.set(x, y, d.values[(static_cast<size_t>(y) * d.width + x) * d.channels] > 0.5);
  return m;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot read " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_png_rgb(const RgbImage& img, const std::string& path, int bit_depth) {
  write_file_bytes(path, encode_png_rgb(img, bit_depth));
}
void write_png_mask(const Mask& mask, const std::string& path) { write_file_bytes(path, encode_png_mask(mask)); }
RgbImage read_png_rgb(const std::string& path) { return decode_png_rgb(read_file_bytes(path)); }
Mask read_png_mask(const std::string& path) { return decode_png_mask(read_file_bytes(path)); }

void write_pfm(const DepthMap& depth, const std::string& path) {
  if (depth.channels != 1) throw InvalidArgument("write_pfm expects a single channel map");
  std::ostringstream header;
  header << "Pf\n" << depth.width << " " << depth.height << "\n-1.0\n";
  const std::string h = header.str();
  std::vector<uint8_t> bytes(h.begin(), h.end());
  // PFM rows run bottom to top.
  for (int y = depth.height - 1; y >= 0; --y)
    for (int x = 0; x < depth.width; ++x) {
      const auto v = static_cast<float>(depth.at(x, y));
      const auto* p = reinterpret_cast<const uint8_t*>(&v);
      bytes.insert(bytes.end(), p, p + 4);
    }
  write_file_bytes(path, bytes);
}

DepthMap read_pfm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "Pf") throw InvalidArgument(path + ": not a single-channel PFM");
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const double scale = std::stod(token());
  if (scale > 0) throw InvalidArgument(path + ": big-endian PFM is not supported");
  ++pos;  // single whitespace after the scale
  if (bytes.size() - pos != static_cast<size_t>(w) * h * 4) throw InvalidArgument(path + ": PFM size mismatch");
  DepthMap depth(w, h, 1);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      float v;
      std::memcpy(&v, bytes.data() + pos, 4);
      pos += 4;
      depth.at(x, y) = v;
    }
  return depth;
}

std::vector<uint8_t> encode_depth_blob(const DepthMap& depth) {
  static_assert(std::endian::native == std::endian::little);
  std::vector<uint8_t> out = {'D', 'P', 'T', '1'};
  const auto h = static_cast<uint32_t>(depth.height);
  const auto w = static_cast<uint32_t>(depth.width);
  out.insert(out.end(), reinterpret_cast<const uint8_t*>(&h), reinterpret_cast<const uint8_t*>(&h) + 4);
  out.insert(out.end(), reinterpret_cast<const uint8_t*>(&w), reinterpret_cast<const uint8_t*>(&w) + 4);
  for (double d : depth.data) {
    const auto v = static_cast<float>(d);
    out.insert(out.end(), reinterpret_cast<const uint8_t*>(&v), reinterpret_cast<const uint8_t*>(&v) + 4);
  }
  return out;
}

DepthMap decode_depth_blob(std::span<const uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "DPT1", 4) != 0) throw InvalidArgument("not a depth blob");
  uint32_t h, w;
  std::memcpy(&h, bytes.data() + 4, 4);
  std::memcpy(&w, bytes.data() + 8, 4);
  if (bytes.size() != 12 + static_cast<size_t>(h) * w * 4) throw InvalidArgument("depth blob size mismatch");
  DepthMap depth(static_cast<int>(w), static_cast<int>(h), 1);
  for (size_t i = 0; i < depth.data.size(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 12 + 4 * i, 4);
    depth.data[i] = v;
  }
  return depth;
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<size_t>(n));
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw InvalidArgument("base64 length is not a multiple of 4");
  std::vector<uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw InvalidArgument("invalid base64");
  // EVP_DecodeBlock keeps the padding bytes; drop them.
  size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<size_t>(n) - pad);
  return out;
}

std::string sha256_hex(std::span<const uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace seedfill
