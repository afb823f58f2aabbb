#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seedfill/image.hpp"

namespace seedfill {

// PNG encode/decode (libpng). RGB images may be 8- or 16-bit; masks are
// 8-bit grayscale with nonzero meaning "set".
std::vector<uint8_t> encode_png_rgb(const RgbImage& img, int bit_depth = 8);
std::vector<uint8_t> encode_png_mask(const Mask& mask);
RgbImage decode_png_rgb(std::span<const uint8_t> bytes);
Mask decode_png_mask(std::span<const uint8_t> bytes);

void write_png_rgb(const RgbImage& img, const std::string& path, int bit_depth = 8);
void write_png_mask(const Mask& mask, const std::string& path);
RgbImage read_png_rgb(const std::string& path);
Mask read_png_mask(const std::string& path);

// Single-channel 32-bit float maps in PFM ("Pf") layout, little-endian.
void write_pfm(const DepthMap& depth, const std::string& path);
DepthMap read_pfm(const std::string& path);

// Compact depth blob used on the corrector wire: "DPT1", u32 height,
// u32 width, then height*width little-endian float32 values row-major.
std::vector<uint8_t> encode_depth_blob(const DepthMap& depth);
DepthMap decode_depth_blob(std::span<const uint8_t> bytes);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes);

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(const std::string& text);
std::string sha256_hex(std::span<const uint8_t> bytes);

}  // namespace seedfill
