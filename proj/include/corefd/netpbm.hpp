#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "corefd/image.hpp"

namespace corefd::netpbm {

/// 8-bit quantization used for every image written to disk: round(v * 255).
std::uint8_t quantize(double v);
/// Round-trips an image through 8-bit quantization.
Image quantized(const Image& img);

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) from values in [0, 1].
void write_pgm(const std::filesystem::path& path, const std::vector<double>& values, std::size_t height,
               std::size_t width);

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace corefd::netpbm
