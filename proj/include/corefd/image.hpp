#pragma once

#include <cstddef>
#include <vector>

#include "corefd/tensor.hpp"

namespace corefd {

/// H×W×3 image, channel-interleaved, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * width + c) * 3 + ch]; }
  double at(std::size_t r, std::size_t c, std::size_t ch) const { return pixels[(r * width + c) * 3 + ch]; }

  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
  /// Every value finite and inside [0, 1].
  bool valid() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Axis-aligned window in continuous pixel coordinates.
struct Window {
  double top = 0.0;
  double left = 0.0;
  double height = 0.0;
  double width = 0.0;
};

/// Edge-replicated bilinear sample at continuous (y, x) where pixel centers sit at integers.
double sample_bilinear(const Image& img, double y, double x, std::size_t ch);

/// Resample `window` of `img` to out_h × out_w using half-pixel-center bilinear
/// interpolation. A full-image window at the original size is an exact copy.
Image resample_window(const Image& img, const Window& window, std::size_t out_h, std::size_t out_w);

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

/// Single-channel bilinear upscale of an h×w map to out_h×out_w (half-pixel centers).
std::vector<double> resize_map(const std::vector<double>& map, std::size_t h, std::size_t w, std::size_t out_h,
                               std::size_t out_w);

/// Stack images into a [B, 3, H, W] tensor.
ndgrad::Tensor to_batch(const std::vector<const Image*>& images);

double mean_brightness(const Image& img);

}  // namespace corefd
