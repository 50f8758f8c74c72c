#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "corefd/image.hpp"
#include "corefd/rng.hpp"

namespace corefd::augment {

/// Random Erasing: one rectangle with area fraction U[scale_lo, scale_hi] and
/// aspect ratio (h/w) log-uniform in [ratio_lo, ratio_hi], filled with noise.
struct EraseParams {
  double scale_lo = 0.02;
  double scale_hi = 0.2;
  double ratio_lo = 0.5;
  double ratio_hi = 2.0;
  int max_attempts = 10;
};

/// Random resized crop: area fraction U[scale_lo, scale_hi], aspect ratio
/// (w/h) log-uniform in [ratio_lo, ratio_hi], bilinear resize back.
struct CropParams {
  double scale_lo = 1.0 / 1.3;
  double scale_hi = 1.0;
  double ratio_lo = 0.9;
  double ratio_hi = 1.1;
  int max_attempts = 10;
};

/// Corruption pipeline in the style of the DFDC winning solution. Each stage
/// fires independently with its probability, in declaration order.
struct SelimParams {
  double p_quality = 0.5;
  double quality_lo = 0.3;
  double quality_hi = 1.0;
  double p_noise = 0.5;
  double noise_sigma_lo = 0.0;
  double noise_sigma_hi = 0.1;
  double p_blur = 0.5;
  double blur_sigma_lo = 0.0;
  double blur_sigma_hi = 2.0;
  double p_shift = 0.5;
  double shift_fraction = 0.1;
  double p_scale = 0.5;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
};

enum class AugKind { None, RE, RandCrop, RaAug, DfdcSelim };

std::string_view to_string(AugKind kind);
/// Accepts none, re, randcrop, raaug, dfdc (also dfdc_selim).
AugKind parse_aug_kind(std::string_view name);

struct AugStrategy {
  AugKind kind = AugKind::None;
  EraseParams erase;
  CropParams crop;
  SelimParams selim;

  /// Throws ConfigError unless every range has lo <= hi and probabilities lie in [0, 1].
  void validate() const;
};

struct PixelRect {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool contains(std::size_t r, std::size_t c) const {
    return r >= top && r < top + height && c >= left && c < left + width;
  }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// ---------------------------------------------------------------------------
// Random erasing

/// Rejection-samples an integer rectangle whose realized area fraction and
/// aspect ratio both satisfy `params`; nullopt after max_attempts failures.
std::optional<PixelRect> sample_erase_rect(std::size_t height, std::size_t width, const EraseParams& params,
                                           RngStream& rng);
/// Fills `rect` with per-pixel uniform noise in [0, 1); everything else is copied.
Image erase_rect(const Image& img, const PixelRect& rect, RngStream& rng);
Image random_erase(const Image& img, RngStream& rng, const EraseParams& params = {});

// ---------------------------------------------------------------------------
// Random resized crop

/// Crop extent (height, width) for a given area fraction and aspect ratio
/// w/h; nullopt if it does not fit inside the image.
std::optional<std::pair<double, double>> crop_extent(std::size_t height, std::size_t width, double scale,
                                                     double ratio);
/// Draws (scale, ratio) until the window fits; falls back to the full image.
Window sample_crop_window(std::size_t height, std::size_t width, const CropParams& params, RngStream& rng);
Image crop_resize(const Image& img, const Window& window);
Image random_resized_crop(const Image& img, RngStream& rng, const CropParams& params = {});

// ---------------------------------------------------------------------------
// RaAug

enum class RaBranch { Identity, Erase, Crop };

/// u < 1/3 -> identity, u < 2/3 -> erase, otherwise crop.
RaBranch ra_branch(double u);
/// Applies the branch selected by `u`; sub-transforms draw from `rng`.
Image ra_aug_with_draw(const Image& img, double u, RngStream& rng, const AugStrategy& strategy = {});
Image ra_aug(const Image& img, RngStream& rng, const AugStrategy& strategy = {});

// ---------------------------------------------------------------------------
// DFDC_selim-style corruption

/// One concrete draw of the corruption pipeline; absent stages do not fire.
struct SelimRealization {
  std::optional<double> quality;
  std::optional<double> noise_sigma;
  std::optional<double> blur_sigma;
  std::optional<std::pair<int, int>> shift;  // (dy, dx)
  std::optional<double> scale;
  std::uint64_t noise_key = 0;
};

SelimRealization sample_selim(std::size_t height, std::size_t width, const SelimParams& params, RngStream& rng);
Image apply_selim(const Image& img, const SelimRealization& realization);
Image dfdc_selim(const Image& img, RngStream& rng, const SelimParams& params = {});

Image quality_degrade(const Image& img, double q);
Image add_gaussian_noise(const Image& img, double sigma, RngStream& rng);
/// Separable Gaussian, radius ceil(3σ), edge replication; σ = 0 is identity.
Image gaussian_blur(const Image& img, double sigma);
/// out(r, c) = in(r - dy, c - dx) with edge replication.
Image shift_image(const Image& img, int dy, int dx);
/// Zoom by `factor` about the image center, bilinear, edge replication.
Image scale_about_center(const Image& img, double factor);

// ---------------------------------------------------------------------------
// Strategy dispatch and view pairs

Image apply_strategy(const Image& img, const AugStrategy& strategy, RngStream& rng);

struct ViewPair {
  Image x1;
  Image x2;
  int label = 0;
  std::int64_t source_id = 0;
};

struct RngAddress {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t index = 0;
  std::uint64_t view = 0;

  RngStream stream() const { return RngStream(seed, epoch, index, view); }
};

ViewPair make_pair(const Image& img, int label, std::int64_t source_id, const AugStrategy& strategy,
                   const RngAddress& view1, const RngAddress& view2);

// ---------------------------------------------------------------------------
// Face-box cropping

struct BBox {
  double top = 0.0;
  double left = 0.0;
  double height = 0.0;
  double width = 0.0;
};

/// Box scaled by `factor` about its center and clipped to the image.
BBox enlarge_box(const BBox& box, double factor, std::size_t img_height, std::size_t img_width);
/// Crop the enlarged, clipped box and resize to out_size × out_size.
/// Throws BoundsError if `box` is not inside the image, ContractError if factor < 1.
Image crop_enlarged(const Image& img, const BBox& box, double factor, std::size_t out_size);

}  // namespace corefd::augment
