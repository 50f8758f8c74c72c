#include "corefd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corefd/errors.hpp"

namespace corefd::augment {

std::string_view to_string(AugKind kind) {
  switch (kind) {
    case AugKind::None: return "none";
    case AugKind::RE: return "re";
    case AugKind::RandCrop: return "randcrop";
    case AugKind::RaAug: return "raaug";
    case AugKind::DfdcSelim: return "dfdc";
  }
  return "none";
}

AugKind parse_aug_kind(std::string_view name) {
  if (name == "none") return AugKind::None;
  if (name == "re") return AugKind::RE;
  if (name == "randcrop") return AugKind::RandCrop;
  if (name == "raaug") return AugKind::RaAug;
  if (name == "dfdc" || name == "dfdc_selim") return AugKind::DfdcSelim;
  throw ConfigError("unknown augmentation strategy '" + std::string(name) +
                    "' (expected none, re, randcrop, raaug or dfdc)");
}

namespace {

void check_range(double lo, double hi, const char* what) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ConfigError(std::string(what) + ": range low must not exceed high");
  }
}

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + ": probability must lie in [0, 1]");
}

}  // namespace

void AugStrategy::validate() const {
  check_range(erase.scale_lo, erase.scale_hi, "erase scale");
  check_range(erase.ratio_lo, erase.ratio_hi, "erase ratio");
  if (erase.scale_lo <= 0.0 || erase.ratio_lo <= 0.0) throw ConfigError("erase ranges must be positive");
  check_range(crop.scale_lo, crop.scale_hi, "crop scale");
  check_range(crop.ratio_lo, crop.ratio_hi, "crop ratio");
  if (crop.scale_lo <= 0.0 || crop.ratio_lo <= 0.0) throw ConfigError("crop ranges must be positive");
  check_prob(selim.p_quality, "selim quality");
  check_prob(selim.p_noise, "selim noise");
  check_prob(selim.p_blur, "selim blur");
  check_prob(selim.p_shift, "selim shift");
  check_prob(selim.p_scale, "selim scale");
  check_range(selim.quality_lo, selim.quality_hi, "selim quality");
  check_range(selim.noise_sigma_lo, selim.noise_sigma_hi, "selim noise sigma");
  check_range(selim.blur_sigma_lo, selim.blur_sigma_hi, "selim blur sigma");
  check_range(selim.scale_lo, selim.scale_hi, "selim scale");
  if (selim.quality_lo <= 0.0 || selim.scale_lo <= 0.0 || selim.noise_sigma_lo < 0.0 ||
      selim.blur_sigma_lo < 0.0 || selim.shift_fraction < 0.0) {
    throw ConfigError("selim parameters out of range");
  }
}

// ---------------------------------------------------------------------------

std::optional<PixelRect> sample_erase_rect(std::size_t height, std::size_t width, const EraseParams& params,
                                           RngStream& rng) {
  const double area = static_cast<double>(height * width);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    const double target = rng.uniform(params.scale_lo, params.scale_hi) * area;
    const double ratio = rng.log_uniform(params.ratio_lo, params.ratio_hi);
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
    if (h == 0 || w == 0 || h > height || w > width) continue;
    // Rounding can push the realized rectangle outside the sampled ranges.
    const double frac = static_cast<double>(h * w) / area;
    const double aspect = static_cast<double>(h) / static_cast<double>(w);
    if (frac < params.scale_lo || frac > params.scale_hi) continue;
    if (aspect < params.ratio_lo || aspect > params.ratio_hi) continue;
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(height - h)));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(width - w)));
    return PixelRect{top, left, h, w};
  }
  return std::nullopt;
}

Image erase_rect(const Image& img, const PixelRect& rect, RngStream& rng) {
  if (rect.top + rect.height > img.height || rect.left + rect.width > img.width) {
    throw BoundsError("erase_rect: rectangle exceeds image");
  }
  Image out = img;
  for (std::size_t r = rect.top; r < rect.top + rect.height; ++r) {
    for (std::size_t c = rect.left; c < rect.left + rect.width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = rng.uniform();
    }
  }
  return out;
}

Image random_erase(const Image& img, RngStream& rng, const EraseParams& params) {
  const auto rect = sample_erase_rect(img.height, img.width, params, rng);
  if (!rect) return img;
  return erase_rect(img, *rect, rng);
}

// ---------------------------------------------------------------------------

std::optional<std::pair<double, double>> crop_extent(std::size_t height, std::size_t width, double scale,
                                                     double ratio) {
  const double area = static_cast<double>(height * width) * scale;
  const double w = std::sqrt(area * ratio);
  const double h = std::sqrt(area / ratio);
  if (w > static_cast<double>(width) || h > static_cast<double>(height)) return std::nullopt;
  return std::make_pair(h, w);
}

Window sample_crop_window(std::size_t height, std::size_t width, const CropParams& params, RngStream& rng) {
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    const double scale = rng.uniform(params.scale_lo, params.scale_hi);
    const double ratio = rng.log_uniform(params.ratio_lo, params.ratio_hi);
    const auto extent = crop_extent(height, width, scale, ratio);
    if (!extent) continue;
    const auto [h, w] = *extent;
    const double top = rng.uniform(0.0, static_cast<double>(height) - h);
    const double left = rng.uniform(0.0, static_cast<double>(width) - w);
    return {top, left, h, w};
  }
  return {0.0, 0.0, static_cast<double>(height), static_cast<double>(width)};
}

Image crop_resize(const Image& img, const Window& window) {
  return resample_window(img, window, img.height, img.width);
}

Image random_resized_crop(const Image& img, RngStream& rng, const CropParams& params) {
  return crop_resize(img, sample_crop_window(img.height, img.width, params, rng));
}

// ---------------------------------------------------------------------------

RaBranch ra_branch(double u) {
  if (u < 1.0 / 3.0) return RaBranch::Identity;
  if (u < 2.0 / 3.0) return RaBranch::Erase;
  return RaBranch::Crop;
}

Image ra_aug_with_draw(const Image& img, double u, RngStream& rng, const AugStrategy& strategy) {
  switch (ra_branch(u)) {
    case RaBranch::Identity: return img;
    case RaBranch::Erase: return random_erase(img, rng, strategy.erase);
    case RaBranch::Crop: return random_resized_crop(img, rng, strategy.crop);
  }
  return img;
}

Image ra_aug(const Image& img, RngStream& rng, const AugStrategy& strategy) {
  const double u = rng.uniform();
  return ra_aug_with_draw(img, u, rng, strategy);
}

// ---------------------------------------------------------------------------

SelimRealization sample_selim(std::size_t height, std::size_t width, const SelimParams& params, RngStream& rng) {
  SelimRealization r;
  if (rng.bernoulli(params.p_quality)) r.quality = rng.uniform(params.quality_lo, params.quality_hi);
  if (rng.bernoulli(params.p_noise)) r.noise_sigma = rng.uniform(params.noise_sigma_lo, params.noise_sigma_hi);
  if (rng.bernoulli(params.p_blur)) r.blur_sigma = rng.uniform(params.blur_sigma_lo, params.blur_sigma_hi);
  if (rng.bernoulli(params.p_shift)) {
    const auto max_dy = static_cast<std::int64_t>(std::lround(params.shift_fraction * static_cast<double>(height)));
    const auto max_dx = static_cast<std::int64_t>(std::lround(params.shift_fraction * static_cast<double>(width)));
    const auto dy = static_cast<int>(rng.uniform_int(-max_dy, max_dy));
    const auto dx = static_cast<int>(rng.uniform_int(-max_dx, max_dx));
    r.shift = std::make_pair(dy, dx);
  }
  if (rng.bernoulli(params.p_scale)) r.scale = rng.uniform(params.scale_lo, params.scale_hi);
  r.noise_key = rng.next_u64();
  return r;
}

Image quality_degrade(const Image& img, double q) {
  const auto h = static_cast<std::size_t>(std::max<long>(1, std::lround(static_cast<double>(img.height) * q)));
  const auto w = static_cast<std::size_t>(std::max<long>(1, std::lround(static_cast<double>(img.width) * q)));
  if (h == img.height && w == img.width) return img;
  return resize_bilinear(resize_bilinear(img, h, w), img.height, img.width);
}

Image add_gaussian_noise(const Image& img, double sigma, RngStream& rng) {
  Image out = img;
  for (double& v : out.pixels) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double k = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = k;
    total += k;
  }
  for (double& k : kernel) k /= total;

  const auto H = static_cast<long>(img.height), W = static_cast<long>(img.width);
  Image tmp(img.height, img.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (long i = -radius; i <= radius; ++i) {
          const long cc = std::clamp(c + i, 0L, W - 1);
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(cc), ch);
        }
        tmp.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) = acc;
      }
    }
  }
  Image out(img.height, img.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (long i = -radius; i <= radius; ++i) {
          const long rr = std::clamp(r + i, 0L, H - 1);
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 tmp.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(c), ch);
        }
        out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image shift_image(const Image& img, int dy, int dx) {
  Image out(img.height, img.width);
  const auto H = static_cast<long>(img.height), W = static_cast<long>(img.width);
  for (long r = 0; r < H; ++r) {
    const auto sr = static_cast<std::size_t>(std::clamp(r - dy, 0L, H - 1));
    for (long c = 0; c < W; ++c) {
      const auto sc = static_cast<std::size_t>(std::clamp(c - dx, 0L, W - 1));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) = img.at(sr, sc, ch);
      }
    }
  }
  return out;
}

Image scale_about_center(const Image& img, double factor) {
  Image out(img.height, img.width);
  const double cy = static_cast<double>(img.height) / 2.0;
  const double cx = static_cast<double>(img.width) / 2.0;
  for (std::size_t r = 0; r < img.height; ++r) {
    const double y = (static_cast<double>(r) + 0.5 - cy) / factor + cy - 0.5;
    for (std::size_t c = 0; c < img.width; ++c) {
      const double x = (static_cast<double>(c) + 0.5 - cx) / factor + cx - 0.5;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = std::clamp(sample_bilinear(img, y, x, ch), 0.0, 1.0);
      }
    }
  }
  return out;
}

Image apply_selim(const Image& img, const SelimRealization& realization) {
  Image out = img;
  if (realization.quality) out = quality_degrade(out, *realization.quality);
  if (realization.noise_sigma) {
    RngStream noise(realization.noise_key);
    out = add_gaussian_noise(out, *realization.noise_sigma, noise);
  }
  if (realization.blur_sigma) out = gaussian_blur(out, *realization.blur_sigma);
  if (realization.shift) out = shift_image(out, realization.shift->first, realization.shift->second);
  if (realization.scale) out = scale_about_center(out, *realization.scale);
  return out;
}

Image dfdc_selim(const Image& img, RngStream& rng, const SelimParams& params) {
  return apply_selim(img, sample_selim(img.height, img.width, params, rng));
}

// ---------------------------------------------------------------------------

Image apply_strategy(const Image& img, const AugStrategy& strategy, RngStream& rng) {
  switch (strategy.kind) {
    case AugKind::None: return img;
    case AugKind::RE: return random_erase(img, rng, strategy.erase);
    case AugKind::RandCrop: return random_resized_crop(img, rng, strategy.crop);
    case AugKind::RaAug: return ra_aug(img, rng, strategy);
    case AugKind::DfdcSelim: return dfdc_selim(img, rng, strategy.selim);
  }
  return img;
}

ViewPair make_pair(const Image& img, int label, std::int64_t source_id, const AugStrategy& strategy,
                   const RngAddress& view1, const RngAddress& view2) {
  RngStream s1 = view1.stream();
  RngStream s2 = view2.stream();
  ViewPair pair;
  pair.x1 = apply_strategy(img, strategy, s1);
  pair.x2 = apply_strategy(img, strategy, s2);
  pair.label = label;
  pair.source_id = source_id;
  return pair;
}

// ---------------------------------------------------------------------------

BBox enlarge_box(const BBox& box, double factor, std::size_t img_height, std::size_t img_width) {
  const double cy = box.top + box.height / 2.0;
  const double cx = box.left + box.width / 2.0;
  const double h = box.height * factor;
  const double w = box.width * factor;
  const double top = std::max(0.0, cy - h / 2.0);
  const double left = std::max(0.0, cx - w / 2.0);
  const double bottom = std::min(static_cast<double>(img_height), cy + h / 2.0);
  const double right = std::min(static_cast<double>(img_width), cx + w / 2.0);
  return {top, left, bottom - top, right - left};
}

Image crop_enlarged(const Image& img, const BBox& box, double factor, std::size_t out_size) {
  if (!(factor >= 1.0)) throw ContractError("crop_enlarged: factor must be >= 1");
  if (box.top < 0.0 || box.left < 0.0 || !(box.height > 0.0) || !(box.width > 0.0) ||
      box.top + box.height > static_cast<double>(img.height) ||
      box.left + box.width > static_cast<double>(img.width)) {
    throw BoundsError("crop_enlarged: box (" + std::to_string(box.top) + ", " + std::to_string(box.left) + ", " +
                      std::to_string(box.height) + ", " + std::to_string(box.width) + ") lies outside the " +
                      std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
  const BBox e = enlarge_box(box, factor, img.height, img.width);
  return resample_window(img, {e.top, e.left, e.height, e.width}, out_size, out_size);
}

}  // namespace corefd::augment
