#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corefd/augment.hpp"
#include "corefd/image.hpp"
#include "corefd/rng.hpp"

namespace corefd::synthdata {

/// Elliptical "face" region, in pixel-index coordinates.
struct Ellipse {
  double cy = 0.0, cx = 0.0, ry = 1.0, rx = 1.0;

  bool contains(double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
};

struct Sample {
  std::string id;
  Image image;
  int label = 0;  // 0 real, 1 fake
  std::int64_t source_id = 0;
  /// H*W binary map of the pasted region; empty for real samples. Never used for training.
  std::vector<std::uint8_t> tamper_mask;
  /// Generation metadata; absent for samples loaded from disk.
  std::optional<Ellipse> face;
  std::optional<augment::PixelRect> tamper_rect;
  std::array<double, 3> color_shift{};

  bool has_mask() const { return !tamper_mask.empty(); }
};

enum class Split { Train, Val, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct DatasetSplit {
  std::vector<Sample> train, val, test;
  std::uint64_t seed = 0;
  std::size_t ratio = 4;
  /// AUC of mean brightness as a fake-score on the test split (a shortcut detector).
  double brightness_auc = 0.5;

  std::vector<Sample>& get(Split s);
  const std::vector<Sample>& get(Split s) const;
  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

struct GenConfig {
  std::size_t n_real = 100;
  std::size_t ratio = 4;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  double train_frac = 0.7;
  double val_frac = 0.15;

  /// Throws ConfigError if n_real < 10, image_size < 32, or the fractions are invalid.
  void validate() const;
};

/// Threshold the generator enforces on the test-split brightness AUC.
inline constexpr double kMaxBrightnessAuc = 0.6;

/// Blurred-noise background plus a centered ellipse with its own smooth texture.
Sample gen_real(RngStream& rng, std::size_t size, std::int64_t source_id = 0);

/// Pastes an 8-24 px rectangle of the donor's ellipse into the base's ellipse with a
/// 2 px feather outside the rectangle and a ±0.05 per-channel color shift.
/// Throws ContractError unless both inputs are generated real samples.
Sample gen_fake(const Sample& base, const Sample& donor, RngStream& rng);

/// Blend weight of the pasted donor at Chebyshev distance `d` outside the rectangle (0 = inside).
double feather_alpha(std::size_t d);

DatasetSplit gen_dataset(const GenConfig& config);

double brightness_auc(const std::vector<Sample>& samples);

/// index.csv (file,label,split,mask_file) plus images/*.ppm and masks/*.pgm.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit load_dataset(const std::filesystem::path& dir);

/// dfdc_selim-corrupted copy of `samples`, one addressed draw per sample.
std::vector<Sample> shifted_copy(const std::vector<Sample>& samples, std::uint64_t seed,
                                 const augment::SelimParams& params = {});

}  // namespace corefd::synthdata
