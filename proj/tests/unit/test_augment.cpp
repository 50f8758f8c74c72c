#include <algorithm>
#include <cmath>

#include "corefd/augment.hpp"
#include "corefd/errors.hpp"
#include "doctest.h"

using namespace corefd;
using namespace corefd::augment;

namespace {

Image noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Image img(h, w);
  RngStream rng(seed);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
  return m;
}

bool is_constant(const Image& img, double c, double tol) {
  return std::all_of(img.pixels.begin(), img.pixels.end(), [&](double v) { return std::abs(v - c) <= tol; });
}

}  // namespace

TEST_CASE("aug kind names round trip") {
  for (AugKind k : {AugKind::None, AugKind::RE, AugKind::RandCrop, AugKind::RaAug, AugKind::DfdcSelim}) {
    CHECK(parse_aug_kind(to_string(k)) == k);
  }
  CHECK(parse_aug_kind("dfdc_selim") == AugKind::DfdcSelim);
  CHECK_THROWS_AS(parse_aug_kind("mixup"), ConfigError);
}

TEST_CASE("strategy validation") {
  AugStrategy s;
  CHECK_NOTHROW(s.validate());
  s.erase.scale_lo = 0.3;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.selim.p_blur = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.crop.ratio_hi = 0.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("erase rectangle area and aspect stay in range over 10000 draws") {
  const EraseParams p;
  int found = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    RngStream rng(7, 0, i, 1);
    const auto rect = sample_erase_rect(64, 64, p, rng);
    if (!rect) continue;
    ++found;
    const double frac = static_cast<double>(rect->height * rect->width) / 4096.0;
    const double aspect = static_cast<double>(rect->height) / static_cast<double>(rect->width);
    REQUIRE(frac >= 0.02);
    REQUIRE(frac <= 0.2);
    REQUIRE(aspect >= 0.5);
    REQUIRE(aspect <= 2.0);
    REQUIRE(rect->top + rect->height <= 64);
    REQUIRE(rect->left + rect->width <= 64);
  }
  CHECK(found > 9900);
}

TEST_CASE("erase touches nothing outside its rectangle") {
  const Image img = noise_image(64, 64, 3);
  RngStream fill(11);
  const PixelRect rect{0, 0, 8, 8};
  const Image out = erase_rect(img, rect, fill);
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t c = 0; c < 64; ++c) {
      if (rect.contains(r, c)) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) REQUIRE(out.at(r, c, ch) == img.at(r, c, ch));
    }
  }
  CHECK(out != img);
  CHECK(out.valid());

  RngStream bad(1);
  CHECK_THROWS_AS(erase_rect(img, PixelRect{60, 0, 8, 8}, bad), BoundsError);
}

TEST_CASE("random_erase changes a single sampled rectangle") {
  const Image img = noise_image(64, 64, 5);
  for (std::uint64_t i = 0; i < 50; ++i) {
    RngStream a(9, 0, i, 0), b(9, 0, i, 0);
    const auto rect = sample_erase_rect(64, 64, EraseParams{}, a);
    const Image out = random_erase(img, b);
    REQUIRE(rect.has_value());
    for (std::size_t r = 0; r < 64; ++r) {
      for (std::size_t c = 0; c < 64; ++c) {
        if (rect->contains(r, c)) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) REQUIRE(out.at(r, c, ch) == img.at(r, c, ch));
      }
    }
  }
}

TEST_CASE("random_erase on an image too small returns the input") {
  const Image img = noise_image(2, 2, 1);
  RngStream rng(4);
  CHECK(random_erase(img, rng) == img);
}

TEST_CASE("crop extent and window ranges") {
  const auto full = crop_extent(64, 64, 1.0, 1.0);
  REQUIRE(full.has_value());
  CHECK(full->first == doctest::Approx(64.0));
  CHECK(full->second == doctest::Approx(64.0));
  CHECK_FALSE(crop_extent(64, 64, 1.0, 1.1).has_value());

  const CropParams p;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    RngStream rng(13, 0, i, 2);
    const Window w = sample_crop_window(64, 64, p, rng);
    const double frac = w.height * w.width / 4096.0;
    REQUIRE(frac >= 1.0 / 1.3 - 1e-12);
    REQUIRE(frac <= 1.0 + 1e-12);
    REQUIRE(w.top >= 0.0);
    REQUIRE(w.left >= 0.0);
    REQUIRE(w.top + w.height <= 64.0 + 1e-9);
    REQUIRE(w.left + w.width <= 64.0 + 1e-9);
  }
}

TEST_CASE("full-image crop is the identity and constants survive crops") {
  const Image img = noise_image(32, 32, 8);
  CHECK(max_abs_diff(crop_resize(img, {0.0, 0.0, 32.0, 32.0}), img) <= 1e-12);

  const Image flat(32, 32, 0.37);
  for (std::uint64_t i = 0; i < 20; ++i) {
    RngStream rng(21, 0, i, 0);
    CHECK(is_constant(random_resized_crop(flat, rng), 0.37, 1e-12));
  }
}

TEST_CASE("ra_aug branch thresholds") {
  CHECK(ra_branch(0.0) == RaBranch::Identity);
  CHECK(ra_branch(0.1) == RaBranch::Identity);
  CHECK(ra_branch(1.0 / 3.0) == RaBranch::Erase);
  CHECK(ra_branch(0.5) == RaBranch::Erase);
  CHECK(ra_branch(2.0 / 3.0) == RaBranch::Crop);
  CHECK(ra_branch(0.99) == RaBranch::Crop);

  const Image img = noise_image(64, 64, 2);
  RngStream rng(5);
  CHECK(ra_aug_with_draw(img, 0.1, rng) == img);

  // Erase branch: identical to random_erase from the same stream.
  RngStream a(6), b(6);
  CHECK(ra_aug_with_draw(img, 0.5, a) == random_erase(img, b));
}

TEST_CASE("ra_aug branch frequencies over 30000 draws") {
  int counts[3] = {0, 0, 0};
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    RngStream rng(17, 0, static_cast<std::uint64_t>(i), 1);
    counts[static_cast<int>(ra_branch(rng.uniform()))]++;
  }
  for (int c : counts) CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 3.0) < 0.02);
}

TEST_CASE("selim stages obey probabilities and ranges") {
  SelimParams never;
  never.p_quality = never.p_noise = never.p_blur = never.p_shift = never.p_scale = 0.0;
  const Image img = noise_image(64, 64, 4);
  RngStream rng(3);
  CHECK(dfdc_selim(img, rng, never) == img);

  const SelimParams p;
  int fired[5] = {0, 0, 0, 0, 0};
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    RngStream s(23, 0, static_cast<std::uint64_t>(i), 0);
    const SelimRealization r = sample_selim(64, 64, p, s);
    if (r.quality) {
      ++fired[0];
      REQUIRE(*r.quality >= 0.3);
      REQUIRE(*r.quality <= 1.0);
    }
    if (r.noise_sigma) {
      ++fired[1];
      REQUIRE(*r.noise_sigma <= 0.1);
    }
    if (r.blur_sigma) {
      ++fired[2];
      REQUIRE(*r.blur_sigma <= 2.0);
    }
    if (r.shift) {
      ++fired[3];
      REQUIRE(std::abs(r.shift->first) <= 6);
      REQUIRE(std::abs(r.shift->second) <= 6);
    }
    if (r.scale) {
      ++fired[4];
      REQUIRE(*r.scale >= 0.9);
      REQUIRE(*r.scale <= 1.1);
    }
  }
  for (int f : fired) CHECK(std::abs(static_cast<double>(f) / n - 0.5) < 0.04);
}

TEST_CASE("selim stage identities") {
  const Image img = noise_image(32, 32, 9);
  CHECK(gaussian_blur(img, 0.0) == img);
  CHECK(shift_image(img, 0, 0) == img);
  CHECK(quality_degrade(img, 1.0) == img);
  CHECK(max_abs_diff(scale_about_center(img, 1.0), img) <= 1e-12);
  RngStream rng(1);
  CHECK(add_gaussian_noise(img, 0.0, rng) == img);
}

TEST_CASE("shift replicates edges") {
  Image img(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = 0.1 * static_cast<double>(r * 4 + c) / 1.6;
  const Image out = shift_image(img, 1, -2);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t sr = r == 0 ? 0 : r - 1;
      const std::size_t sc = std::min<std::size_t>(c + 2, 3);
      CHECK(out.at(r, c, 0) == img.at(sr, sc, 0));
    }
  }
}

TEST_CASE("blur matches a direct 2d gaussian in the interior") {
  const Image img = noise_image(24, 24, 12);
  const double sigma = 1.2;
  const Image out = gaussian_blur(img, sigma);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += std::exp(-i * i / (2.0 * sigma * sigma));
  for (std::size_t r = 8; r < 16; ++r) {
    for (std::size_t c = 8; c < 16; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
          const double k = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma)) / (norm * norm);
          acc += k * img.at(static_cast<std::size_t>(static_cast<int>(r) + i),
                            static_cast<std::size_t>(static_cast<int>(c) + j), 1);
        }
      }
      CHECK(out.at(r, c, 1) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("constant images stay constant through every selim realization") {
  const Image flat(32, 32, 0.6);
  SelimParams p;
  p.p_noise = 0.0;
  for (std::uint64_t i = 0; i < 40; ++i) {
    RngStream rng(31, 0, i, 0);
    CHECK(is_constant(dfdc_selim(flat, rng, p), 0.6, 1e-12));
  }
}

TEST_CASE("every strategy preserves dims and range and is deterministic") {
  const Image img = noise_image(64, 64, 15);
  for (AugKind k : {AugKind::None, AugKind::RE, AugKind::RandCrop, AugKind::RaAug, AugKind::DfdcSelim}) {
    AugStrategy s;
    s.kind = k;
    for (std::uint64_t i = 0; i < 30; ++i) {
      RngStream a(41, 2, i, 1), b(41, 2, i, 1);
      const Image x = apply_strategy(img, s, a);
      const Image y = apply_strategy(img, s, b);
      REQUIRE(x.same_shape(img));
      REQUIRE(x.valid());
      REQUIRE(x == y);
    }
  }
}

TEST_CASE("make_pair") {
  const Image img = noise_image(64, 64, 19);
  AugStrategy none;
  const ViewPair p0 = make_pair(img, 1, 42, none, {1, 0, 0, 1}, {1, 0, 0, 2});
  CHECK(p0.x1 == img);
  CHECK(p0.x2 == img);
  CHECK(p0.label == 1);
  CHECK(p0.source_id == 42);

  AugStrategy ra;
  ra.kind = AugKind::RaAug;
  const ViewPair same = make_pair(img, 0, 1, ra, {5, 1, 3, 1}, {5, 1, 3, 1});
  CHECK(same.x1 == same.x2);
  CHECK(same.label == 0);

  int differ = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const ViewPair p = make_pair(img, 0, 1, ra, {5, 1, i, 1}, {5, 1, i, 2});
    REQUIRE(p.x1.same_shape(img));
    REQUIRE(p.x2.same_shape(img));
    REQUIRE(p.x1.valid());
    REQUIRE(p.x2.valid());
    if (p.x1 != p.x2) ++differ;
  }
  CHECK(differ > 10);
}

TEST_CASE("enlarge_box geometry") {
  // 10x10 box centred at (32, 32): corners move 1.5 px outward.
  const BBox e = enlarge_box({27.0, 27.0, 10.0, 10.0}, 1.3, 64, 64);
  CHECK(e.top == doctest::Approx(25.5));
  CHECK(e.left == doctest::Approx(25.5));
  CHECK(e.height == doctest::Approx(13.0));
  CHECK(e.width == doctest::Approx(13.0));

  const BBox c = enlarge_box({0.0, 50.0, 20.0, 14.0}, 1.3, 64, 64);
  CHECK(c.top == doctest::Approx(0.0));
  CHECK(c.left == doctest::Approx(47.9));
  CHECK(c.height == doctest::Approx(23.0));
  CHECK(c.left + c.width == doctest::Approx(64.0));
}

TEST_CASE("crop_enlarged contracts") {
  const Image img = noise_image(64, 64, 20);
  const Image full = crop_enlarged(img, {0.0, 0.0, 64.0, 64.0}, 1.0, 64);
  CHECK(max_abs_diff(full, img) <= 1e-12);
  const Image clipped = crop_enlarged(img, {0.0, 0.0, 64.0, 64.0}, 1.5, 32);
  CHECK(clipped.height == 32);
  CHECK(clipped.valid());
  CHECK(max_abs_diff(clipped, resize_bilinear(img, 32, 32)) <= 1e-12);
  CHECK_THROWS_AS(crop_enlarged(img, {60.0, 0.0, 10.0, 10.0}, 1.3, 32), BoundsError);
  CHECK_THROWS_AS(crop_enlarged(img, {-1.0, 0.0, 10.0, 10.0}, 1.3, 32), BoundsError);
  CHECK_THROWS_AS(crop_enlarged(img, {0.0, 0.0, 10.0, 10.0}, 0.9, 32), ContractError);
}
