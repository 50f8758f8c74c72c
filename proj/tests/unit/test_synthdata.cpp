#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "corefd/errors.hpp"
#include "corefd/synthdata.hpp"
#include "doctest.h"

using namespace corefd;
using namespace corefd::synthdata;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("corefd_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

std::pair<Sample, Sample> two_reals(std::uint64_t seed, std::size_t size = 64) {
  RngStream a(seed, 0, 0, 0), b(seed, 0, 1, 0);
  return {gen_real(a, size, 0), gen_real(b, size, 1)};
}

const DatasetSplit& default_dataset() {
  static const DatasetSplit ds = gen_dataset(GenConfig{});
  return ds;
}

}  // namespace

TEST_CASE("gen_real is deterministic, valid and seed-sensitive") {
  RngStream a(5, 0, 3, 0), b(5, 0, 3, 0), c(6, 0, 3, 0);
  const Sample x = gen_real(a, 64);
  const Sample y = gen_real(b, 64);
  const Sample z = gen_real(c, 64);
  CHECK(x.image == y.image);
  CHECK(x.image.valid());
  CHECK(x.label == 0);
  CHECK_FALSE(x.has_mask());
  std::size_t differ = 0;
  for (std::size_t i = 0; i < x.image.pixels.size(); ++i) differ += x.image.pixels[i] != z.image.pixels[i];
  CHECK(static_cast<double>(differ) > 0.01 * static_cast<double>(x.image.pixels.size()));
}

TEST_CASE("feather weights") {
  CHECK(feather_alpha(0) == 1.0);
  CHECK(feather_alpha(1) == doctest::Approx(2.0 / 3.0));
  CHECK(feather_alpha(2) == doctest::Approx(1.0 / 3.0));
  CHECK(feather_alpha(3) == 0.0);
}

TEST_CASE("gen_fake locality, mask bounds and feather interval") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto [base, donor] = two_reals(100 + seed);
    RngStream rng(seed);
    const Sample f = gen_fake(base, donor, rng);
    REQUIRE(f.label == 1);
    REQUIRE(f.tamper_rect.has_value());
    REQUIRE(f.image.valid());
    const augment::PixelRect r = *f.tamper_rect;
    const std::size_t area = static_cast<std::size_t>(std::count(f.tamper_mask.begin(), f.tamper_mask.end(), 1));
    CHECK(area == r.height * r.width);
    CHECK(area >= 64);
    CHECK(area <= 576);
    for (double s : f.color_shift) CHECK(std::abs(s) <= 0.05);

    for (std::size_t y = 0; y < 64; ++y) {
      for (std::size_t x = 0; x < 64; ++x) {
        CHECK(static_cast<bool>(f.tamper_mask[y * 64 + x]) == r.contains(y, x));
        if (r.contains(y, x)) REQUIRE(f.face->contains(static_cast<double>(y), static_cast<double>(x)));
        const bool near = y + 2 >= r.top && y < r.top + r.height + 2 && x + 2 >= r.left && x < r.left + r.width + 2;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          if (!near) {
            REQUIRE(f.image.at(y, x, ch) == base.image.at(y, x, ch));
          } else if (!r.contains(y, x)) {
            const double pasted = std::clamp(donor.image.at(y, x, ch) + f.color_shift[ch], 0.0, 1.0);
            const double lo = std::min(pasted, base.image.at(y, x, ch)) - 1e-12;
            const double hi = std::max(pasted, base.image.at(y, x, ch)) + 1e-12;
            REQUIRE(f.image.at(y, x, ch) >= lo);
            REQUIRE(f.image.at(y, x, ch) <= hi);
          }
        }
      }
    }
  }
}

TEST_CASE("gen_fake rejects non-real inputs") {
  const auto [base, donor] = two_reals(3);
  RngStream rng(1);
  const Sample fake = gen_fake(base, donor, rng);
  CHECK_THROWS_AS(gen_fake(fake, donor, rng), ContractError);
  CHECK_THROWS_AS(gen_fake(base, fake, rng), ContractError);
  Sample stripped = base;
  stripped.face.reset();
  CHECK_THROWS_AS(gen_fake(stripped, donor, rng), ContractError);
}

TEST_CASE("dataset counts, split disjointness and determinism") {
  const DatasetSplit& ds = default_dataset();
  CHECK(ds.size() == 500);
  CHECK(ds.train.size() == 350);
  CHECK(ds.val.size() == 75);
  CHECK(ds.test.size() == 75);

  std::set<std::int64_t> seen[3];
  const Split splits[3] = {Split::Train, Split::Val, Split::Test};
  for (int k = 0; k < 3; ++k) {
    std::size_t fakes = 0;
    for (const Sample& s : ds.get(splits[k])) {
      seen[k].insert(s.source_id);
      fakes += static_cast<std::size_t>(s.label);
      CHECK(s.has_mask() == (s.label == 1));
    }
    CHECK(fakes == 4 * seen[k].size());
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      for (std::int64_t id : seen[a]) CHECK(seen[b].count(id) == 0);
    }
  }

  const DatasetSplit again = gen_dataset(GenConfig{});
  REQUIRE(again.test.size() == ds.test.size());
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    CHECK(again.test[i].id == ds.test[i].id);
    CHECK(again.test[i].image == ds.test[i].image);
  }
}

TEST_CASE("no brightness shortcut on the test split") {
  CHECK(default_dataset().brightness_auc < kMaxBrightnessAuc);
  CHECK(default_dataset().brightness_auc == doctest::Approx(brightness_auc(default_dataset().test)));
}

TEST_CASE("generator config validation") {
  GenConfig c;
  c.n_real = 5;
  CHECK_THROWS_AS(gen_dataset(c), ConfigError);
  c = {};
  c.image_size = 16;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.train_frac = 0.9;
  c.val_frac = 0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_split("val") == Split::Val);
  CHECK_THROWS_AS(parse_split("dev"), ConfigError);
}

TEST_CASE("save and load round trip after quantization") {
  GenConfig c;
  c.n_real = 10;
  c.image_size = 32;
  c.seed = 4;
  const DatasetSplit ds = gen_dataset(c);
  const fs::path dir = scratch_dir("roundtrip");
  save_dataset(ds, dir);
  const DatasetSplit loaded = load_dataset(dir);
  REQUIRE(loaded.size() == ds.size());
  for (const Split s : {Split::Train, Split::Val, Split::Test}) {
    for (std::size_t i = 0; i < ds.get(s).size(); ++i) {
      const Sample& a = ds.get(s)[i];
      const Sample& b = loaded.get(s)[i];
      CHECK(a.id == b.id);
      CHECK(a.label == b.label);
      CHECK(a.source_id == b.source_id);
      CHECK(a.tamper_mask == b.tamper_mask);
      for (std::size_t p = 0; p < a.image.pixels.size(); ++p) {
        REQUIRE(std::abs(a.image.pixels[p] - b.image.pixels[p]) <= 0.5 / 255.0 + 1e-12);
      }
    }
  }
  const fs::path dir2 = scratch_dir("roundtrip2");
  save_dataset(loaded, dir2);
  const DatasetSplit twice = load_dataset(dir2);
  for (const Split s : {Split::Train, Split::Val, Split::Test}) {
    for (std::size_t i = 0; i < loaded.get(s).size(); ++i) CHECK(twice.get(s)[i].image == loaded.get(s)[i].image);
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("load errors name what is missing") {
  const fs::path dir = scratch_dir("errors");
  fs::create_directories(dir);
  try {
    load_dataset(dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("index.csv") != std::string::npos);
  }

  {
    std::ofstream idx(dir / "index.csv");
    idx << "file,label,split,mask_file\nimages/ghost.ppm,0,train,\n";
  }
  try {
    load_dataset(dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("ghost.ppm") != std::string::npos);
  }

  {
    std::ofstream idx(dir / "index.csv");
    idx << "file,label,split,mask_file\nimages/ghost.ppm,2,train,\n";
  }
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("shifted copy is deterministic and keeps labels") {
  const auto& test = default_dataset().test;
  const std::vector<Sample> a = shifted_copy(test, 9);
  const std::vector<Sample> b = shifted_copy(test, 9);
  REQUIRE(a.size() == test.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].label == test[i].label);
    CHECK(a[i].image.valid());
    changed += a[i].image != test[i].image;
  }
  CHECK(changed > a.size() / 2);
}
