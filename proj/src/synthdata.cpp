#include "corefd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <regex>

#include "corefd/errors.hpp"
#include "corefd/metrics.hpp"
#include "corefd/netpbm.hpp"

namespace corefd::synthdata {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::vector<Sample>& DatasetSplit::get(Split s) {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

const std::vector<Sample>& DatasetSplit::get(Split s) const {
  return const_cast<DatasetSplit*>(this)->get(s);
}

void GenConfig::validate() const {
  if (n_real < 10) throw ConfigError("n_real must be at least 10 (got " + std::to_string(n_real) + ")");
  if (ratio < 1) throw ConfigError("ratio must be at least 1");
  if (image_size < 32) throw ConfigError("image_size must be at least 32");
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || train_frac + val_frac >= 1.0) {
    throw ConfigError("split fractions must be positive and leave room for a test split");
  }
}

namespace {

// Low-frequency noise: a grid×grid uniform field upsampled bilinearly.
std::vector<double> smooth_noise(RngStream& rng, std::size_t grid, std::size_t size) {
  std::vector<double> coarse(grid * grid);
  for (double& v : coarse) v = rng.uniform();
  return resize_map(coarse, grid, grid, size, size);
}

constexpr std::size_t kFeather = 2;
constexpr std::size_t kMinSide = 8;
constexpr std::size_t kMaxSide = 24;
constexpr double kMaxColorShift = 0.05;

}  // namespace

Sample gen_real(RngStream& rng, std::size_t size, std::int64_t source_id) {
  const double S = static_cast<double>(size);
  Sample s;
  s.label = 0;
  s.source_id = source_id;
  s.image = Image(size, size);

  std::array<double, 3> bg_base{}, face_base{};
  for (double& v : bg_base) v = rng.uniform(0.2, 0.8);
  for (double& v : face_base) v = rng.uniform(0.3, 0.8);
  std::array<std::vector<double>, 3> bg_noise, face_noise;
  for (auto& n : bg_noise) n = smooth_noise(rng, 8, size);
  for (auto& n : face_noise) n = smooth_noise(rng, 5, size);

  // Center jitter of 3 px at 64 px, scaled with the image.
  const double jitter = 3.0 * S / 64.0;
  Ellipse e;
  e.cy = S / 2.0 + rng.uniform(-jitter, jitter);
  e.cx = S / 2.0 + rng.uniform(-jitter, jitter);
  e.ry = S * rng.uniform(0.34, 0.42);
  e.rx = S * rng.uniform(0.28, 0.36);
  const double fy = rng.uniform(1.0, 3.0), fx = rng.uniform(1.0, 3.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double edge = std::min(e.ry, e.rx);

  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double y = static_cast<double>(r), x = static_cast<double>(c);
      const double dy = (y - e.cy) / e.ry, dx = (x - e.cx) / e.rx;
      const double alpha = std::clamp((1.0 - std::sqrt(dy * dy + dx * dx)) * edge + 0.5, 0.0, 1.0);
      const double wave = 0.06 * std::sin(2.0 * std::numbers::pi * (fy * y + fx * x) / S + phase);
      const std::size_t p = r * size + c;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double bg = bg_base[ch] + 0.4 * (bg_noise[ch][p] - 0.5);
        const double face = face_base[ch] + wave + 0.1 * (face_noise[ch][p] - 0.5);
        const double grain = rng.uniform(-0.015, 0.015);
        s.image.at(r, c, ch) = std::clamp(alpha * face + (1.0 - alpha) * bg + grain, 0.0, 1.0);
      }
    }
  }
  s.face = e;
  return s;
}

double feather_alpha(std::size_t d) {
  if (d == 0) return 1.0;
  if (d > kFeather) return 0.0;
  return static_cast<double>(kFeather + 1 - d) / static_cast<double>(kFeather + 1);
}

Sample gen_fake(const Sample& base, const Sample& donor, RngStream& rng) {
  if (base.label != 0 || donor.label != 0) throw ContractError("gen_fake: base and donor must be real samples");
  if (!base.face || !donor.face) throw ContractError("gen_fake: inputs must carry their face ellipse");
  if (!base.image.same_shape(donor.image)) throw ShapeError("gen_fake: base and donor differ in size");
  const std::size_t H = base.image.height, W = base.image.width;

  // Rectangle plus feather must sit inside both ellipses (convex, so corners suffice).
  const auto fits = [&](std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    if (top < kFeather || left < kFeather || top + h + kFeather > H || left + w + kFeather > W) return false;
    const double y0 = static_cast<double>(top - kFeather), y1 = static_cast<double>(top + h + kFeather - 1);
    const double x0 = static_cast<double>(left - kFeather), x1 = static_cast<double>(left + w + kFeather - 1);
    for (const Ellipse* e : {&*base.face, &*donor.face}) {
      if (!e->contains(y0, x0) || !e->contains(y0, x1) || !e->contains(y1, x0) || !e->contains(y1, x1)) {
        return false;
      }
    }
    return true;
  };

  std::optional<augment::PixelRect> rect;
  for (int attempt = 0; attempt < 2000 && !rect; ++attempt) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(kMinSide, kMaxSide));
    const auto w = static_cast<std::size_t>(rng.uniform_int(kMinSide, kMaxSide));
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(H - h)));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(W - w)));
    if (fits(top, left, h, w)) rect = augment::PixelRect{top, left, h, w};
  }
  // Small images: scan for the minimal rectangle closest to the base ellipse center.
  const bool sampled = rect.has_value();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t top = 0; !sampled && top + kMinSide <= H; ++top) {
    for (std::size_t left = 0; left + kMinSide <= W; ++left) {
      if (!fits(top, left, kMinSide, kMinSide)) continue;
      const double dy = static_cast<double>(top) + kMinSide / 2.0 - base.face->cy;
      const double dx = static_cast<double>(left) + kMinSide / 2.0 - base.face->cx;
      const double dist = dy * dy + dx * dx;
      if (dist < best) {
        best = dist;
        rect = augment::PixelRect{top, left, kMinSide, kMinSide};
      }
    }
  }
  if (!rect) throw ContractError("gen_fake: ellipses too small to host a paste");

  Sample s;
  s.label = 1;
  s.source_id = base.source_id;
  s.face = base.face;
  s.tamper_rect = rect;
  for (double& v : s.color_shift) v = rng.uniform(-kMaxColorShift, kMaxColorShift);
  s.image = base.image;
  s.tamper_mask.assign(H * W, 0);

  const std::size_t r0 = rect->top - kFeather, r1 = rect->top + rect->height + kFeather;
  const std::size_t c0 = rect->left - kFeather, c1 = rect->left + rect->width + kFeather;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const std::size_t dr = r < rect->top ? rect->top - r : (r >= rect->top + rect->height ? r + 1 - rect->top - rect->height : 0);
      const std::size_t dc = c < rect->left ? rect->left - c : (c >= rect->left + rect->width ? c + 1 - rect->left - rect->width : 0);
      const double alpha = feather_alpha(std::max(dr, dc));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double pasted = std::clamp(donor.image.at(r, c, ch) + s.color_shift[ch], 0.0, 1.0);
        s.image.at(r, c, ch) = alpha * pasted + (1.0 - alpha) * base.image.at(r, c, ch);
      }
      if (rect->contains(r, c)) s.tamper_mask[r * W + c] = 1;
    }
  }
  return s;
}

double brightness_auc(const std::vector<Sample>& samples) {
  metrics::ScoredSet set;
  for (const Sample& s : samples) {
    set.scores.push_back(mean_brightness(s.image));
    set.labels.push_back(s.label);
  }
  return metrics::auc(set);
}

DatasetSplit gen_dataset(const GenConfig& config) {
  config.validate();
  const std::size_t n = config.n_real;
  const std::uint64_t real_seed = derive_seed(config.seed, "real");
  const std::uint64_t fake_seed = derive_seed(config.seed, "fake");

  std::vector<Sample> reals;
  reals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(real_seed, 0, i, 0);
    reals.push_back(gen_real(rng, config.image_size, static_cast<std::int64_t>(i)));
    char id[32];
    std::snprintf(id, sizeof id, "s%04zu_real", i);
    reals.back().id = id;
  }

  // Fisher-Yates over source ids, then contiguous 70/15/15 blocks.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  RngStream split_rng(derive_seed(config.seed, "split"), 0, 0, 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(split_rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(perm[i], perm[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::lround(config.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::lround(config.val_frac * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) throw ConfigError("split fractions leave an empty split");

  std::array<std::vector<std::size_t>, 3> groups;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t g = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    groups[g].push_back(perm[k]);
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());

  DatasetSplit out;
  out.seed = config.seed;
  out.ratio = config.ratio;
  const Split splits[3] = {Split::Train, Split::Val, Split::Test};
  for (std::size_t g = 0; g < 3; ++g) {
    std::vector<Sample>& dst = out.get(splits[g]);
    const std::vector<std::size_t>& members = groups[g];
    for (const std::size_t src : members) {
      dst.push_back(reals[src]);
      for (std::size_t k = 0; k < config.ratio; ++k) {
        RngStream rng(fake_seed, 0, src, k);
        // Donor from the same split when possible.
        const std::vector<std::size_t>& pool = members.size() > 1 ? members : perm;
        std::size_t donor = src;
        while (donor == src) {
          donor = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size() - 1)))];
        }
        Sample fake = gen_fake(reals[src], reals[donor], rng);
        char id[32];
        std::snprintf(id, sizeof id, "s%04zu_fake%zu", src, k);
        fake.id = id;
        dst.push_back(std::move(fake));
      }
    }
  }

  out.brightness_auc = brightness_auc(out.test);
  if (!(out.brightness_auc < kMaxBrightnessAuc)) {
    throw Error("generated test split has a brightness shortcut (AUC " + std::to_string(out.brightness_auc) +
                " >= " + std::to_string(kMaxBrightnessAuc) + "); choose another seed");
  }
  return out;
}

// ---------------------------------------------------------------------------
// On-disk layout

void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec) throw Error("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::ofstream index(dir / "index.csv", std::ios::binary);
  if (!index) throw Error("cannot write " + (dir / "index.csv").string());
  index << "file,label,split,mask_file\n";
  for (const Split s : {Split::Train, Split::Val, Split::Test}) {
    for (const Sample& sample : split.get(s)) {
      const std::string file = "images/" + sample.id + ".ppm";
      netpbm::write_ppm(dir / file, sample.image);
      std::string mask_file;
      if (sample.has_mask()) {
        mask_file = "masks/" + sample.id + ".pgm";
        std::vector<double> m(sample.tamper_mask.begin(), sample.tamper_mask.end());
        netpbm::write_pgm(dir / mask_file, m, sample.image.height, sample.image.width);
      }
      index << file << ',' << sample.label << ',' << to_string(s) << ',' << mask_file << '\n';
    }
  }
  if (!index) throw Error("failed writing " + (dir / "index.csv").string());
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path index_path = dir / "index.csv";
  std::ifstream index(index_path);
  if (!index) throw FormatError("dataset index not found: " + index_path.string());
  std::string line;
  if (!std::getline(index, line) || line != "file,label,split,mask_file") {
    throw FormatError(index_path.string() + ": expected header 'file,label,split,mask_file'");
  }
  static const std::regex source_re(R"(^s(\d+)_)");
  DatasetSplit out;
  std::size_t lineno = 1;
  while (std::getline(index, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      fields.push_back(line.substr(start, pos - start));
    }
    fields.push_back(line.substr(start));
    const std::string where = index_path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 4) throw FormatError(where + ": expected 4 fields");
    Sample s;
    if (fields[1] == "0") s.label = 0;
    else if (fields[1] == "1") s.label = 1;
    else throw FormatError(where + ": label '" + fields[1] + "' is not 0 or 1");
    Split split;
    try {
      split = parse_split(fields[2]);
    } catch (const ConfigError&) {
      throw FormatError(where + ": unknown split '" + fields[2] + "'");
    }
    const std::filesystem::path image_path = dir / fields[0];
    if (!std::filesystem::exists(image_path)) throw FormatError(where + ": image file missing: " + image_path.string());
    s.image = netpbm::read_ppm(image_path);
    s.id = std::filesystem::path(fields[0]).stem().string();
    std::smatch m;
    s.source_id = std::regex_search(s.id, m, source_re) ? std::stoll(m[1].str()) : static_cast<std::int64_t>(lineno);
    if (!fields[3].empty()) {
      const std::filesystem::path mask_path = dir / fields[3];
      if (!std::filesystem::exists(mask_path)) throw FormatError(where + ": mask file missing: " + mask_path.string());
      const netpbm::GrayImage g = netpbm::read_pgm(mask_path);
      if (g.height != s.image.height || g.width != s.image.width) {
        throw FormatError(where + ": mask size differs from image size");
      }
      s.tamper_mask.resize(g.pixels.size());
      for (std::size_t i = 0; i < g.pixels.size(); ++i) s.tamper_mask[i] = g.pixels[i] > 127 ? 1 : 0;
    }
    if ((s.label == 1) != s.has_mask()) throw FormatError(where + ": fake samples need a mask and real samples none");
    out.get(split).push_back(std::move(s));
  }
  const auto has_label = [&](int y) {
    return std::any_of(out.test.begin(), out.test.end(), [y](const Sample& s) { return s.label == y; });
  };
  if (has_label(0) && has_label(1)) out.brightness_auc = brightness_auc(out.test);
  return out;
}

std::vector<Sample> shifted_copy(const std::vector<Sample>& samples, std::uint64_t seed,
                                 const augment::SelimParams& params) {
  const std::uint64_t key = derive_seed(seed, "shifted-test");
  std::vector<Sample> out = samples;
  for (std::size_t i = 0; i < out.size(); ++i) {
    RngStream rng(key, 0, i, 0);
    out[i].image = augment::dfdc_selim(out[i].image, rng, params);
  }
  return out;
}

}  // namespace corefd::synthdata
