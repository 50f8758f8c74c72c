#include "corefd/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "corefd/errors.hpp"
#include "corefd/netpbm.hpp"

namespace corefd::cli {

namespace fs = std::filesystem;

const std::vector<KeyInfo>& known_keys() {
  static const std::vector<KeyInfo> keys = {
      {"seed", "0", "master seed; every sub-seed is derived from it"},
      {"out", "out", "output directory; nothing is written outside it"},
      {"data", "data", "dataset directory (index.csv layout)"},
      {"checkpoint", "checkpoint.bin", "checkpoint file read by eval and cam"},
      {"n_real", "100", "gen-data: number of real source images"},
      {"ratio", "4", "gen-data: fakes per real source"},
      {"image_size", "64", "gen-data: image side in pixels"},
      {"train_frac", "0.7", "gen-data: fraction of sources in the train split"},
      {"val_frac", "0.15", "gen-data: fraction of sources in the val split"},
      {"pairs_per_batch", "32", "train: view pairs per mini-batch"},
      {"epochs", "30", "train: maximum epochs"},
      {"patience", "5", "train: stop after this many epochs without a val AUC gain"},
      {"lr", "0.0002", "train: Adam learning rate"},
      {"alpha", "1", "train: consistency loss weight"},
      {"penalty", "cos", "train: consistency penalty (cos, l1, l2, none)"},
      {"aug", "raaug", "train/aug-preview: augmentation (none, re, randcrop, raaug, dfdc)"},
      {"w_real", "4", "train: cross-entropy weight of real samples"},
      {"w_fake", "1", "train: cross-entropy weight of fake samples"},
      {"channels", "16,32,64,128", "train: encoder channel plan, one entry per stage"},
      {"record_timing", "false", "train: write wall time into history.csv (breaks byte-identical reruns)"},
      {"preset", "none", "train: none, table2 (penalty sweep) or table3 (alpha sweep)"},
      {"split", "test", "eval/cam: split to read (train, val, test)"},
      {"shifted_test", "false", "eval: apply the dfdc corruption to the split before scoring"},
      {"ids", "", "cam: comma-separated sample ids; empty means every fake in the split"},
      {"image", "", "aug-preview: input PPM image"},
      {"count", "4", "aug-preview: number of variants"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_known(const std::string& key) {
  const auto& keys = known_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const KeyInfo& k) { return k.key == key; });
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeyInfo& k : known_keys()) values_.emplace(std::string(k.key), std::string(k.default_value));
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!is_known(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    cfg.set(key, trim(std::string_view(line).substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> RunConfig::count_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const std::string& item : split_commas(get(key))) {
    RunConfig tmp;
    tmp.set("count", item);
    try {
      out.push_back(tmp.count("count"));
    } catch (const ConfigError&) {
      throw ConfigError("key '" + key + "': expected comma-separated integers, got '" + get(key) + "'");
    }
  }
  return out;
}

std::vector<std::string> RunConfig::string_list(const std::string& key) const { return split_commas(get(key)); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

synthdata::GenConfig gen_config(const RunConfig& cfg) {
  synthdata::GenConfig g;
  g.n_real = cfg.count("n_real");
  g.ratio = cfg.count("ratio");
  g.seed = cfg.u64("seed");
  g.image_size = cfg.count("image_size");
  g.train_frac = cfg.number("train_frac");
  g.val_frac = cfg.number("val_frac");
  g.validate();
  return g;
}

augment::AugStrategy aug_strategy(const RunConfig& cfg) {
  augment::AugStrategy s;
  s.kind = augment::parse_aug_kind(cfg.str("aug"));
  s.validate();
  return s;
}

trainer::TrainConfig train_config(const RunConfig& cfg) {
  trainer::TrainConfig t;
  t.pairs_per_batch = cfg.count("pairs_per_batch");
  t.max_epochs = cfg.count("epochs");
  t.patience = cfg.count("patience");
  t.lr = cfg.number("lr");
  t.loss.alpha = cfg.number("alpha");
  t.loss.penalty = losses::parse_penalty(cfg.str("penalty"));
  t.loss.weights = {cfg.number("w_real"), cfg.number("w_fake")};
  t.aug = aug_strategy(cfg);
  t.seed = cfg.u64("seed");
  t.model.channels = cfg.count_list("channels");
  t.record_timing = cfg.flag("record_timing");
  t.validate();
  return t;
}

namespace {

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.str("out");
  if (out.empty()) throw ConfigError("out must not be empty");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error("cannot create output directory " + out.string());
  return out;
}

void echo_config(const RunConfig& cfg, const fs::path& out) {
  std::ofstream f(out / "resolved_config.txt", std::ios::binary);
  if (!f) throw Error("cannot write " + (out / "resolved_config.txt").string());
  f << cfg.to_text();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

synthdata::DatasetSplit load_data(const RunConfig& cfg) {
  const fs::path dir = cfg.str("data");
  if (!fs::is_directory(dir)) throw Error("dataset directory " + dir.string() + " does not exist");
  return synthdata::load_dataset(dir);
}

trainer::TrainResult train_one(const trainer::TrainConfig& tc, const synthdata::DatasetSplit& data,
                               const fs::path& out) {
  fs::create_directories(out);
  trainer::TrainResult res = trainer::train(tc, data, {}, [](const trainer::EpochRecord& r) {
    std::clog << "epoch " << r.epoch << "  ce " << r.ce_loss << "  consistency " << r.consistency_loss
              << "  val_auc " << r.val_auc << "  (" << r.seconds << " s)\n";
  });
  trainer::save_checkpoint(out / "checkpoint.bin", res.best);
  res.history.write_csv(out / "history.csv");
  return res;
}

}  // namespace

synthdata::DatasetSplit cmd_gen_data(const RunConfig& cfg) {
  const synthdata::GenConfig g = gen_config(cfg);
  const fs::path out = prepare_out(cfg);
  synthdata::DatasetSplit split = synthdata::gen_dataset(g);
  synthdata::save_dataset(split, out);
  echo_config(cfg, out);
  return split;
}

trainer::TrainResult cmd_train(const RunConfig& cfg) {
  trainer::TrainConfig tc = train_config(cfg);
  const std::string preset = cfg.str("preset");
  if (preset != "none" && preset != "table2" && preset != "table3") {
    throw ConfigError("preset must be none, table2 or table3, got '" + preset + "'");
  }
  const synthdata::DatasetSplit data = load_data(cfg);
  if (!data.train.empty()) tc.model.input_size = data.train.front().image.height;
  tc.model.validate();
  const fs::path out = prepare_out(cfg);
  echo_config(cfg, out);
  if (preset == "none") return train_one(tc, data, out);

  struct Variant {
    std::string name;
    trainer::TrainConfig config;
  };
  std::vector<Variant> variants;
  if (preset == "table2") {
    for (const losses::Penalty p : {losses::Penalty::Cos, losses::Penalty::L1, losses::Penalty::L2,
                                    losses::Penalty::None}) {
      trainer::TrainConfig v = tc;
      v.loss.penalty = p;
      variants.push_back({"penalty_" + std::string(losses::to_string(p)), v});
    }
  } else {
    for (const double a : {0.0, 1.0, 2.0, 5.0, 10.0, 100.0}) {
      trainer::TrainConfig v = tc;
      v.loss.alpha = a;
      std::ostringstream name;
      name << "alpha_" << a;
      variants.push_back({name.str(), v});
    }
  }
  std::string summary = "run,best_epoch,best_val_auc,test_auc\n";
  trainer::TrainResult best;
  double best_auc = -1.0;
  for (const Variant& v : variants) {
    std::clog << "== " << v.name << "\n";
    trainer::TrainResult r = train_one(v.config, data, out / v.name);
    const double test_auc = trainer::evaluate(r.best.model, data.test).report.auc;
    std::ostringstream row;
    row.precision(17);
    row << v.name << "," << r.best.epoch << "," << r.best.best_val_auc << "," << test_auc << "\n";
    summary += row.str();
    if (r.best.best_val_auc > best_auc) {
      best_auc = r.best.best_val_auc;
      best = std::move(r);
    }
  }
  write_text(out / "summary.csv", summary);
  return best;
}

trainer::Evaluation cmd_eval(const RunConfig& cfg) {
  const synthdata::Split split = synthdata::parse_split(cfg.str("split"));
  const bool shifted = cfg.flag("shifted_test");
  const std::uint64_t seed = cfg.u64("seed");
  const fs::path ckpt_path = cfg.str("checkpoint");
  if (!fs::exists(ckpt_path)) throw Error("checkpoint " + ckpt_path.string() + " does not exist");
  const trainer::Checkpoint ckpt = trainer::load_checkpoint(ckpt_path);
  const synthdata::DatasetSplit data = load_data(cfg);
  std::vector<synthdata::Sample> samples = data.get(split);
  if (shifted) samples = synthdata::shifted_copy(samples, seed);
  const fs::path out = prepare_out(cfg);
  echo_config(cfg, out);
  trainer::Evaluation ev = trainer::evaluate(ckpt.model, samples);
  write_text(out / "report.txt", ev.report.to_text());
  metrics::write_scores_csv(out / "scores.csv", ev.scores);
  return ev;
}

std::vector<std::string> cmd_cam(const RunConfig& cfg) {
  const synthdata::Split split = synthdata::parse_split(cfg.str("split"));
  const fs::path ckpt_path = cfg.str("checkpoint");
  if (!fs::exists(ckpt_path)) throw Error("checkpoint " + ckpt_path.string() + " does not exist");
  const trainer::Checkpoint ckpt = trainer::load_checkpoint(ckpt_path);
  const synthdata::DatasetSplit data = load_data(cfg);
  const std::vector<synthdata::Sample>& pool = data.get(split);

  std::vector<const synthdata::Sample*> chosen;
  const std::vector<std::string> ids = cfg.string_list("ids");
  if (ids.empty()) {
    for (const synthdata::Sample& s : pool) {
      if (s.label == 1) chosen.push_back(&s);
    }
  } else {
    for (const std::string& id : ids) {
      const auto it = std::find_if(pool.begin(), pool.end(), [&](const synthdata::Sample& s) { return s.id == id; });
      if (it == pool.end()) {
        throw Error("unknown sample id '" + id + "' in the " + std::string(synthdata::to_string(split)) + " split");
      }
      chosen.push_back(&*it);
    }
  }

  const fs::path out = prepare_out(cfg);
  echo_config(cfg, out);
  std::vector<std::string> done;
  for (const synthdata::Sample* s : chosen) {
    const Image& img = s->image;
    const model::Inference inf = model::infer(ckpt.model, to_batch({&img}));
    const std::size_t d = inf.feature_maps.dim(1), side = inf.feature_maps.dim(2);
    const ndgrad::Tensor maps = inf.feature_maps.reshaped({d, side, side});
    const std::vector<double> heat =
        resize_map(model::cam(maps, ckpt.model.classifier, model::kFakeClass), side, side, img.height, img.width);
    Image overlay = img;
    for (std::size_t p = 0; p < img.height * img.width; ++p) {
      const double h = std::clamp(heat[p], 0.0, 1.0);
      const double tint[3] = {h, 0.0, 1.0 - h};
      for (std::size_t c = 0; c < 3; ++c) overlay.pixels[p * 3 + c] = 0.5 * img.pixels[p * 3 + c] + 0.5 * tint[c];
    }
    netpbm::write_ppm(out / (s->id + "_input.ppm"), img);
    netpbm::write_pgm(out / (s->id + "_cam.pgm"), heat, img.height, img.width);
    netpbm::write_ppm(out / (s->id + "_overlay.ppm"), overlay);
    if (s->has_mask()) {
      std::vector<double> mask(s->tamper_mask.begin(), s->tamper_mask.end());
      netpbm::write_pgm(out / (s->id + "_mask.pgm"), mask, img.height, img.width);
    }
    done.push_back(s->id);
  }
  return done;
}

std::vector<fs::path> cmd_aug_preview(const RunConfig& cfg) {
  const augment::AugStrategy strategy = aug_strategy(cfg);
  const std::size_t n = cfg.count("count");
  const std::uint64_t seed = cfg.u64("seed");
  const fs::path image_path = cfg.str("image");
  if (image_path.empty()) throw ConfigError("aug-preview needs an input image (--image)");
  const Image img = netpbm::read_ppm(image_path);
  const fs::path out = prepare_out(cfg);
  echo_config(cfg, out);
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = seed + i;
    RngStream rng = augment::RngAddress{derive_seed(s, "aug-preview"), 0, 0, 0}.stream();
    const fs::path path = out / ("aug_" + std::string(augment::to_string(strategy.kind)) + "_seed" + std::to_string(s) + ".ppm");
    netpbm::write_ppm(path, augment::apply_strategy(img, strategy, rng));
    written.push_back(path);
  }
  return written;
}

namespace {

struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::string> flags;
};

void add_value(CLI::App* sub, Overrides& o, const std::string& key, const std::string& help) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  sub->add_option(flag, o.values[key], help);
}

void add_switch(CLI::App* sub, Overrides& o, const std::string& key, const std::string& help) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  sub->add_flag(flag, help)->each([&o, key](const std::string&) { o.flags.push_back(key); });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-view consistency training for face-forgery detection on a synthetic tamper dataset"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    add_value(sub, o, "out", "output directory");
    add_value(sub, o, "seed", "master seed");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  common(gen);
  for (const char* k : {"n_real", "ratio", "image_size", "train_frac", "val_frac"}) add_value(gen, o, k, "");

  CLI::App* train = app.add_subcommand("train", "train a detector");
  common(train);
  for (const char* k : {"data", "alpha", "penalty", "aug", "pairs_per_batch", "epochs", "patience", "lr", "w_real",
                        "w_fake", "channels", "preset"}) {
    add_value(train, o, k, "");
  }
  add_switch(train, o, "record_timing", "write wall time into history.csv");

  CLI::App* eval = app.add_subcommand("eval", "score a split with a checkpoint");
  common(eval);
  for (const char* k : {"data", "checkpoint", "split"}) add_value(eval, o, k, "");
  add_switch(eval, o, "shifted_test", "corrupt the split with the dfdc pipeline first");

  CLI::App* cam = app.add_subcommand("cam", "export class activation maps");
  common(cam);
  for (const char* k : {"data", "checkpoint", "split", "ids"}) add_value(cam, o, k, "");

  CLI::App* preview = app.add_subcommand("aug-preview", "write augmented variants of one image");
  common(preview);
  for (const char* k : {"image", "aug", "count"}) add_value(preview, o, k, "");

  for (const KeyInfo& k : known_keys()) {
    for (CLI::App* sub : {gen, train, eval, cam, preview}) {
      std::string flag = "--" + std::string(k.key);
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (CLI::Option* opt = sub->get_option_no_throw(flag)) {
        opt->description(std::string(k.doc) + (k.default_value.empty() ? "" : " [" + std::string(k.default_value) + "]"));
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    CLI::App* chosen = app.get_subcommands().front();
    for (const auto& [key, value] : o.values) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      CLI::Option* opt = chosen->get_option_no_throw(flag);
      if (opt != nullptr && opt->count() > 0) cfg.set(key, value);
    }
    for (const std::string& key : o.flags) cfg.set(key, "true");

    if (chosen == gen) {
      const synthdata::DatasetSplit d = cmd_gen_data(cfg);
      out << "wrote " << d.size() << " samples (train " << d.train.size() << ", val " << d.val.size() << ", test "
          << d.test.size() << ") to " << cfg.str("out") << "\n";
    } else if (chosen == train) {
      const trainer::TrainResult r = cmd_train(cfg);
      out << "best epoch " << r.best.epoch << ", val auc " << r.best.best_val_auc << "\n";
    } else if (chosen == eval) {
      out << cmd_eval(cfg).report.to_text();
    } else if (chosen == cam) {
      out << "wrote CAMs for " << cmd_cam(cfg).size() << " samples\n";
    } else {
      out << "wrote " << cmd_aug_preview(cfg).size() << " variants\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace corefd::cli
