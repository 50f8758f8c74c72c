#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "corefd/metrics.hpp"
#include "corefd/trainer.hpp"

namespace corefd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct KeyInfo {
  std::string_view key;
  std::string_view default_value;
  std::string_view doc;
};

/// Every recognized configuration key with its default and a one-line description.
const std::vector<KeyInfo>& known_keys();

/// Flat key/value configuration. Every known key always has a value.
class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  /// Parses `key = value` lines; `#` starts a comment. Unknown keys and
  /// malformed lines throw ConfigError naming the line.
  static RunConfig parse(std::string_view text, std::string_view origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string str(const std::string& key) const { return get(key); }
  double number(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> count_list(const std::string& key) const;
  std::vector<std::string> string_list(const std::string& key) const;

  /// Sorted `key = value` text that parse() reads back to an equal config.
  std::string to_text() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  std::map<std::string, std::string> values_;
};

synthdata::GenConfig gen_config(const RunConfig& cfg);
trainer::TrainConfig train_config(const RunConfig& cfg);
augment::AugStrategy aug_strategy(const RunConfig& cfg);

/// Writes the dataset layout into `out`; returns the generated split.
synthdata::DatasetSplit cmd_gen_data(const RunConfig& cfg);
/// Trains on `data`, writes checkpoint.bin, history.csv and resolved_config.txt into `out`.
/// With preset table2/table3, one sub-directory per run plus summary.csv.
trainer::TrainResult cmd_train(const RunConfig& cfg);
/// Writes report.txt and scores.csv into `out`.
trainer::Evaluation cmd_eval(const RunConfig& cfg);
/// Writes <id>_input.ppm, <id>_cam.pgm, <id>_overlay.ppm and, for fakes, <id>_mask.pgm.
/// Returns the ids processed.
std::vector<std::string> cmd_cam(const RunConfig& cfg);
/// Writes `count` variants named aug_<strategy>_seed<seed>.ppm; returns their paths.
std::vector<std::filesystem::path> cmd_aug_preview(const RunConfig& cfg);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace corefd::cli
