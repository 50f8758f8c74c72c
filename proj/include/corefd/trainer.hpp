#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "corefd/adam.hpp"
#include "corefd/augment.hpp"
#include "corefd/checkpoint.hpp"
#include "corefd/losses.hpp"
#include "corefd/metrics.hpp"
#include "corefd/model.hpp"
#include "corefd/synthdata.hpp"

namespace corefd::trainer {

struct TrainConfig {
  std::size_t pairs_per_batch = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  double lr = 2e-4;
  losses::LossConfig loss;
  augment::AugStrategy aug{augment::AugKind::RaAug, {}, {}, {}};
  std::uint64_t seed = 0;
  model::ModelConfig model;
  /// Wall time goes into the history CSV only when set; otherwise the column is 0
  /// so that repeated runs produce identical files.
  bool record_timing = false;

  /// Throws ConfigError on N == 0, patience == 0, lr <= 0 or an invalid loss/aug/model config.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double ce_loss = 0.0;           // mean per-batch CE sum
  double consistency_loss = 0.0;  // mean per-batch α·L_c
  double val_auc = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Strict-improvement early stopping with zero min-delta.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records an epoch's validation AUC; returns true if it is a new best.
  bool update(std::size_t epoch, double val_auc);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  std::size_t stale() const { return stale_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
};

struct StepLosses {
  double ce = 0.0;
  double consistency = 0.0;  // unweighted L_c
  double total = 0.0;        // ce + α·L_c
};

/// Forward both views through the shared encoder, build L = L_ce + α·L_c and
/// backpropagate into the model's grad() buffers (zeroed first). No optimizer step.
/// `ids` names the pairs in error messages; may be empty.
StepLosses loss_and_grads(model::Model& model, const std::vector<augment::ViewPair>& pairs,
                          const losses::LossConfig& loss, const std::vector<std::string>& ids = {});

/// loss_and_grads followed by one Adam step.
StepLosses train_step(model::Model& model, ndgrad::AdamState& adam, const std::vector<augment::ViewPair>& pairs,
                      const losses::LossConfig& loss, const std::vector<std::string>& ids = {});

/// Replaces the validation AUC computation (scripted sequences in tests).
using ValidationFn = std::function<double(const model::Model&, std::size_t epoch)>;
/// Called after each epoch with its record.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
};

/// Throws ConfigError if the train or val split lacks either class.
TrainResult train(const TrainConfig& config, const synthdata::DatasetSplit& data, ValidationFn validation = {},
                  EpochCallback on_epoch = {});

/// Fake-class probabilities for single un-augmented views.
std::vector<double> predict(const model::Model& model, const std::vector<synthdata::Sample>& samples,
                            std::size_t batch_size = 64);

struct Evaluation {
  metrics::MetricReport report;
  std::vector<metrics::ScoreRow> scores;
};

/// Throws ContractError on an empty split, MetricUndefinedError on a single-class split.
Evaluation evaluate(const model::Model& model, const std::vector<synthdata::Sample>& samples);

/// Mean cos_consistency between the representations of one augmented view pair per sample.
double cross_view_distance(const model::Model& model, const std::vector<synthdata::Sample>& samples,
                           const augment::AugStrategy& strategy, std::uint64_t seed);

}  // namespace corefd::trainer
