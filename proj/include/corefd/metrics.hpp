#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace corefd::metrics {

/// Parallel scores and {0, 1} labels; label 1 (fake) is the positive class.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t positives() const;
  std::size_t negatives() const;
  /// Throws ShapeError on length mismatch, ContractError on labels outside {0, 1}.
  void validate() const;
};

struct RocPoint {
  double fdr = 0.0;  // false-positive rate over negatives
  double tdr = 0.0;  // true-positive rate over positives
};

struct MetricReport {
  double auc = 0.0;
  double accuracy = 0.0;
  double tdr_at_1pct = 0.0;
  double tdr_at_0_1pct = 0.0;
  double tdr_at_0_01pct = 0.0;
  std::vector<RocPoint> roc;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;

  /// `key: value` lines: auc, acc, tdr_1pct, tdr_0.1pct, tdr_0.01pct, n_real, n_fake, roc_points.
  std::string to_text() const;
};

/// Mann-Whitney AUC via tie-averaged ranks, O(n log n).
/// Throws MetricUndefinedError unless both classes are present.
double auc(const ScoredSet& set);

/// Largest TDR(τ) over τ ∈ scores ∪ {+∞} with FDR(τ) <= target, where a sample is
/// flagged when its score is >= τ.
double tdr_at_fdr(const ScoredSet& set, double fdr_target);

/// Fraction of samples with (score >= threshold) == label.
double accuracy(const ScoredSet& set, double threshold = 0.5);

/// (FDR, TDR) at +∞ and at every distinct score, descending; ends at (1, 1).
std::vector<RocPoint> roc_points(const ScoredSet& set);

/// Trapezoid area under a point list.
double trapezoid_area(const std::vector<RocPoint>& points);

MetricReport evaluate_scores(const ScoredSet& set);

/// One row of an `id,score,label` score file.
struct ScoreRow {
  std::string id;
  double score = 0.0;
  int label = 0;
};

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);
ScoredSet to_scored_set(const std::vector<ScoreRow>& rows);

}  // namespace corefd::metrics
