#include "corefd/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "corefd/errors.hpp"

namespace corefd::metrics {

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredSet::negatives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
}

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) {
    throw ShapeError("scored set: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (const int y : labels) {
    if (y != 0 && y != 1) throw ContractError("scored set: label " + std::to_string(y) + " is not 0 or 1");
  }
}

namespace {

void require_both_classes(const ScoredSet& set, const char* what) {
  set.validate();
  if (set.positives() == 0 || set.negatives() == 0) {
    throw MetricUndefinedError(std::string(what) + " needs both classes (got " +
                               std::to_string(set.positives()) + " fake, " + std::to_string(set.negatives()) +
                               " real)");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending_order(const ScoredSet& set) {
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
  return order;
}

// Cumulative (negatives, positives) flagged at each distinct threshold, descending.
struct Step {
  std::size_t fp = 0;
  std::size_t tp = 0;
};

std::vector<Step> threshold_steps(const ScoredSet& set) {
  const std::vector<std::size_t> order = descending_order(set);
  std::vector<Step> steps;
  Step cur;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (set.labels[order[i]] == 1) ++cur.tp;
    else ++cur.fp;
    const bool last_of_group = i + 1 == order.size() || set.scores[order[i + 1]] != set.scores[order[i]];
    if (last_of_group) steps.push_back(cur);
  }
  return steps;
}

}  // namespace

double auc(const ScoredSet& set) {
  require_both_classes(set, "auc");
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
  // Twice the positive rank sum keeps tie-averaged ranks integral.
  std::size_t rank_sum2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const std::size_t avg_rank2 = (i + 1) + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (set.labels[order[k]] == 1) rank_sum2 += avg_rank2;
    }
    i = j;
  }
  const std::size_t P = set.positives(), N = set.negatives();
  // Count of (pos > neg) pairs plus half the ties, doubled.
  const std::size_t wins2 = rank_sum2 - P * (P + 1);
  return (static_cast<double>(wins2) / 2.0) / (static_cast<double>(P) * static_cast<double>(N));
}

double tdr_at_fdr(const ScoredSet& set, double fdr_target) {
  require_both_classes(set, "tdr_at_fdr");
  if (!(fdr_target > 0.0 && fdr_target < 1.0)) throw ContractError("tdr_at_fdr: target must lie in (0, 1)");
  const double P = static_cast<double>(set.positives());
  const double N = static_cast<double>(set.negatives());
  double best = 0.0;  // τ = +∞ flags nothing
  for (const Step& s : threshold_steps(set)) {
    if (static_cast<double>(s.fp) / N <= fdr_target) best = std::max(best, static_cast<double>(s.tp) / P);
  }
  return best;
}

double accuracy(const ScoredSet& set, double threshold) {
  set.validate();
  if (set.scores.empty()) throw MetricUndefinedError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    if (static_cast<int>(set.scores[i] >= threshold) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.scores.size());
}

std::vector<RocPoint> roc_points(const ScoredSet& set) {
  require_both_classes(set, "roc_points");
  const double P = static_cast<double>(set.positives());
  const double N = static_cast<double>(set.negatives());
  std::vector<RocPoint> points{{0.0, 0.0}};
  for (const Step& s : threshold_steps(set)) {
    points.push_back({static_cast<double>(s.fp) / N, static_cast<double>(s.tp) / P});
  }
  return points;
}

double trapezoid_area(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fdr - points[i - 1].fdr) * (points[i].tdr + points[i - 1].tdr) / 2.0;
  }
  return area;
}

MetricReport evaluate_scores(const ScoredSet& set) {
  MetricReport r;
  r.auc = auc(set);
  r.accuracy = accuracy(set);
  r.tdr_at_1pct = tdr_at_fdr(set, 0.01);
  r.tdr_at_0_1pct = tdr_at_fdr(set, 0.001);
  r.tdr_at_0_01pct = tdr_at_fdr(set, 0.0001);
  r.roc = roc_points(set);
  r.n_real = set.negatives();
  r.n_fake = set.positives();
  return r;
}

std::string MetricReport::to_text() const {
  char buf[64];
  const auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "auc: " << fmt(auc) << "\n";
  out << "acc: " << fmt(accuracy) << "\n";
  out << "tdr_1pct: " << fmt(tdr_at_1pct) << "\n";
  out << "tdr_0.1pct: " << fmt(tdr_at_0_1pct) << "\n";
  out << "tdr_0.01pct: " << fmt(tdr_at_0_01pct) << "\n";
  out << "n_real: " << n_real << "\n";
  out << "n_fake: " << n_fake << "\n";
  out << "roc_points: " << roc.size() << "\n";
  return out.str();
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write score file " + path.string());
  out << "id,score,label\n";
  char buf[64];
  for (const ScoreRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    out << r.id << ',' << buf << ',' << r.label << '\n';
  }
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open score file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "id,score,label") {
    throw FormatError(path.string() + ": expected header 'id,score,label'");
  }
  std::vector<ScoreRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    ScoreRow r;
    r.id = line.substr(0, c1);
    try {
      r.score = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      r.label = std::stoi(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (r.label != 0 && r.label != 1) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

ScoredSet to_scored_set(const std::vector<ScoreRow>& rows) {
  ScoredSet s;
  for (const ScoreRow& r : rows) {
    s.scores.push_back(r.score);
    s.labels.push_back(r.label);
  }
  return s;
}

}  // namespace corefd::metrics
