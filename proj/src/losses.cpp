#include "corefd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corefd/errors.hpp"

namespace corefd::losses {

std::string_view to_string(Penalty p) {
  switch (p) {
    case Penalty::Cos: return "cos";
    case Penalty::L1: return "l1";
    case Penalty::L2: return "l2";
    case Penalty::None: return "none";
  }
  return "none";
}

Penalty parse_penalty(std::string_view name) {
  if (name == "cos") return Penalty::Cos;
  if (name == "l1") return Penalty::L1;
  if (name == "l2") return Penalty::L2;
  if (name == "none") return Penalty::None;
  throw ConfigError("unknown penalty '" + std::string(name) + "' (expected cos, l1, l2 or none)");
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (!(weights.real > 0.0) || !(weights.fake > 0.0)) throw ConfigError("class weights must be > 0");
}

NodeId pair_consistency(Graph& g, NodeId f1, NodeId f2, Penalty kind) {
  const ndgrad::Tensor& a = g.value(f1);
  ndgrad::expect_rank(a, 2, "consistency lhs");
  ndgrad::expect_dims(g.value(f2), a.dims(), "consistency rhs");
  const std::size_t n = a.dim(0), d = a.dim(1);
  switch (kind) {
    case Penalty::Cos: {
      const NodeId dot = g.row_dot(g.l2_normalize(f1), g.l2_normalize(f2));
      return g.square(g.affine(dot, -1.0, 1.0));
    }
    case Penalty::L1: {
      const NodeId ones = g.constant(ndgrad::Tensor({n, d}, 1.0));
      return g.scale(g.row_dot(g.abs(g.sub(f1, f2)), ones), 1.0 / static_cast<double>(d));
    }
    case Penalty::L2: {
      const NodeId diff = g.sub(f1, f2);
      return g.scale(g.row_dot(diff, diff), 1.0 / static_cast<double>(d));
    }
    case Penalty::None: return g.constant(ndgrad::Tensor({n}));
  }
  throw ContractError("pair_consistency: unknown penalty");
}

NodeId batch_consistency(Graph& g, NodeId f1, NodeId f2, Penalty kind) {
  return g.sum(pair_consistency(g, f1, f2, kind));
}

NodeId batch_ce(Graph& g, NodeId p1, NodeId p2, std::span<const int> labels, const ClassWeights& w) {
  ndgrad::expect_dims(g.value(p2), g.value(p1).dims(), "batch_ce second view");
  return g.add(g.weighted_bce(p1, labels, w.real, w.fake), g.weighted_bce(p2, labels, w.real, w.fake));
}

NodeId total_loss(Graph& g, NodeId ce, NodeId c, double alpha) {
  if (!(alpha >= 0.0)) throw ContractError("total_loss: alpha must be >= 0");
  return g.add(ce, g.scale(c, alpha));
}

namespace {

void same_length(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  if (a.empty()) throw ShapeError(std::string(what) + ": empty vectors");
}

double norm_of(std::span<const double> v) {
  double sq = 0.0;
  for (const double x : v) sq += x * x;
  return std::sqrt(sq);
}

}  // namespace

double cos_consistency(std::span<const double> f1, std::span<const double> f2) {
  same_length(f1, f2, "cos_consistency");
  const double n1 = norm_of(f1), n2 = norm_of(f2);
  if (!(n1 > ndgrad::kEpsNorm) || !(n2 > ndgrad::kEpsNorm)) {
    throw DegenerateVectorError("cos_consistency: representation norm is <= 1e-12");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) dot += (f1[i] / n1) * (f2[i] / n2);
  const double t = 1.0 - dot;
  return t * t;
}

double l1_consistency(std::span<const double> f1, std::span<const double> f2) {
  same_length(f1, f2, "l1_consistency");
  double acc = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) acc += std::abs(f1[i] - f2[i]);
  return acc / static_cast<double>(f1.size());
}

double l2_consistency(std::span<const double> f1, std::span<const double> f2) {
  same_length(f1, f2, "l2_consistency");
  double acc = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) acc += (f1[i] - f2[i]) * (f1[i] - f2[i]);
  return acc / static_cast<double>(f1.size());
}

double consistency(std::span<const double> f1, std::span<const double> f2, Penalty kind) {
  switch (kind) {
    case Penalty::Cos: return cos_consistency(f1, f2);
    case Penalty::L1: return l1_consistency(f1, f2);
    case Penalty::L2: return l2_consistency(f1, f2);
    case Penalty::None: same_length(f1, f2, "consistency"); return 0.0;
  }
  return 0.0;
}

double weighted_ce(double p, int y, const ClassWeights& w) {
  if (y != 0 && y != 1) throw ContractError("weighted_ce: label must be 0 or 1");
  const double q = std::clamp(p, ndgrad::kProbClamp, 1.0 - ndgrad::kProbClamp);
  return y == 1 ? -w.fake * std::log(q) : -w.real * std::log(1.0 - q);
}

double batch_ce(std::span<const double> p1, std::span<const double> p2, std::span<const int> labels,
                const ClassWeights& w) {
  if (p1.size() != p2.size() || p1.size() != labels.size()) {
    throw ShapeError("batch_ce: view and label counts differ");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < p1.size(); ++n) {
    total += weighted_ce(p1[n], labels[n], w) + weighted_ce(p2[n], labels[n], w);
  }
  return total;
}

}  // namespace corefd::losses
