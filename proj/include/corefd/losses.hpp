#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "corefd/graph.hpp"

namespace corefd::losses {

using ndgrad::Graph;
using ndgrad::NodeId;

enum class Penalty { Cos, L1, L2, None };

std::string_view to_string(Penalty p);
/// Accepts cos, l1, l2, none.
Penalty parse_penalty(std::string_view name);

struct ClassWeights {
  double real = 4.0;  // label 0
  double fake = 1.0;  // label 1
};

struct LossConfig {
  Penalty penalty = Penalty::Cos;
  double alpha = 1.0;
  ClassWeights weights;

  /// Throws ConfigError unless alpha >= 0 and both class weights > 0.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Graph form. F1/F2 are [N, d] raw representations.

/// Per-pair penalty, shape [N]. Cosine: (1 - f̃1·f̃2)²; L1/L2: mean |Δ| / mean Δ² over d.
NodeId pair_consistency(Graph& g, NodeId f1, NodeId f2, Penalty kind);
/// Σ_n penalty(f1_n, f2_n), scalar.
NodeId batch_consistency(Graph& g, NodeId f1, NodeId f2, Penalty kind);
/// Σ_n [ce(p1_n) + ce(p2_n)] over both views, scalar.
NodeId batch_ce(Graph& g, NodeId p1, NodeId p2, std::span<const int> labels, const ClassWeights& w);
/// ce + α·c.
NodeId total_loss(Graph& g, NodeId ce, NodeId c, double alpha);

// ---------------------------------------------------------------------------
// Plain-value form.

/// (1 - f̃1·f̃2)²; throws DegenerateVectorError if either norm is <= 1e-12.
double cos_consistency(std::span<const double> f1, std::span<const double> f2);
double l1_consistency(std::span<const double> f1, std::span<const double> f2);
double l2_consistency(std::span<const double> f1, std::span<const double> f2);
double consistency(std::span<const double> f1, std::span<const double> f2, Penalty kind);

/// -w_y [y log p + (1-y) log(1-p)] with p clamped to [1e-12, 1-1e-12].
double weighted_ce(double p, int y, const ClassWeights& w);
double batch_ce(std::span<const double> p1, std::span<const double> p2, std::span<const int> labels,
                const ClassWeights& w);
inline double total_loss(double ce, double c, double alpha) { return ce + alpha * c; }

}  // namespace corefd::losses
