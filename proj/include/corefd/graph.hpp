#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "corefd/tensor.hpp"

namespace corefd::ndgrad {

/// Rows with Euclidean norm at or below this are rejected by l2_normalize.
inline constexpr double kEpsNorm = 1e-12;
/// Variance floor of instance_norm.
inline constexpr double kNormEps = 1e-5;
/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before taking logs.
inline constexpr double kProbClamp = 1e-12;

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class OpKind {
  Constant,
  Parameter,
  Conv2d,
  DepthwiseConv2d,
  PointwiseConv2d,
  Dense,
  Relu,
  AvgPool2,
  GlobalAvgPool,
  InstanceNorm,
  Softmax,
  L2Normalize,
  Add,
  Sub,
  Mul,
  Affine,
  Sum,
  Square,
  Abs,
  RowDot,
  Column,
  Rows,
  WeightedBce,
};

const char* op_name(OpKind kind);

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order and backward() is a single reverse sweep. Parameter
/// leaves hold a pointer to caller-owned tensors; backward() accumulates into
/// their grad() buffers. The graph must not outlive those tensors.
///
/// All kernels are single-threaded with a fixed reduction order, so a given
/// sequence of calls is bitwise reproducible.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  NodeId constant(Tensor value);
  NodeId parameter(Tensor& param);

  // [B,C,H,W] x [O,C,kh,kw] + [O] -> [B,O,H',W'], zero padding.
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, int pad);
  // [B,C,H,W] x [C,kh,kw] -> [B,C,H',W'], stride 1, no bias.
  NodeId depthwise_conv2d(NodeId input, NodeId kernel, int pad);
  // [B,C,H,W] x [O,C] + [O] -> [B,O,H,W].
  NodeId pointwise_conv2d(NodeId input, NodeId weight, NodeId bias);
  // depthwise (pad = kh/2) followed by pointwise; spatial size preserved.
  NodeId separable_conv2d(NodeId input, NodeId depthwise, NodeId pointwise, NodeId bias);
  // [B,n] x [m,n] + [m] -> [B,m].
  NodeId dense(NodeId input, NodeId weight, NodeId bias);

  NodeId relu(NodeId x);
  NodeId avg_pool2(NodeId x);
  NodeId global_avg_pool(NodeId x);
  // Per-sample, per-channel spatial standardization (x - mean) / sqrt(var + eps), no affine.
  NodeId instance_norm(NodeId x, double eps = kNormEps);
  NodeId softmax(NodeId x);
  NodeId l2_normalize(NodeId x, double eps_norm = kEpsNorm);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor) { return affine(x, factor, 0.0); }
  // factor * x + shift, elementwise.
  NodeId affine(NodeId x, double factor, double shift);
  NodeId sum(NodeId x);
  NodeId square(NodeId x);
  NodeId abs(NodeId x);
  // [N,d] . [N,d] -> [N]
  NodeId row_dot(NodeId a, NodeId b);
  // [B,k] -> [B], column j.
  NodeId column(NodeId x, std::size_t j);
  // Leading-axis slice [begin, begin + count).
  NodeId rows(NodeId x, std::size_t begin, std::size_t count);
  // Σ_i -w_{y_i} [y_i log p_i + (1 - y_i) log(1 - p_i)] over clamped p; returns a scalar.
  NodeId weighted_bce(NodeId probs, std::span<const int> labels, double w_real, double w_fake);

  const Tensor& value(NodeId id) const;
  /// Gradient of the last backward() loss w.r.t. this node (empty if unreached).
  std::span<const double> grad(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::span<const NodeId> inputs(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a single-element loss node. Throws ContractError otherwise.
  void backward(NodeId loss);

  /// Number of nodes the last backward() visited.
  std::size_t visited_count() const { return visited_; }

 private:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<NodeId> inputs;
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    Tensor* param = nullptr;
    BackwardFn backward;
  };

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn fn);
  const Node& node(NodeId id) const;
  // Lazily zero-filled gradient buffer; empty span when the node needs none.
  std::span<double> grad_buffer(NodeId id);
  bool needs_grad(NodeId id) const { return nodes_[id.index].needs_grad; }

  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

}  // namespace corefd::ndgrad
