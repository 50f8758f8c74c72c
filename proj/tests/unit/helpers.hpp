#pragma once

#include <functional>
#include <vector>

#include "corefd/gradcheck.hpp"
#include "corefd/graph.hpp"
#include "corefd/rng.hpp"

namespace testing {

using corefd::RngStream;
using corefd::ndgrad::Dims;
using corefd::ndgrad::Graph;
using corefd::ndgrad::NodeId;
using corefd::ndgrad::Tensor;

inline Tensor random_tensor(const Dims& dims, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(dims);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

using Builder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

// Projects a node onto a fixed random direction so any output shape reduces to a scalar.
inline NodeId project(Graph& g, NodeId out, std::uint64_t seed = 99) {
  const Tensor& v = g.value(out);
  if (v.size() == 1) return g.sum(out);
  RngStream rng(seed);
  return g.sum(g.mul(out, g.constant(random_tensor(v.dims(), rng))));
}

// Max relative error between backward() and central differences for every input.
inline double grad_error(std::vector<Tensor>& inputs, const Builder& build, double step = 1e-4) {
  std::vector<Tensor*> ptrs;
  for (Tensor& t : inputs) {
    t.zero_grad();
    ptrs.push_back(&t);
  }
  {
    Graph g;
    std::vector<NodeId> ids;
    for (Tensor& t : inputs) ids.push_back(g.parameter(t));
    g.backward(project(g, build(g, ids)));
  }
  std::vector<Tensor> analytic;
  for (Tensor& t : inputs) analytic.emplace_back(t.dims(), std::vector<double>(t.grad().begin(), t.grad().end()));
  const auto f = [&] {
    Graph g;
    std::vector<NodeId> ids;
    for (Tensor& t : inputs) ids.push_back(g.constant(t));
    return g.value(project(g, build(g, ids))).item();
  };
  const std::vector<Tensor> numeric = corefd::ndgrad::finite_diff_grad(f, ptrs, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    worst = std::max(worst, corefd::ndgrad::max_relative_error(analytic[i].data(), numeric[i].data()));
  }
  return worst;
}

}  // namespace testing
