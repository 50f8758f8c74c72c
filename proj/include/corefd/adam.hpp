#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "corefd/tensor.hpp"

namespace corefd::ndgrad {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Optimizer state for a fixed, ordered list of parameters.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Tensor* const> params);
};

/// One bias-corrected Adam update: t += 1, then
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Empty moment buffers are initialized to zero on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

/// Convenience overload reading each parameter's own grad() buffer.
void adam_step(std::span<Tensor* const> params, AdamState& state);

}  // namespace corefd::ndgrad
