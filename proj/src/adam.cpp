#include "corefd/adam.hpp"

#include <cmath>
#include <string>

#include "corefd/errors.hpp"

namespace corefd::ndgrad {

AdamState::AdamState(AdamConfig cfg, std::span<const Tensor* const> params) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor* p : params) {
    m.emplace_back(p->dims());
    v.emplace_back(p->dims());
  }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.v.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->dims());
      state.v.emplace_back(p->dims());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    expect_dims(grads[i], params[i]->dims(), "adam_step gradient");
    expect_dims(state.m[i], params[i]->dims(), "adam_step first moment");
    expect_dims(state.v[i], params[i]->dims(), "adam_step second moment");
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> theta = params[i]->data();
    std::span<const double> g = grads[i].data();
    std::span<double> m = state.m[i].data();
    std::span<double> v = state.v[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      theta[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void adam_step(std::span<Tensor* const> params, AdamState& state) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Tensor* p : params) {
    if (p->has_grad()) {
      grads.emplace_back(p->dims(), std::vector<double>(p->grad().begin(), p->grad().end()));
    } else {
      grads.emplace_back(p->dims());
    }
  }
  adam_step(params, grads, state);
}

}  // namespace corefd::ndgrad
