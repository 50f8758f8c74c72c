#pragma once

#include <functional>
#include <span>
#include <vector>

#include "corefd/tensor.hpp"

namespace corefd::ndgrad {

/// Central-difference gradient (f(θ+h) - f(θ-h)) / 2h for every coordinate
/// of every tensor in `params`. Each coordinate is restored exactly after probing.
std::vector<Tensor> finite_diff_grad(const std::function<double()>& f, std::span<Tensor* const> params,
                                     double step = 1e-4);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps near-zero
/// gradients from producing meaningless ratios.
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

}  // namespace corefd::ndgrad
