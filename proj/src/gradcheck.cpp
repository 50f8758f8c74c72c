#include "corefd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "corefd/errors.hpp"

namespace corefd::ndgrad {

std::vector<Tensor> finite_diff_grad(const std::function<double()>& f, std::span<Tensor* const> params,
                                     double step) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Tensor* p : params) {
    Tensor g(p->dims());
    std::span<double> theta = p->data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double up = f();
      theta[i] = saved - step;
      const double down = f();
      theta[i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace corefd::ndgrad
