#include <cmath>
#include <numeric>

#include "corefd/adam.hpp"
#include "corefd/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace corefd;
using namespace corefd::ndgrad;
using testing::grad_error;
using testing::random_tensor;

namespace {

// out[b,o,i,j] = bias[o] + sum_{c,u,v} k[o,c,u,v] * x[b,c,i*s+u-p,j*s+v-p]
Tensor naive_conv(const Tensor& x, const Tensor& k, const Tensor& bias, int s, int p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t OH = (H + 2 * p - kh) / s + 1, OW = (W + 2 * p - kw) / s + 1;
  Tensor out({B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = bias[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * s + u) - p, q = static_cast<long>(j * s + v) - p;
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += k[((o * C + c) * kh + u) * kw + v] * x[((b * C + c) * H + r) * W + q];
              }
          out[((b * O + o) * OH + i) * OW + j] = acc;
        }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.dims() == b.dims());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("tensor construction and shape errors") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.reshaped({3, 2}).dims() == Dims{3, 2});
  CHECK(Tensor::scalar(2.0).item() == 2.0);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK_FALSE(t.has_grad());
  t.grad()[0] = 1.0;
  CHECK(t.has_grad());
  t.zero_grad();
  CHECK(t.grad()[0] == 0.0);
}

TEST_CASE("conv2d matches the naive loop") {
  RngStream rng(1);
  for (const auto& [s, p] : {std::pair{1, 1}, std::pair{1, 0}, std::pair{2, 1}, std::pair{2, 0}}) {
    const Tensor x = random_tensor({2, 3, 7, 6}, rng);
    const Tensor k = random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = random_tensor({4}, rng);
    Graph g;
    const NodeId out = g.conv2d(g.constant(x), g.constant(k), g.constant(b), s, p);
    CHECK(max_abs_diff(g.value(out), naive_conv(x, k, b, s, p)) < 1e-12);
  }
}

TEST_CASE("depthwise and pointwise convs match the dense conv they factor") {
  RngStream rng(2);
  const Tensor x = random_tensor({2, 3, 6, 5}, rng);
  const Tensor dw = random_tensor({3, 3, 3}, rng);
  const Tensor pw = random_tensor({4, 3}, rng);
  const Tensor b = random_tensor({4}, rng);

  Tensor dense_dw({3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 9; ++t) dense_dw[(c * 3 + c) * 9 + t] = dw[c * 9 + t];
  Tensor dense_pw({4, 3, 1, 1}, std::vector<double>(pw.data().begin(), pw.data().end()));

  Graph g;
  const NodeId d = g.depthwise_conv2d(g.constant(x), g.constant(dw), 1);
  CHECK(max_abs_diff(g.value(d), naive_conv(x, dense_dw, Tensor({3}), 1, 1)) < 1e-12);
  const NodeId p = g.pointwise_conv2d(g.constant(x), g.constant(pw), g.constant(b));
  CHECK(max_abs_diff(g.value(p), naive_conv(x, dense_pw, b, 1, 0)) < 1e-12);
  const NodeId sep = g.separable_conv2d(g.constant(x), g.constant(dw), g.constant(pw), g.constant(b));
  CHECK(max_abs_diff(g.value(sep), naive_conv(g.value(d), dense_pw, b, 1, 0)) < 1e-12);
}

TEST_CASE("dense, pooling and softmax match hand loops") {
  RngStream rng(3);
  const Tensor x = random_tensor({3, 5}, rng);
  const Tensor w = random_tensor({2, 5}, rng);
  const Tensor b = random_tensor({2}, rng);
  Graph g;
  const Tensor& y = g.value(g.dense(g.constant(x), g.constant(w), g.constant(b)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < 5; ++k) acc += w[o * 5 + k] * x[i * 5 + k];
      CHECK(std::abs(y[i * 2 + o] - acc) < 1e-12);
    }

  const Tensor m = random_tensor({1, 2, 4, 6}, rng);
  const Tensor& pooled = g.value(g.avg_pool2(g.constant(m)));
  CHECK(pooled.dims() == Dims{1, 2, 2, 3});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const auto at = [&](std::size_t r, std::size_t q) { return m[(c * 4 + r) * 6 + q]; };
        const double want = (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1)) / 4;
        CHECK(std::abs(pooled[(c * 2 + i) * 3 + j] - want) < 1e-12);
      }
  CHECK_THROWS_AS(g.avg_pool2(g.constant(Tensor({1, 1, 3, 4}))), ShapeError);

  const Tensor& gap = g.value(g.global_avg_pool(g.constant(m)));
  for (std::size_t c = 0; c < 2; ++c) {
    const double want = std::accumulate(m.data().begin() + c * 24, m.data().begin() + (c + 1) * 24, 0.0) / 24;
    CHECK(std::abs(gap[c] - want) < 1e-12);
  }

  const Tensor& sm = g.value(g.softmax(g.constant(Tensor({1, 2}, {std::log(1.0), std::log(3.0)}))));
  CHECK(sm[1] == doctest::Approx(0.75).epsilon(1e-14));
  const Tensor& big = g.value(g.softmax(g.constant(Tensor({1, 2}, {0.0, 1000.0}))));
  CHECK(std::isfinite(big[0]));
  CHECK(big[1] > 1.0 - 1e-12);
}

TEST_CASE("instance_norm standardizes each plane and keeps zeros at zero") {
  RngStream rng(4);
  const Tensor x = random_tensor({2, 3, 4, 5}, rng, -2.0, 3.0);
  Graph g;
  const Tensor& y = g.value(g.instance_norm(g.constant(x)));
  for (std::size_t plane = 0; plane < 6; ++plane) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < 20; ++p) mean += y[plane * 20 + p];
    mean /= 20;
    for (std::size_t p = 0; p < 20; ++p) sq += (y[plane * 20 + p] - mean) * (y[plane * 20 + p] - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(sq / 20 == doctest::Approx(1.0).epsilon(1e-3));
  }
  const Tensor& z = g.value(g.instance_norm(g.constant(Tensor({1, 2, 3, 3}))));
  for (const double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("l2_normalize rejects degenerate rows") {
  Graph g;
  const NodeId ok = g.l2_normalize(g.constant(Tensor({1, 2}, {3.0, 4.0})));
  CHECK(g.value(ok)[0] == doctest::Approx(0.6));
  CHECK_THROWS_AS(g.l2_normalize(g.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 0.0}))), DegenerateVectorError);
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  RngStream rng(5);
  using testing::Builder;
  struct Case {
    const char* name;
    std::vector<Tensor> inputs;
    Builder build;
  };
  // Values kept away from zero where an op has a kink.
  const auto away = [&](const Dims& d) {
    Tensor t = random_tensor(d, rng, 0.2, 1.0);
    for (double& v : t.data()) v *= rng.bernoulli(0.5) ? 1.0 : -1.0;
    return t;
  };
  std::vector<Case> cases;
  cases.push_back({"conv2d", {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.conv2d(in[0], in[1], in[2], 1, 1); }});
  cases.push_back({"conv2d stride 2", {random_tensor({1, 2, 6, 6}, rng), random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.conv2d(in[0], in[1], in[2], 2, 1); }});
  cases.push_back({"depthwise", {random_tensor({2, 3, 4, 5}, rng), random_tensor({3, 3, 3}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.depthwise_conv2d(in[0], in[1], 1); }});
  cases.push_back({"pointwise", {random_tensor({2, 6, 3, 3}, rng), random_tensor({5, 6}, rng), random_tensor({5}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.pointwise_conv2d(in[0], in[1], in[2]); }});
  cases.push_back({"dense", {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng), random_tensor({2}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.dense(in[0], in[1], in[2]); }});
  cases.push_back({"relu", {away({2, 7})}, [](Graph& g, const std::vector<NodeId>& in) { return g.relu(in[0]); }});
  cases.push_back({"abs", {away({2, 7})}, [](Graph& g, const std::vector<NodeId>& in) { return g.abs(in[0]); }});
  cases.push_back({"avg_pool2", {random_tensor({2, 2, 4, 6}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.avg_pool2(in[0]); }});
  cases.push_back({"global_avg_pool", {random_tensor({2, 3, 3, 3}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.global_avg_pool(in[0]); }});
  cases.push_back({"instance_norm", {random_tensor({2, 2, 3, 4}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.instance_norm(in[0]); }});
  cases.push_back({"softmax", {random_tensor({3, 4}, rng)}, [](Graph& g, const std::vector<NodeId>& in) { return g.softmax(in[0]); }});
  cases.push_back({"l2_normalize", {random_tensor({3, 5}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.l2_normalize(in[0]); }});
  cases.push_back({"add/sub/mul", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.mul(g.add(in[0], in[1]), g.sub(in[0], in[1])); }});
  cases.push_back({"affine/square/sum", {random_tensor({4}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.square(g.affine(in[0], -1.5, 0.25))); }});
  cases.push_back({"row_dot", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.row_dot(in[0], in[1]); }});
  cases.push_back({"column/rows", {random_tensor({4, 3}, rng)},
                   [](Graph& g, const std::vector<NodeId>& in) { return g.column(g.rows(in[0], 1, 2), 2); }});
  cases.push_back({"weighted_bce", {random_tensor({4}, rng, 0.05, 0.95)}, [](Graph& g, const std::vector<NodeId>& in) {
                     const std::vector<int> labels{0, 1, 1, 0};
                     return g.weighted_bce(in[0], labels, 4.0, 1.0);
                   }});
  for (Case& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_error(c.inputs, c.build) < 1e-4);
  }
}

TEST_CASE("weighted_bce equals the hand formula") {
  Graph g;
  const std::vector<int> labels{1, 0};
  const NodeId l = g.weighted_bce(g.constant(Tensor({2}, {0.8, 0.3})), labels, 4.0, 1.0);
  CHECK(g.value(l).item() == doctest::Approx(-std::log(0.8) - 4.0 * std::log(0.7)).epsilon(1e-14));
}

TEST_CASE("backward contract") {
  Tensor p({2}, {1.0, 2.0});
  Graph g;
  const NodeId x = g.parameter(p);
  CHECK_THROWS_AS(g.backward(g.square(x)), ContractError);
  const NodeId loss = g.sum(g.square(x));
  g.backward(loss);
  CHECK(p.grad()[0] == 2.0);
  CHECK(p.grad()[1] == 4.0);

  // relu has zero gradient at exactly zero
  Tensor z({3}, {-1.0, 0.0, 2.0});
  Graph g2;
  g2.backward(g2.sum(g2.relu(g2.parameter(z))));
  CHECK(z.grad()[0] == 0.0);
  CHECK(z.grad()[1] == 0.0);
  CHECK(z.grad()[2] == 1.0);

  // unreached parameters end with zero gradients
  Tensor unused({2}, 5.0);
  Graph g3;
  g3.parameter(unused);
  Tensor q({1}, 3.0);
  g3.backward(g3.sum(g3.parameter(q)));
  CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("repeated evaluation is bitwise identical") {
  RngStream rng(6);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  Tensor b = random_tensor({4}, rng);
  std::vector<double> first;
  for (int rep = 0; rep < 2; ++rep) {
    k.zero_grad();
    Graph g;
    const NodeId out = g.global_avg_pool(g.relu(g.conv2d(g.constant(x), g.parameter(k), g.parameter(b), 1, 1)));
    g.backward(testing::project(g, out));
    std::vector<double> got(k.grad().begin(), k.grad().end());
    if (rep == 0) first = got;
    else CHECK(got == first);
  }
}

TEST_CASE("adam matches the scalar recurrence") {
  RngStream rng(7);
  Tensor theta = random_tensor({5}, rng);
  const Tensor start = theta;
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  const std::vector<const Tensor*> cp{&theta};
  AdamState state(cfg, cp);
  std::vector<double> m(5, 0.0), v(5, 0.0), ref(start.data().begin(), start.data().end());
  for (int t = 1; t <= 20; ++t) {
    std::vector<Tensor> grads{random_tensor({5}, rng)};
    std::vector<Tensor*> params{&theta};
    adam_step(params, grads, state);
    for (std::size_t i = 0; i < 5; ++i) {
      const double gi = grads[0][i];
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(state.step == 20);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(theta[i] - ref[i]) < 1e-12);

  std::vector<Tensor*> params{&theta};
  std::vector<Tensor> wrong{Tensor({4})};
  CHECK_THROWS_AS(adam_step(params, wrong, state), ShapeError);
}

TEST_CASE("first adam step moves each coordinate by about lr") {
  Tensor theta({3}, {1.0, -2.0, 0.5});
  const std::vector<const Tensor*> cp{&theta};
  AdamState state(AdamConfig{}, cp);
  std::vector<Tensor> grads{Tensor({3}, {3.0, -0.1, 1e-3})};
  std::vector<Tensor*> params{&theta};
  adam_step(params, grads, state);
  CHECK(theta[0] == doctest::Approx(1.0 - 2e-4).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(-2.0 + 2e-4).epsilon(1e-6));
}
