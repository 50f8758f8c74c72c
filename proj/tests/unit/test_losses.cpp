#include <cmath>

#include "corefd/errors.hpp"
#include "corefd/losses.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace corefd;
using namespace corefd::losses;
using ndgrad::Tensor;
using testing::random_tensor;

namespace {

std::vector<double> random_vec(std::size_t n, RngStream& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// (1 - cos)^2 written out from dot product and norms.
double cos_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double t = 1.0 - dot / std::sqrt(na * nb);
  return t * t;
}

}  // namespace

TEST_CASE("cos_consistency hand values") {
  const std::vector<double> x{1.0, 0.0}, y{0.0, 2.0}, mx{-3.0, 0.0};
  CHECK(cos_consistency(x, x) == doctest::Approx(0.0));
  CHECK(cos_consistency(x, y) == doctest::Approx(1.0));
  CHECK(cos_consistency(x, mx) == doctest::Approx(4.0));
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(cos_consistency(x, zero), DegenerateVectorError);
  const std::vector<double> short_v{1.0};
  CHECK_THROWS_AS(cos_consistency(x, short_v), ShapeError);
}

TEST_CASE("cos_consistency properties on random pairs") {
  RngStream rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_vec(8, rng), b = random_vec(8, rng);
    const double c = cos_consistency(a, b);
    REQUIRE(c >= 0.0);
    REQUIRE(c <= 4.0);
    CHECK(c == doctest::Approx(cos_oracle(a, b)).epsilon(1e-12));
    CHECK(c == doctest::Approx(cos_consistency(b, a)).epsilon(1e-12));
    auto scaled = a;
    const double k = rng.uniform(0.01, 100.0);
    for (double& v : scaled) v *= k;
    CHECK(std::abs(cos_consistency(scaled, b) - c) <= 1e-12);
    CHECK(cos_consistency(a, scaled) < 1e-24);
  }
}

TEST_CASE("graph penalties agree with plain values") {
  RngStream rng(12);
  const Tensor f1 = random_tensor({4, 6}, rng), f2 = random_tensor({4, 6}, rng);
  for (const Penalty p : {Penalty::Cos, Penalty::L1, Penalty::L2, Penalty::None}) {
    CAPTURE(to_string(p));
    Graph g;
    const NodeId per = pair_consistency(g, g.constant(f1), g.constant(f2), p);
    double total = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      const double want = consistency(f1.data().subspan(n * 6, 6), f2.data().subspan(n * 6, 6), p);
      CHECK(g.value(per)[n] == doctest::Approx(want).epsilon(1e-12));
      total += want;
    }
    CHECK(g.value(batch_consistency(g, g.constant(f1), g.constant(f2), p)).item() ==
          doctest::Approx(total).epsilon(1e-12));
  }
}

TEST_CASE("l1 and l2 penalties are mean absolute and mean squared differences") {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{2.0, 0.0, 3.0};
  CHECK(l1_consistency(a, b) == doctest::Approx(1.0));
  CHECK(l2_consistency(a, b) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("penalty gradients pass a finite-difference check") {
  RngStream rng(13);
  for (const Penalty p : {Penalty::Cos, Penalty::L2}) {
    std::vector<Tensor> in{random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)};
    CHECK(testing::grad_error(in, [p](Graph& g, const std::vector<NodeId>& x) {
            return batch_consistency(g, x[0], x[1], p);
          }) < 1e-4);
  }
}

TEST_CASE("cosine penalty gradient is orthogonal to its input") {
  RngStream rng(14);
  for (int i = 0; i < 200; ++i) {
    Tensor f1 = random_tensor({1, 16}, rng), f2 = random_tensor({1, 16}, rng);
    Graph g;
    g.backward(batch_consistency(g, g.parameter(f1), g.parameter(f2), Penalty::Cos));
    double dot = 0.0, ng = 0.0, nf = 0.0;
    for (std::size_t k = 0; k < 16; ++k) {
      dot += f1.grad()[k] * f1[k];
      ng += f1.grad()[k] * f1.grad()[k];
      nf += f1[k] * f1[k];
    }
    CHECK(std::abs(dot) <= 1e-9 * std::sqrt(ng) * std::sqrt(nf) + 1e-300);
  }
}

TEST_CASE("weighted cross entropy") {
  const ClassWeights w{4.0, 1.0};
  CHECK(weighted_ce(0.25, 1, w) == doctest::Approx(-std::log(0.25)));
  CHECK(weighted_ce(0.25, 0, w) == doctest::Approx(-4.0 * std::log(0.75)));
  CHECK(std::isfinite(weighted_ce(0.0, 1, w)));
  CHECK(weighted_ce(0.0, 1, w) == doctest::Approx(-std::log(1e-12)));

  const std::vector<double> p1{0.2, 0.9}, p2{0.4, 0.6};
  const std::vector<int> y{0, 1};
  const double want = weighted_ce(0.2, 0, w) + weighted_ce(0.9, 1, w) + weighted_ce(0.4, 0, w) + weighted_ce(0.6, 1, w);
  CHECK(batch_ce(p1, p2, y, w) == doctest::Approx(want).epsilon(1e-14));
  Graph g;
  const NodeId ce = losses::batch_ce(g, g.constant(Tensor({2}, p1)), g.constant(Tensor({2}, p2)), y, w);
  CHECK(g.value(ce).item() == doctest::Approx(want).epsilon(1e-14));
  CHECK(total_loss(2.0, 3.0, 0.5) == 3.5);
}

TEST_CASE("loss config validation and parsing") {
  LossConfig c;
  c.alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.alpha = 0.0;
  c.weights.real = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_penalty("l1") == Penalty::L1);
  CHECK_THROWS_AS(parse_penalty("l3"), ConfigError);
}
