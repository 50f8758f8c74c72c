#include <cmath>
#include <set>

#include "corefd/rng.hpp"
#include "doctest.h"

using corefd::derive_seed;
using corefd::RngStream;

TEST_CASE("streams are pure functions of their address") {
  RngStream a(1, 2, 3, 4), b(1, 2, 3, 4), c(1, 2, 3, 5);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  CHECK(a.draws() == 100);
}

TEST_CASE("derived seeds differ by purpose and by seed") {
  CHECK(derive_seed(1, "shuffle") == derive_seed(1, "shuffle"));
  CHECK(derive_seed(1, "shuffle") != derive_seed(1, "aug"));
  CHECK(derive_seed(1, "shuffle") != derive_seed(2, "shuffle"));
}

TEST_CASE("draw ranges") {
  RngStream rng(9);
  double sum = 0.0;
  std::set<std::int64_t> ints;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    const double l = rng.log_uniform(0.5, 2.0);
    REQUIRE(l >= 0.5);
    REQUIRE(l <= 2.0);
    const auto k = rng.uniform_int(-2, 3);
    REQUIRE(k >= -2);
    REQUIRE(k <= 3);
    ints.insert(k);
  }
  CHECK(std::abs(sum / 20000 - 0.5) < 0.01);
  CHECK(ints.size() == 6);
}

TEST_CASE("normal draws have unit variance") {
  RngStream rng(10);
  double s = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    sq += z * z;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("fork does not advance the parent") {
  RngStream a(3);
  RngStream b(3);
  RngStream child = a.fork(7);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(child.next_u64() != RngStream(3).next_u64());
}
