#pragma once

#include <cstdint>
#include <string_view>

namespace corefd {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Sub-seed for a named purpose ("shuffle", "init", ...) under a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

/// Counter-based random stream.
///
/// The stream is fully determined by its key; the i-th draw is mix64(key + i·φ).
/// Keys are built from an address (seed, epoch, sample index, view index), so
/// any sample's augmentation can be reproduced without replaying other draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key = 0) : key_(mix64(key)) {}
  RngStream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index, std::uint64_t view);

  std::uint64_t key() const { return key_; }
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// exp(U[log lo, log hi]).
  double log_uniform(double lo, double hi);
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal();

  /// Independent child stream; does not advance this one.
  RngStream fork(std::uint64_t tag) const;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace corefd
