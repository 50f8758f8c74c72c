#include "corefd/rng.hpp"

#include <cmath>
#include <numbers>

namespace corefd {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char ch : purpose) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return mix64(mix64(seed) ^ h);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index, std::uint64_t view) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ epoch);
  k = mix64(k ^ (index * 0xD1B54A32D192ED03ULL));
  k = mix64(k ^ (view + 0x632BE59BD9B4E019ULL));
  key_ = k;
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::log_uniform(double lo, double hi) {
  return std::exp(uniform(std::log(lo), std::log(hi)));
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return lo;
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(uniform() * static_cast<double>(span)) %
                                        span);
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::fork(std::uint64_t tag) const {
  RngStream child;
  child.key_ = mix64(key_ ^ mix64(tag + 0xA0761D6478BD642FULL));
  return child;
}

}  // namespace corefd
