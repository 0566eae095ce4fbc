#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace circsel {

inline constexpr std::uint64_t fnv1a64(std::string_view s,
                                       std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random stream, domain-separated by a label.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distributions are implemented here rather than taken from
/// <random> because the standard distributions are implementation-defined
/// and would break cross-platform trace equality.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label)
      : seed_(seed), engine_(splitmix64(seed ^ splitmix64(fnv1a64(label)))) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return p > 0.0 && uniform01() < p; }

  double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

  // Box-Muller; the second variate is discarded to keep the stream stateless.
  double normal(double mean, double stddev) {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    constexpr double kTwoPi = 6.283185307179586476925;
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double lognormal(double median, double sigma) {
    return median * std::exp(normal(0.0, sigma));
  }

  /// Child stream with its own label, independent of this stream's position.
  RngStream derive(std::string_view label) const {
    return RngStream(splitmix64(seed_ ^ fnv1a64(label)), label);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace circsel
