// Seeded random source with deterministic stream forking.
//
// All stochastic code in the library draws from Rng rather than from
// std:: distributions, whose output is implementation-defined. The engine
// (mt19937_64) and every transform here are fully specified, so a seed
// reproduces the same stream on any platform with the same build.
//
// fork(tag) derives an independent child stream from the *root seed* and a
// tag, not from the current engine state. Forking is therefore
// position-independent: the same (seed, tag) always yields the same child.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace prism {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// splitmix64 finalizer; also the seed-mixing function used for
/// per-cell seed derivation in the experiment harness.
inline std::uint64_t mix64(std::uint64_t z) {
  z += kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double low, double high) { return low + (high - low) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Unbiased integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    std::uint64_t r = next_u64();
    while (r < threshold) r = next_u64();
    return r % n;
  }

  /// Standard normal via Box-Muller (cosine branch, two uniforms per call).
  double gaussian() {
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// Independent child stream keyed by (root seed, tag).
  Rng fork(std::uint64_t tag) const { return Rng(mix64(seed_ ^ mix64(tag ^ kGoldenGamma))); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace prism
