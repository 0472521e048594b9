#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rangemap {

/// Deterministic random stream.
///
/// All randomness in the pipeline flows through this wrapper so that a run is
/// fully reproducible from one config seed. The std distribution objects are
/// deliberately not used: their output is implementation-defined, which would
/// break run-to-run byte identity of artifacts across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_hash_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be > 0. Lemire multiply-shift with
  /// explicit rejection of the biased band.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    std::uint64_t x = engine_();
    unsigned __int128 m =
        static_cast<unsigned __int128>(x) * static_cast<unsigned __int128>(range);
    std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo < range) {
      const std::uint64_t threshold = (0ULL - range) % range;
      while (lo < threshold) {
        x = engine_();
        m = static_cast<unsigned __int128>(x) * static_cast<unsigned __int128>(range);
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::size_t>(m >> 64);
  }

  /// Standard normal via Box-Muller. One value per call, no cached spare, so
  /// the consumed stream length is predictable.
  double normal01() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal01(); }

  /// Normal truncated to [mean - bound, mean + bound] by resampling.
  double truncated_normal(double mean, double sigma, double bound) {
    if (sigma <= 0.0) return mean;
    for (int i = 0; i < 256; ++i) {
      const double x = normal(0.0, sigma);
      if (std::abs(x) <= bound) return mean + x;
    }
    return mean;  // pathological sigma/bound ratio; clamp to the mode
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Child stream seeded from this stream's seed material and a label.
  /// Streams derived with distinct (label, index) pairs are independent of
  /// the order in which they are later consumed.
  Rng substream(std::string_view label, std::uint64_t index = 0) const {
    std::uint64_t h = mix(seed_hash_ ^ 0x9e3779b97f4a7c15ULL);
    for (const char c : label) h = mix(h ^ static_cast<std::uint64_t>(c));
    h = mix(h ^ index);
    return Rng(h);
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_hash_;
};

}  // namespace rangemap
