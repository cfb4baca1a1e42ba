#pragma once

#include <cstdint>
#include <random>

namespace mdil {

/// Deterministic random source.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Real-valued draws are derived here rather than through the
/// <random> distributions, whose algorithms are implementation-defined, so a
/// given seed yields the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Independent substream keyed by (seed, stream); used for per-sample and
  /// per-step randomness so draws do not depend on evaluation order.
  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), rejection-sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller (one value per call, the pair's cosine).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// SplitMix64 finalizer; spreads nearby seeds over the state space.
  static std::uint64_t mix(std::uint64_t z);

 private:
  std::mt19937_64 engine_;
};

}  // namespace mdil
