// SPDX-License-Identifier: Apache-2.0
// Seeded generator used for init, droppath, shuffling and augmentation.
//
// Draws are derived from std::mt19937_64 output with hand-written
// transforms, so sequences do not depend on the standard library's
// distribution implementations.
#pragma once

#include <cstdint>
#include <random>

namespace vigunet {

class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  /// Number of 64-bit words consumed so far.
  std::uint64_t position() const noexcept { return position_; }
  static constexpr const char *algorithm() { return "mt19937_64"; }

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal();

  /// Child generator with an independent, reproducible stream.
  Rng split() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ULL); }

private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
};

} // namespace vigunet
