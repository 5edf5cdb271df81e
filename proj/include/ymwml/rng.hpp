#pragma once

#include <cstdint>

namespace ymwml {

/// SplitMix64 generator. One 64-bit word of state, so any implementation of
/// the same recurrence reproduces the same stream bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Stream for a (seed, index) pair, e.g. one shuffle stream per epoch.
  static Rng derive(std::uint64_t seed, std::uint64_t index) {
    Rng mixer(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return Rng(mixer.next_u64());
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace ymwml
