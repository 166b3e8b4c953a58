#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace soup {

/// Seeded random stream. Child streams are derived from the seed and a
/// label, never from the parent's engine state, so adding a consumer in
/// one subsystem cannot shift the draws seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng derive(std::string_view label, std::uint64_t index = 0) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace soup
