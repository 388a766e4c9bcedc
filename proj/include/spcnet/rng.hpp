#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace spcnet {

/// xoshiro256** seeded through a splitmix64 expansion of a 64-bit seed.
/// All derived draws use integer arithmetic or exact 53-bit scaling, so the
/// stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();

 private:
  std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

/// Derives an independent seed for a named sub-stream (FNV-1a of the tag
/// folded into the base seed).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace spcnet
