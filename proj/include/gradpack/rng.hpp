// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "gradpack/errors.hpp"

namespace gradpack {

/// SplitMix64 finalizer: a bijective 64-bit mixer with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded 64-bit hash of a key. Used by the Bloom filter's double-hashing
/// scheme and for deriving independent sub-streams from one master seed.
constexpr std::uint64_t hash64(std::uint64_t x, std::uint64_t seed) noexcept {
  return mix64(x ^ (seed + 0x9E3779B97F4A7C15ULL));
}

/// Counter-based generator (SplitMix64). The state is a seed plus a fixed
/// increment, so streams are reproducible across platforms and never read
/// ambient entropy. Callers own the seed.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Unbiased draw from [0, n) by rejection. pre: n >= 1.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("CounterRng::below: n must be positive");
    const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
    const std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() - rem;
    std::uint64_t r = next();
    while (r > bound) r = next();
    return r % n;
  }

  /// Uniform draw from [0, 1) with 53 random bits.
  double unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal deviate via Box-Muller; consumes two draws.
  double normal() noexcept {
    const double u1 = 1.0 - unit();  // (0, 1], keeps the log finite
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace gradpack
