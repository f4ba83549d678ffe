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

#include <cstdint>
#include <span>
#include <vector>

#include "gradpack/bitio.hpp"
#include "gradpack/gradient.hpp"
#include "gradpack/rng.hpp"

namespace gradpack {

struct BloomParams {
  std::uint64_t m;  ///< bit-array length
  unsigned k;       ///< hash count
};

/// Size a filter for target false-positive rate epsilon at r insertions:
/// m = ceil(r ln(1/eps) / ln^2 2), k = ceil(ln(1/eps) / ln 2).
/// pre: 0 < epsilon < 1, r >= 1.
BloomParams bloom_params(double epsilon, std::uint64_t r);

/// Expected false-positive rate (1 - e^{-kr/m})^k; 0 when r == 0.
double fpr_estimate(unsigned k, std::uint64_t r, std::uint64_t m);

/// Bloom filter over integer keys. The k probes derive from two seeded
/// 64-bit hashes by double hashing with a final avalanche:
/// h_i(x) = mix64(h_a(x) + i * h_b(x)) mod m for i in [0, k).
/// The mix keeps the probes free of arithmetic-progression structure, so the
/// (1 - e^{-kr/m})^k estimate holds even at very small target rates.
/// Writes may run concurrently only if bit-set stores are word-atomic; this
/// implementation is single-threaded and the filter is immutable once built.
class BloomFilter {
 public:
  BloomFilter(std::uint64_t m, unsigned k, std::uint64_t seed_a, std::uint64_t seed_b);

  void insert(std::uint64_t key);
  bool contains(std::uint64_t key) const;

  /// The k probe positions of a key, in probe order.
  std::vector<std::uint64_t> positions(std::uint64_t key) const;

  std::uint64_t m() const noexcept { return m_; }
  unsigned k() const noexcept { return k_; }
  std::uint64_t seed_a() const noexcept { return seed_a_; }
  std::uint64_t seed_b() const noexcept { return seed_b_; }
  bool bit(std::uint64_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }

  /// Payload layout: m (u64 LE), k (u16 LE), seed_a (u64 LE), seed_b
  /// (u64 LE), then ceil(m/8) bit-array bytes, LSB-first.
  std::vector<std::uint8_t> serialize() const;
  static BloomFilter deserialize(ByteReader& r);

 private:
  std::uint64_t probe(std::uint64_t key, unsigned i) const;
  std::uint64_t stride(std::uint64_t key) const;

  std::uint64_t m_;
  unsigned k_;
  std::uint64_t seed_a_;
  std::uint64_t seed_b_;
  std::vector<std::uint64_t> words_;
};

/// Build a filter sized by bloom_params and insert every support index.
BloomFilter build_filter(std::span<const std::uint32_t> support, double epsilon,
                         std::uint64_t seed_a, std::uint64_t seed_b);

/// Positive set P: every index in [0, d) the filter reports as a member.
/// Sorted ascending; a superset of the inserted support.
std::vector<std::uint32_t> positive_scan(const BloomFilter& f, Index d);

/// Naive pointer-scan reconstruction: walk [0, d), assign the next value of V
/// to each positive index. A false positive before the last true positive
/// misaligns every later value; once V is exhausted the remaining positives
/// get value 0. Kept as a documented failure mode, not a recommended policy.
SparseGradient naive_reconstruct(const BloomFilter& f, const Vector& v, Index d);

/// Uniform random r-subset of P, ascending. pre: r <= |P|.
std::vector<std::uint32_t> p1_select(std::span<const std::uint32_t> positives, Index r,
                                     CounterRng& rng);

/// One conflict set per distinct probe position hit when re-hashing P.
struct ConflictSet {
  std::uint64_t bit;                   ///< probe position in [0, m)
  std::vector<std::uint32_t> members;  ///< ascending, unique
};

/// Conflict sets of P against the filter, sorted by (size asc, bit asc).
/// A singleton set pins a true positive: every false positive shares each of
/// its probe positions with at least one inserted key.
std::vector<ConflictSet> conflict_sets(std::span<const std::uint32_t> positives,
                                       const BloomFilter& f);

/// Conflict-set selection. Visits sets smallest-first, repeatedly: a
/// singleton contributes its member; larger sets first drop members already
/// selected, then contribute one member drawn without replacement within the
/// pass. Passes repeat until r members are selected. Ascending result.
/// pre: r <= |P|.
std::vector<std::uint32_t> p2_select(std::span<const std::uint32_t> positives,
                                     const BloomFilter& f, Index r, CounterRng& rng);

enum class PdVariant : std::uint8_t { Leftmost = 0, Middle = 1, Rightmost = 2 };

/// Deterministic contiguous r-slice of sorted P. pre: r <= |P|.
std::vector<std::uint32_t> pd_select(std::span<const std::uint32_t> positives, Index r,
                                     PdVariant variant);

}  // namespace gradpack
