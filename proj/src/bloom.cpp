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

#include "gradpack/bloom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace gradpack {

BloomParams bloom_params(double epsilon, std::uint64_t r) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("bloom_params: epsilon must be in (0, 1)");
  if (r < 1) throw Error("bloom_params: r must be >= 1");
  const double ln2 = std::numbers::ln2;
  const double lninv = std::log(1.0 / epsilon);
  BloomParams p;
  p.m = static_cast<std::uint64_t>(std::ceil(static_cast<double>(r) * lninv / (ln2 * ln2)));
  p.k = static_cast<unsigned>(std::ceil(lninv / ln2));
  return p;
}

double fpr_estimate(unsigned k, std::uint64_t r, std::uint64_t m) {
  if (m < 1) throw Error("fpr_estimate: m must be >= 1");
  if (k < 1) throw Error("fpr_estimate: k must be >= 1");
  if (r == 0) return 0.0;
  const double x = -static_cast<double>(k) * static_cast<double>(r) / static_cast<double>(m);
  return std::pow(1.0 - std::exp(x), static_cast<double>(k));
}

BloomFilter::BloomFilter(std::uint64_t m, unsigned k, std::uint64_t seed_a, std::uint64_t seed_b)
    : m_(m), k_(k), seed_a_(seed_a), seed_b_(seed_b), words_((m + 63) / 64, 0) {
  if (m < 1) throw Error("bloom filter: m must be >= 1");
  if (k < 1) throw Error("bloom filter: k must be >= 1");
}

std::uint64_t BloomFilter::stride(std::uint64_t key) const { return hash64(key, seed_b_); }

// The double-hash combination runs in 64-bit space and is avalanched before
// the reduction mod m. Reducing a + i*b directly would make every probe set
// an arithmetic progression, and two keys sharing (a mod m, b mod m) would
// collide on all k probes — a false-positive floor near r/(m(m-1)) that
// breaks deep targets like 1e-9. The mix removes that structure.
std::uint64_t BloomFilter::probe(std::uint64_t key, unsigned i) const {
  return mix64(hash64(key, seed_a_) + static_cast<std::uint64_t>(i) * stride(key)) % m_;
}

void BloomFilter::insert(std::uint64_t key) {
  const std::uint64_t a = hash64(key, seed_a_);
  const std::uint64_t b = stride(key);
  std::uint64_t x = a;
  for (unsigned i = 0; i < k_; ++i, x += b) {
    const std::uint64_t pos = mix64(x) % m_;
    words_[pos / 64] |= 1ULL << (pos % 64);
  }
}

bool BloomFilter::contains(std::uint64_t key) const {
  const std::uint64_t a = hash64(key, seed_a_);
  const std::uint64_t b = stride(key);
  std::uint64_t x = a;
  for (unsigned i = 0; i < k_; ++i, x += b) {
    if (!bit(mix64(x) % m_)) return false;
  }
  return true;
}

std::vector<std::uint64_t> BloomFilter::positions(std::uint64_t key) const {
  std::vector<std::uint64_t> out(k_);
  for (unsigned i = 0; i < k_; ++i) out[i] = probe(key, i);
  return out;
}

std::vector<std::uint8_t> BloomFilter::serialize() const {
  ByteWriter w;
  w.put_u64(m_);
  w.put_u16(static_cast<std::uint16_t>(k_));
  w.put_u64(seed_a_);
  w.put_u64(seed_b_);
  const std::uint64_t nbytes = (m_ + 7) / 8;
  for (std::uint64_t i = 0; i < nbytes; ++i)
    w.put_u8(static_cast<std::uint8_t>(words_[i / 8] >> (8 * (i % 8))));
  return std::move(w).take();
}

BloomFilter BloomFilter::deserialize(ByteReader& r) {
  const std::uint64_t m = r.get_u64();
  if (m < 1) throw CorruptPayloadError("bloom payload: m must be >= 1");
  const unsigned k = r.get_u16();
  if (k < 1) throw CorruptPayloadError("bloom payload: k must be >= 1");
  const std::uint64_t seed_a = r.get_u64();
  const std::uint64_t seed_b = r.get_u64();
  BloomFilter f(m, k, seed_a, seed_b);
  const std::uint64_t nbytes = (m + 7) / 8;
  const auto bits = r.get_bytes(nbytes);
  for (std::uint64_t i = 0; i < nbytes; ++i)
    f.words_[i / 8] |= static_cast<std::uint64_t>(bits[i]) << (8 * (i % 8));
  const std::uint64_t tail = m % 64;
  if (tail != 0 && (f.words_.back() >> tail) != 0)
    throw CorruptPayloadError("bloom payload: bits set past m");
  return f;
}

BloomFilter build_filter(std::span<const std::uint32_t> support, double epsilon,
                         std::uint64_t seed_a, std::uint64_t seed_b) {
  if (support.empty()) throw Error("build_filter: empty support");
  const BloomParams p = bloom_params(epsilon, support.size());
  BloomFilter f(p.m, p.k, seed_a, seed_b);
  for (const std::uint32_t i : support) f.insert(i);
  return f;
}

std::vector<std::uint32_t> positive_scan(const BloomFilter& f, Index d) {
  std::vector<std::uint32_t> out;
  for (Index i = 0; i < d; ++i)
    if (f.contains(static_cast<std::uint64_t>(i))) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

SparseGradient naive_reconstruct(const BloomFilter& f, const Vector& v, Index d) {
  SparseGradient out;
  out.dim = d;
  out.support = positive_scan(f, d);
  out.values = Vector::Zero(static_cast<Index>(out.support.size()));
  const Index n = std::min<Index>(v.size(), out.count());
  out.values.head(n) = v.head(n);
  return out;
}

std::vector<std::uint32_t> p1_select(std::span<const std::uint32_t> positives, Index r,
                                     CounterRng& rng) {
  const Index n = static_cast<Index>(positives.size());
  if (r > n) throw Error("p1_select: r exceeds |P|");
  // Partial Fisher-Yates over a copy; first r slots are the sample.
  std::vector<std::uint32_t> pool(positives.begin(), positives.end());
  for (Index i = 0; i < r; ++i) {
    const std::uint64_t j = static_cast<std::uint64_t>(i) +
                            rng.below(static_cast<std::uint64_t>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(r));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<ConflictSet> conflict_sets(std::span<const std::uint32_t> positives,
                                       const BloomFilter& f) {
  std::map<std::uint64_t, std::vector<std::uint32_t>> by_bit;
  for (const std::uint32_t x : positives) {
    for (const std::uint64_t pos : f.positions(x)) {
      auto& members = by_bit[pos];
      if (members.empty() || members.back() != x) members.push_back(x);
    }
  }
  std::vector<ConflictSet> sets;
  sets.reserve(by_bit.size());
  for (auto& [bit, members] : by_bit) sets.push_back({bit, std::move(members)});
  std::stable_sort(sets.begin(), sets.end(), [](const ConflictSet& a, const ConflictSet& b) {
    if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
    return a.bit < b.bit;
  });
  return sets;
}

std::vector<std::uint32_t> p2_select(std::span<const std::uint32_t> positives,
                                     const BloomFilter& f, Index r, CounterRng& rng) {
  if (r > static_cast<Index>(positives.size())) throw Error("p2_select: r exceeds |P|");
  std::vector<ConflictSet> sets = conflict_sets(positives, f);
  std::vector<bool> retired(sets.size(), false);
  std::vector<std::uint32_t> selected;
  selected.reserve(static_cast<std::size_t>(r));
  std::vector<bool> in_selected_lookup;  // keyed by position in `positives`
  // Membership test via sorted P: positives is ascending and unique.
  const auto selected_contains = [&](std::uint32_t x) {
    const auto it = std::lower_bound(positives.begin(), positives.end(), x);
    return in_selected_lookup[static_cast<std::size_t>(it - positives.begin())];
  };
  const auto select = [&](std::uint32_t x) {
    const auto it = std::lower_bound(positives.begin(), positives.end(), x);
    const auto pos = static_cast<std::size_t>(it - positives.begin());
    if (!in_selected_lookup[pos]) {
      in_selected_lookup[pos] = true;
      selected.push_back(x);
    }
  };
  in_selected_lookup.assign(positives.size(), false);

  while (static_cast<Index>(selected.size()) < r) {
    for (std::size_t s = 0; s < sets.size() && static_cast<Index>(selected.size()) < r; ++s) {
      if (retired[s]) continue;
      auto& members = sets[s].members;
      if (members.size() == 1) {
        select(members.front());
        retired[s] = true;
        continue;
      }
      std::erase_if(members, selected_contains);
      if (members.empty()) {
        retired[s] = true;
        continue;
      }
      if (members.size() == 1) {
        select(members.front());
        retired[s] = true;
        continue;
      }
      select(members[rng.below(members.size())]);
    }
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::vector<std::uint32_t> pd_select(std::span<const std::uint32_t> positives, Index r,
                                     PdVariant variant) {
  const Index n = static_cast<Index>(positives.size());
  if (r > n) throw Error("pd_select: r exceeds |P|");
  Index begin = 0;
  switch (variant) {
    case PdVariant::Leftmost: begin = 0; break;
    case PdVariant::Middle: begin = (n - r) / 2; break;
    case PdVariant::Rightmost: begin = n - r; break;
    default: throw Error("pd_select: unknown variant");
  }
  return std::vector<std::uint32_t>(positives.begin() + begin, positives.begin() + begin + r);
}

}  // namespace gradpack
