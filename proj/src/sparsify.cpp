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

#include "gradpack/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace gradpack {

namespace {

void check_r(Index d, Index r) {
  if (d < 1) throw Error("sparsifier: dim must be >= 1");
  if (static_cast<std::uint64_t>(d) > 0xFFFFFFFFULL) throw Error("sparsifier: dim exceeds 32-bit index space");
  if (r < 1 || r > d) throw Error("sparsifier: r out of range [1, d]");
}

}  // namespace

SparseGradient top_r(const Eigen::Ref<const Vector>& g, Index r) {
  check_r(g.size(), r);
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(g.size()));
  std::iota(idx.begin(), idx.end(), 0u);
  const auto larger = [&g](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(g(static_cast<Index>(a)));
    const double mb = std::abs(g(static_cast<Index>(b)));
    if (ma != mb) return ma > mb;
    return a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + (r - 1), idx.end(), larger);
  idx.resize(static_cast<std::size_t>(r));
  std::sort(idx.begin(), idx.end());
  return gather(g, std::move(idx));
}

SparseGradient random_r(const Eigen::Ref<const Vector>& g, Index r, CounterRng& rng) {
  const Index d = g.size();
  check_r(d, r);
  // Floyd's sampling: r distinct indices with r draws.
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(static_cast<std::size_t>(r));
  for (std::uint64_t j = static_cast<std::uint64_t>(d - r); j < static_cast<std::uint64_t>(d); ++j) {
    const std::uint64_t t = rng.below(j + 1);
    chosen.insert(chosen.contains(t) ? j : t);
  }
  std::vector<std::uint32_t> idx(chosen.begin(), chosen.end());
  std::sort(idx.begin(), idx.end());
  return gather(g, std::move(idx));
}

SparseGradient full_support(const Eigen::Ref<const Vector>& g) {
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(g.size()));
  std::iota(idx.begin(), idx.end(), 0u);
  return gather(g, std::move(idx));
}

}  // namespace gradpack
