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

#include "gradpack/gradient.hpp"

#include <bit>

namespace gradpack {

void validate(const SparseGradient& g) {
  if (g.dim < 1) throw Error("sparse gradient: dim must be >= 1");
  if (g.values.size() != g.count()) throw Error("sparse gradient: support/value size mismatch");
  std::uint32_t prev = 0;
  bool first = true;
  for (const std::uint32_t i : g.support) {
    if (!first && i <= prev) throw Error("sparse gradient: support not strictly increasing");
    if (static_cast<Index>(i) >= g.dim) throw Error("sparse gradient: index out of range");
    prev = i;
    first = false;
  }
}

Index IndexBitmap::popcount() const noexcept {
  Index n = 0;
  for (const std::uint64_t w : words) n += std::popcount(w);
  return n;
}

DenseGradient to_dense(const SparseGradient& g) {
  DenseGradient out = DenseGradient::Zero(g.dim);
  for (Index i = 0; i < g.count(); ++i) out(static_cast<Index>(g.support[static_cast<std::size_t>(i)])) = g.values(i);
  return out;
}

SparseGradient gather(const Eigen::Ref<const Vector>& g, std::vector<std::uint32_t> support) {
  SparseGradient out;
  out.dim = g.size();
  out.values.resize(static_cast<Index>(support.size()));
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (static_cast<Index>(support[i]) >= g.size()) throw Error("gather: index out of range");
    out.values(static_cast<Index>(i)) = g(static_cast<Index>(support[i]));
  }
  out.support = std::move(support);
  return out;
}

IndexBitmap support_to_bitmap(Index dim, std::span<const std::uint32_t> support) {
  IndexBitmap b(dim);
  for (const std::uint32_t i : support) {
    if (static_cast<Index>(i) >= dim) throw Error("bitmap: index out of range");
    b.set(static_cast<Index>(i));
  }
  return b;
}

IndexBitmap to_bitmap(const SparseGradient& g) { return support_to_bitmap(g.dim, g.support); }

std::vector<std::uint32_t> bitmap_support(const IndexBitmap& b) {
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(b.popcount()));
  for (std::size_t w = 0; w < b.words.size(); ++w) {
    std::uint64_t word = b.words[w];
    while (word) {
      const int bit = std::countr_zero(word);
      out.push_back(static_cast<std::uint32_t>(64 * w + static_cast<std::size_t>(bit)));
      word &= word - 1;
    }
  }
  return out;
}

std::vector<std::uint8_t> bitmap_to_bytes(const IndexBitmap& b) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>((b.dim + 7) / 8), 0);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(b.words[i / 8] >> (8 * (i % 8)));
  return out;
}

IndexBitmap bitmap_from_bytes(std::span<const std::uint8_t> bytes, Index dim) {
  if (dim < 0 || bytes.size() != static_cast<std::size_t>((dim + 7) / 8))
    throw CorruptPayloadError("bitmap: payload length mismatch");
  IndexBitmap b(dim);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    b.words[i / 8] |= static_cast<std::uint64_t>(bytes[i]) << (8 * (i % 8));
  if (dim % 8 != 0 && (bytes.back() >> (dim % 8)) != 0)
    throw CorruptPayloadError("bitmap: bits set past dim");
  return b;
}

SparseGradient from_bitmap(const IndexBitmap& b, const Vector& values) {
  if (b.popcount() != values.size()) throw Error("from_bitmap: popcount != value count");
  SparseGradient out;
  out.dim = b.dim;
  out.support = bitmap_support(b);
  out.values = values;
  return out;
}

double residual_sq_norm(const Eigen::Ref<const Vector>& g, const SparseGradient& s) {
  if (g.size() != s.dim) throw Error("residual_sq_norm: dimension mismatch");
  double kept = 0.0;
  double cross = 0.0;
  for (Index i = 0; i < s.count(); ++i) {
    const double v = s.values(i);
    const double gi = g(static_cast<Index>(s.support[static_cast<std::size_t>(i)]));
    kept += v * v;
    cross += gi * v;
  }
  return g.squaredNorm() - 2.0 * cross + kept;
}

}  // namespace gradpack
