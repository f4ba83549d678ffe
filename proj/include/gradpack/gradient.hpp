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

#include <Eigen/Dense>

#include "gradpack/errors.hpp"

namespace gradpack {

using Index = Eigen::Index;

/// Gradients are held at 64-bit precision in memory; wire formats serialize
/// values at 32 bits.
using Vector = Eigen::VectorXd;

/// A dense gradient is a Vector of dimension d >= 1.
using DenseGradient = Vector;

/// Sparse gradient over [0, d): strictly increasing support indices paired
/// with their values. Immutable by convention; every operation returns a new
/// object.
struct SparseGradient {
  Index dim = 0;                        ///< dense dimensionality d
  std::vector<std::uint32_t> support;   ///< strictly increasing, all < dim
  Vector values;                        ///< values(i) belongs to support[i]

  Index count() const noexcept { return static_cast<Index>(support.size()); }
};

/// Throws Error unless the invariants above hold.
void validate(const SparseGradient& g);

/// Fixed-width bitmap over [0, d), stored in 64-bit words.
struct IndexBitmap {
  explicit IndexBitmap(Index dim = 0)
      : dim(dim), words(static_cast<std::size_t>((dim + 63) / 64), 0) {}

  Index dim = 0;
  std::vector<std::uint64_t> words;

  bool test(Index i) const {
    return (words[static_cast<std::size_t>(i / 64)] >> (i % 64)) & 1u;
  }
  void set(Index i) { words[static_cast<std::size_t>(i / 64)] |= 1ULL << (i % 64); }
  Index popcount() const noexcept;
};

/// Scatter a sparse gradient into its dense form.
DenseGradient to_dense(const SparseGradient& g);

/// Gather dense values over a sorted support.
SparseGradient gather(const Eigen::Ref<const Vector>& g, std::vector<std::uint32_t> support);

/// Bitmap with exactly the support bits of g set.
IndexBitmap to_bitmap(const SparseGradient& g);
IndexBitmap support_to_bitmap(Index dim, std::span<const std::uint32_t> support);

/// Sorted indices of the set bits.
std::vector<std::uint32_t> bitmap_support(const IndexBitmap& b);

/// ceil(dim/8) bytes, LSB-first. bitmap_from_bytes rejects payloads of the
/// wrong length or with bits set past dim.
std::vector<std::uint8_t> bitmap_to_bytes(const IndexBitmap& b);
IndexBitmap bitmap_from_bytes(std::span<const std::uint8_t> bytes, Index dim);

/// Rebuild a sparse gradient from a bitmap and the values of its set bits in
/// index order. Errors when popcount(b) != values.size().
SparseGradient from_bitmap(const IndexBitmap& b, const Vector& values);

/// Squared reconstruction error ||g - to_dense(s)||^2.
double residual_sq_norm(const Eigen::Ref<const Vector>& g, const SparseGradient& s);

}  // namespace gradpack
