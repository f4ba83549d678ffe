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

namespace gradpack {

/// Values sorted descending with the permutation back to original positions.
/// Equal values keep their original relative order, so maps are canonical.
struct SortedView {
  Vector values;                     ///< descending
  std::vector<std::uint32_t> map;    ///< map[sorted_pos] = original position
  std::uint32_t sign_split = 0;      ///< count of entries >= 0
};

SortedView sort_view(const Eigen::Ref<const Vector>& values);

/// Half-open segment [begin, end) in sequence positions.
struct Segment {
  std::uint32_t begin;
  std::uint32_t end;
};

/// Chord-based segmentation of one sorted sequence. Repeatedly takes the live
/// segment with the largest squared chord deviation and splits it at the
/// deviation argmax (ties keep the lowest position). A segment stops
/// splitting when its argmax would leave a piece shorter than min_points or
/// when every deviation is zero. pre: values non-empty, max_segments >= 1.
std::vector<Segment> segment(const Eigen::Ref<const Vector>& values, int max_segments,
                             int min_points);

/// Curvature proxy M = |(v[1]-v[2]) - (v[n-1]-v[n])| of a sorted sequence
/// (1-based, n = the sequence's own length). pre: n >= 4.
double knot_m(const Eigen::Ref<const Vector>& sorted);

/// Knot-count heuristics, floored at 1: linear p = ceil(2 sqrt(M)),
/// constant p = ceil(M / sqrt(2) - 1).
int knot_count_linear(double m);
int knot_count_constant(double m);

/// Heuristic piecewise-linear sup-error bound 2M/p^2 with M = knot_m(sorted),
/// and the companion piecewise-constant bound M/(2p + 2).
double linear_fit_error_bound(const Eigen::Ref<const Vector>& sorted, int p);
double constant_fit_error_bound(const Eigen::Ref<const Vector>& sorted, int p);

/// Least-squares polynomial over 1-based positions 1..n. Solved on a scaled
/// orthogonal basis internally; coefficients are reported in the monomial
/// basis (coeffs[j] multiplies x^j). residual is the SSE of the double-
/// precision fit. Effective degree is min(degree, n - 1).
struct PolyFit {
  Eigen::VectorXd coeffs;
  double residual;
};
PolyFit fit_poly(const Eigen::Ref<const Vector>& y, int degree);

/// Double-exponential y = a e^{bx} + c e^{dx} over 1-based positions, fit by
/// damped Gauss-Newton. Starting point: single-exponential fits to the upper
/// and lower halves; damping grows 10x whenever a step increases the
/// residual. Terms are ordered so b <= d. pre: n >= 4. Throws FitError when
/// no finite fit is reached; callers fall back to piecewise-poly.
struct DexpFit {
  double a, b, c, d;
  double residual;
  int iterations;
};
DexpFit fit_dexp(const Eigen::Ref<const Vector>& y);

enum class FitKind : std::uint8_t { PiecewisePoly = 0, DoubleExp = 1 };

/// Fitted model of one value sequence, in sorted-descending space. The
/// negative tail is fit as magnitudes descending: with l = sign_split and n
/// values, transformed position l + j holds -v[n - 1 - j]. Segment bounds
/// never straddle l.
///
/// Wire layout: kind (u8), segment count (u16), segment end positions
/// (u32 LE each), degree (u8), coefficients (f32 LE), sign split l (u32 LE).
struct FitModel {
  FitKind kind = FitKind::PiecewisePoly;
  std::uint8_t degree = 5;
  std::uint32_t sign_split = 0;
  std::vector<std::uint32_t> bounds;   ///< segment ends, ascending; last == count
  std::vector<float> coeffs;           ///< coeffs_per_segment() per segment
  std::vector<double> residuals;       ///< per-segment SSE at wire (f32) precision

  std::size_t coeffs_per_segment() const noexcept {
    return kind == FitKind::DoubleExp ? 4u : static_cast<std::size_t>(degree) + 1u;
  }
  std::size_t segments() const noexcept { return bounds.size(); }
};

std::vector<std::uint8_t> serialize_fit(const FitModel& m);
FitModel parse_fit(ByteReader& r, std::uint64_t count);

/// Bit-packed permutation: each entry ceil(log2 d) bits, LSB-first.
/// Errors when an entry is >= d.
std::vector<std::uint8_t> reorder_encode(std::span<const std::uint32_t> map, Index d);
std::vector<std::uint32_t> reorder_decode(std::span<const std::uint8_t> payload,
                                          std::uint64_t count, Index d);
unsigned reorder_entry_bits(Index d);

struct ValueCodecConfig {
  FitKind kind = FitKind::PiecewisePoly;
  int degree = 5;        ///< polynomial degree n'
  int max_segments = 0;  ///< total cap; 0 derives a budget from knot_count_linear
};

/// Sorted-fit value compression. reorder is empty when the sort permutation
/// is the identity. A dexp request falls back to piecewise-poly when any
/// part is shorter than 4 points or the fit does not converge.
struct CompressedValues {
  FitModel model;
  std::vector<std::uint32_t> reorder;  ///< map[sorted_pos] = original position
};
CompressedValues value_compress(const Eigen::Ref<const Vector>& values,
                                const ValueCodecConfig& config);

/// Inverse of value_compress. reorder must be empty (identity) or a
/// permutation of [0, count).
Vector value_decompress(const FitModel& m, std::span<const std::uint32_t> reorder,
                        std::uint64_t count);

}  // namespace gradpack
