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

#include "gradpack/curvefit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "gradpack/errors.hpp"

namespace gradpack {

SortedView sort_view(const Eigen::Ref<const Vector>& values) {
  const Index n = values.size();
  SortedView sv;
  sv.map.resize(static_cast<std::size_t>(n));
  std::iota(sv.map.begin(), sv.map.end(), 0u);
  std::stable_sort(sv.map.begin(), sv.map.end(),
                   [&values](std::uint32_t a, std::uint32_t b) { return values(a) > values(b); });
  sv.values.resize(n);
  for (Index i = 0; i < n; ++i) {
    sv.values(i) = values(sv.map[static_cast<std::size_t>(i)]);
    if (sv.values(i) >= 0.0) sv.sign_split = static_cast<std::uint32_t>(i) + 1;
  }
  return sv;
}

namespace {

struct Piece {
  std::uint32_t begin, end;
  double dev = 0.0;        // largest squared chord deviation
  std::uint32_t arg = 0;   // its position (lowest on ties)
  bool live = false;       // splitting at arg keeps both halves >= min_points
};

Piece make_piece(const Eigen::Ref<const Vector>& v, std::uint32_t begin, std::uint32_t end,
                 std::uint32_t min_points) {
  Piece p{begin, end, 0.0, 0, false};
  const std::uint32_t len = end - begin;
  if (len < 3) return p;
  const double y0 = v(begin);
  const double slope = (v(end - 1) - y0) / static_cast<double>(len - 1);
  for (std::uint32_t i = begin + 1; i + 1 < end; ++i) {
    const double pred = y0 + slope * static_cast<double>(i - begin);
    const double d2 = (v(i) - pred) * (v(i) - pred);
    if (d2 > p.dev) {
      p.dev = d2;
      p.arg = i;
    }
  }
  p.live = p.dev > 0.0 && p.arg - begin >= min_points && end - p.arg >= min_points;
  return p;
}

}  // namespace

std::vector<Segment> segment(const Eigen::Ref<const Vector>& values, int max_segments,
                             int min_points) {
  const Index n = values.size();
  if (n < 1) throw Error("segment: empty sequence");
  if (max_segments < 1) throw Error("segment: max_segments must be >= 1");
  const std::uint32_t mp = static_cast<std::uint32_t>(std::max(min_points, 1));

  std::vector<Piece> pieces{make_piece(values, 0, static_cast<std::uint32_t>(n), mp)};
  while (pieces.size() < static_cast<std::size_t>(max_segments)) {
    std::size_t best = pieces.size();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (!pieces[i].live) continue;
      if (best == pieces.size() || pieces[i].dev > pieces[best].dev ||
          (pieces[i].dev == pieces[best].dev && pieces[i].begin < pieces[best].begin))
        best = i;
    }
    if (best == pieces.size()) break;
    const Piece p = pieces[best];
    pieces[best] = make_piece(values, p.begin, p.arg, mp);
    pieces.push_back(make_piece(values, p.arg, p.end, mp));
  }

  std::vector<Segment> out;
  out.reserve(pieces.size());
  for (const Piece& p : pieces) out.push_back({p.begin, p.end});
  std::sort(out.begin(), out.end(),
            [](const Segment& a, const Segment& b) { return a.begin < b.begin; });
  return out;
}

double knot_m(const Eigen::Ref<const Vector>& sorted) {
  const Index n = sorted.size();
  if (n < 4) throw Error("knot_m: need at least 4 points");
  return std::abs((sorted(0) - sorted(1)) - (sorted(n - 2) - sorted(n - 1)));
}

int knot_count_linear(double m) {
  const double p = std::ceil(2.0 * std::sqrt(std::max(m, 0.0)));
  return std::max(1, static_cast<int>(p));
}

int knot_count_constant(double m) {
  const double p = std::ceil(m / std::sqrt(2.0) - 1.0);
  return std::max(1, static_cast<int>(p));
}

double linear_fit_error_bound(const Eigen::Ref<const Vector>& sorted, int p) {
  if (p < 1) throw Error("linear_fit_error_bound: p must be >= 1");
  return 2.0 * knot_m(sorted) / (static_cast<double>(p) * static_cast<double>(p));
}

double constant_fit_error_bound(const Eigen::Ref<const Vector>& sorted, int p) {
  if (p < 1) throw Error("constant_fit_error_bound: p must be >= 1");
  return knot_m(sorted) / (2.0 * static_cast<double>(p) + 2.0);
}

PolyFit fit_poly(const Eigen::Ref<const Vector>& y, int degree) {
  const Index n = y.size();
  if (n < 1) throw Error("fit_poly: empty sequence");
  if (degree < 0 || degree > 60) throw Error("fit_poly: degree out of range [0, 60]");

  PolyFit fit;
  fit.coeffs = Eigen::VectorXd::Zero(degree + 1);
  if (n == 1) {
    fit.coeffs(0) = y(0);
    fit.residual = 0.0;
    return fit;
  }

  // Solve on t in [-1, 1] (t = alpha x + beta over 1-based x) for conditioning,
  // then expand back to x monomials.
  const int eff = std::min<int>(degree, static_cast<int>(n) - 1);
  const double alpha = 2.0 / static_cast<double>(n - 1);
  const double beta = -static_cast<double>(n + 1) / static_cast<double>(n - 1);
  Eigen::MatrixXd vand(n, eff + 1);
  for (Index i = 0; i < n; ++i) {
    const double t = alpha * static_cast<double>(i + 1) + beta;
    double pw = 1.0;
    for (int j = 0; j <= eff; ++j) {
      vand(i, j) = pw;
      pw *= t;
    }
  }
  const Eigen::VectorXd ct = vand.colPivHouseholderQr().solve(y);
  fit.residual = (vand * ct - y).squaredNorm();

  std::vector<std::vector<double>> binom(static_cast<std::size_t>(eff) + 1);
  for (int j = 0; j <= eff; ++j) {
    binom[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(j) + 1, 1.0);
    for (int k = 1; k < j; ++k)
      binom[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
          binom[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(k - 1)] +
          binom[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(k)];
  }
  for (int k = 0; k <= eff; ++k) {
    double c = 0.0;
    double ak = std::pow(alpha, k);
    for (int j = k; j <= eff; ++j)
      c += ct(j) * binom[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] * ak *
           std::pow(beta, j - k);
    fit.coeffs(k) = c;
  }
  return fit;
}

namespace {

constexpr double kExpClamp = 700.0;

double safe_exp(double x) { return std::exp(std::min(x, kExpClamp)); }

double dexp_sse(const Eigen::Ref<const Vector>& y, double a, double b, double c, double d) {
  double sse = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i + 1);
    const double r = a * safe_exp(b * x) + c * safe_exp(d * x) - y(i);
    sse += r * r;
  }
  return sse;
}

// Log-linear single-exponential fit amp * e^{rate x} over global 1-based
// positions begin+1 .. begin+len, using strictly positive samples only.
std::pair<double, double> log_linear(const Eigen::Ref<const Vector>& y, Index begin, Index len) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  double last_positive = 0.0;
  for (Index i = begin; i < begin + len; ++i) {
    if (!(y(i) > 0.0)) continue;
    const double x = static_cast<double>(i + 1);
    const double ly = std::log(y(i));
    sx += x;
    sy += ly;
    sxx += x * x;
    sxy += x * ly;
    last_positive = y(i);
    ++m;
  }
  if (m >= 2) {
    const double denom = m * sxx - sx * sx;
    if (std::abs(denom) > 1e-12) {
      const double rate = (m * sxy - sx * sy) / denom;
      const double lamp = (sy - rate * sx) / m;
      if (std::isfinite(rate) && std::isfinite(lamp))
        return {std::exp(std::clamp(lamp, -kExpClamp, kExpClamp)), rate};
    }
  }
  if (m >= 1) return {last_positive, 0.0};
  return {1e-12, 0.0};
}

}  // namespace

DexpFit fit_dexp(const Eigen::Ref<const Vector>& y) {
  const Index n = y.size();
  if (n < 4) throw FitError("dexp: need at least 4 points");

  const Index half = n / 2;
  const auto [a0, b0] = log_linear(y, 0, half);
  const auto [c0, d0] = log_linear(y, half, n - half);
  Eigen::Vector4d p(a0, b0, c0, d0);
  double best = dexp_sse(y, p(0), p(1), p(2), p(3));
  if (!std::isfinite(best)) throw FitError("dexp: non-finite starting residual");

  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  for (; it < 300 && !converged; ++it) {
    Eigen::MatrixXd jac(n, 4);
    Eigen::VectorXd res(n);
    for (Index i = 0; i < n; ++i) {
      const double x = static_cast<double>(i + 1);
      const double eb = safe_exp(p(1) * x);
      const double ed = safe_exp(p(3) * x);
      jac(i, 0) = eb;
      jac(i, 1) = p(0) * x * eb;
      jac(i, 2) = ed;
      jac(i, 3) = p(2) * x * ed;
      res(i) = p(0) * eb + p(2) * ed - y(i);
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * res;

    bool accepted = false;
    for (int attempt = 0; attempt < 24; ++attempt) {
      const Eigen::Matrix4d damped = jtj + lambda * Eigen::Matrix4d::Identity();
      const Eigen::Vector4d delta = damped.ldlt().solve(-jtr);
      const Eigen::Vector4d cand = p + delta;
      const double sse = dexp_sse(y, cand(0), cand(1), cand(2), cand(3));
      if (std::isfinite(sse) && sse < best) {
        const double gain = best - sse;
        p = cand;
        best = sse;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (gain <= 1e-14 * (best + 1e-300) || delta.norm() <= 1e-12 * (1.0 + p.norm()))
          converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!accepted) break;
  }

  if (!p.allFinite() || !std::isfinite(best)) throw FitError("dexp: diverged");
  DexpFit out{p(0), p(1), p(2), p(3), best, it};
  if (out.b > out.d) {
    std::swap(out.a, out.c);
    std::swap(out.b, out.d);
  }
  return out;
}

std::vector<std::uint8_t> serialize_fit(const FitModel& m) {
  if (m.bounds.empty()) throw Error("fit: no segments");
  if (m.bounds.size() > 0xffff) throw Error("fit: too many segments");
  if (m.coeffs.size() != m.bounds.size() * m.coeffs_per_segment())
    throw Error("fit: coefficient count mismatch");
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(m.kind));
  w.put_u16(static_cast<std::uint16_t>(m.bounds.size()));
  for (const std::uint32_t e : m.bounds) w.put_u32(e);
  w.put_u8(m.degree);
  for (const float c : m.coeffs) w.put_f32(c);
  w.put_u32(m.sign_split);
  return std::move(w).take();
}

FitModel parse_fit(ByteReader& r, std::uint64_t count) {
  FitModel m;
  const std::uint8_t kind = r.get_u8();
  if (kind > 1) throw UnknownMethodError("fit: unknown model kind");
  m.kind = static_cast<FitKind>(kind);
  const std::uint16_t segs = r.get_u16();
  if (segs < 1) throw CorruptPayloadError("fit: zero segments");
  std::uint32_t prev = 0;
  for (std::uint16_t i = 0; i < segs; ++i) {
    const std::uint32_t e = r.get_u32();
    if (e <= prev && !(i == 0 && e > 0)) throw CorruptPayloadError("fit: bounds not increasing");
    prev = e;
    m.bounds.push_back(e);
  }
  if (prev != count) throw CorruptPayloadError("fit: bounds do not cover the sequence");
  m.degree = r.get_u8();
  const std::size_t nc = m.bounds.size() * m.coeffs_per_segment();
  m.coeffs.reserve(nc);
  for (std::size_t i = 0; i < nc; ++i) m.coeffs.push_back(r.get_f32());
  m.sign_split = r.get_u32();
  if (m.sign_split > count) throw CorruptPayloadError("fit: sign split out of range");
  if (m.sign_split > 0 && m.sign_split < count &&
      !std::binary_search(m.bounds.begin(), m.bounds.end(), m.sign_split))
    throw CorruptPayloadError("fit: segment straddles sign split");
  return m;
}

unsigned reorder_entry_bits(Index d) {
  if (d < 1) throw Error("reorder: d must be >= 1");
  return static_cast<unsigned>(std::bit_width(static_cast<std::uint64_t>(d - 1)));
}

std::vector<std::uint8_t> reorder_encode(std::span<const std::uint32_t> map, Index d) {
  const unsigned bits = reorder_entry_bits(d);
  BitWriter w;
  for (const std::uint32_t e : map) {
    if (static_cast<Index>(e) >= d) throw Error("reorder: entry out of range");
    w.put_bits(e, bits);
  }
  return std::move(w).take();
}

std::vector<std::uint32_t> reorder_decode(std::span<const std::uint8_t> payload,
                                          std::uint64_t count, Index d) {
  const unsigned bits = reorder_entry_bits(d);
  BitReader r(payload);
  std::vector<std::uint32_t> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t e = r.get_bits(bits);
    if (static_cast<Index>(e) >= d) throw CorruptPayloadError("reorder: entry out of range");
    out.push_back(static_cast<std::uint32_t>(e));
  }
  if (r.remaining() >= 8 || (r.remaining() > 0 && r.get_bits(static_cast<unsigned>(r.remaining())) != 0))
    throw CorruptPayloadError("reorder: trailing garbage");
  return out;
}

namespace {

double eval_poly(const float* c, std::size_t k, double x) {
  double acc = 0.0;
  for (std::size_t j = k; j-- > 0;) acc = acc * x + static_cast<double>(c[j]);
  return acc;
}

double eval_dexp(const float* c, double x) {
  return static_cast<double>(c[0]) * safe_exp(static_cast<double>(c[1]) * x) +
         static_cast<double>(c[2]) * safe_exp(static_cast<double>(c[3]) * x);
}

double segment_sse(const FitModel& m, const float* c, const Eigen::Ref<const Vector>& t,
                   std::uint32_t begin, std::uint32_t end) {
  double sse = 0.0;
  for (std::uint32_t i = begin; i < end; ++i) {
    const double x = static_cast<double>(i - begin + 1);
    const double pred = m.kind == FitKind::DoubleExp
                            ? eval_dexp(c, x)
                            : eval_poly(c, m.coeffs_per_segment(), x);
    const double r = pred - t(i);
    sse += r * r;
  }
  return sse;
}

// Fits one sign part [begin, end) of the transformed sequence, appending
// segment bounds / coefficients to the model. Returns false when a dexp
// request cannot be honoured for this part.
bool fit_part(FitModel& m, const Eigen::Ref<const Vector>& t, std::uint32_t begin,
              std::uint32_t end, int budget) {
  const std::uint32_t len = end - begin;
  if (m.kind == FitKind::DoubleExp) {
    if (len < 4) return false;
    DexpFit f;
    try {
      f = fit_dexp(t.segment(begin, len));
    } catch (const FitError&) {
      return false;
    }
    m.bounds.push_back(end);
    m.coeffs.push_back(static_cast<float>(f.a));
    m.coeffs.push_back(static_cast<float>(f.b));
    m.coeffs.push_back(static_cast<float>(f.c));
    m.coeffs.push_back(static_cast<float>(f.d));
    const float* c = m.coeffs.data() + m.coeffs.size() - 4;
    m.residuals.push_back(segment_sse(m, c, t, begin, end));
    return true;
  }

  const std::vector<Segment> segs =
      segment(t.segment(begin, len), budget, static_cast<int>(m.degree) + 1);
  for (const Segment& s : segs) {
    const std::uint32_t sb = begin + s.begin;
    const std::uint32_t se = begin + s.end;
    const PolyFit f = fit_poly(t.segment(sb, se - sb), m.degree);
    m.bounds.push_back(se);
    const std::size_t at = m.coeffs.size();
    for (Index j = 0; j < f.coeffs.size(); ++j)
      m.coeffs.push_back(static_cast<float>(f.coeffs(j)));
    m.residuals.push_back(segment_sse(m, m.coeffs.data() + at, t, sb, se));
  }
  return true;
}

int part_budget(const Eigen::Ref<const Vector>& t, std::uint32_t begin, std::uint32_t end) {
  const std::uint32_t len = end - begin;
  if (len < 4) return 1;
  return std::min(knot_count_linear(knot_m(t.segment(begin, len))) + 1, 0xffff);
}

}  // namespace

CompressedValues value_compress(const Eigen::Ref<const Vector>& values,
                                const ValueCodecConfig& config) {
  const Index n = values.size();
  if (n < 1) throw Error("value_compress: empty sequence");
  if (config.degree < 0 || config.degree > 60) throw Error("value_compress: bad degree");
  if (static_cast<std::uint64_t>(n) > 0xffffffffULL)
    throw Error("value_compress: sequence too long");

  const SortedView sv = sort_view(values);
  const std::uint32_t l = sv.sign_split;
  const std::uint32_t un = static_cast<std::uint32_t>(n);

  Vector t(n);
  t.head(l) = sv.values.head(l);
  for (std::uint32_t j = 0; j + l < un; ++j) t(l + j) = -sv.values(un - 1 - j);

  CompressedValues out;
  bool identity = true;
  for (std::uint32_t i = 0; i < un; ++i)
    if (sv.map[i] != i) {
      identity = false;
      break;
    }
  if (!identity) out.reorder = sv.map;

  struct Part {
    std::uint32_t begin, end;
  };
  std::vector<Part> parts;
  if (l > 0) parts.push_back({0, l});
  if (l < un) parts.push_back({l, un});

  for (int attempt = 0; attempt < 2; ++attempt) {
    FitModel m;
    m.kind = attempt == 0 ? config.kind : FitKind::PiecewisePoly;
    m.degree = static_cast<std::uint8_t>(config.degree);
    m.sign_split = l;
    bool ok = true;
    for (std::size_t pi = 0; pi < parts.size() && ok; ++pi) {
      const Part& part = parts[pi];
      int budget;
      if (config.max_segments > 0) {
        // Proportional share of the requested cap, at least one per part.
        budget = std::max<int>(
            1, static_cast<int>(static_cast<std::int64_t>(config.max_segments) *
                                (part.end - part.begin) / n));
        if (pi + 1 == parts.size()) {
          const int used = static_cast<int>(m.bounds.size());
          budget = std::max(1, config.max_segments - used);
        }
      } else {
        budget = part_budget(t, part.begin, part.end);
      }
      ok = fit_part(m, t, part.begin, part.end, budget);
    }
    if (ok) {
      out.model = std::move(m);
      return out;
    }
  }
  throw Error("value_compress: unreachable");  // poly path always succeeds
}

Vector value_decompress(const FitModel& m, std::span<const std::uint32_t> reorder,
                        std::uint64_t count) {
  if (count < 1 || count > 0xffffffffULL) throw CorruptPayloadError("fit: bad value count");
  if (m.bounds.empty()) throw CorruptPayloadError("fit: no segments");
  std::uint32_t prev = 0;
  for (std::size_t i = 0; i < m.bounds.size(); ++i) {
    if (m.bounds[i] <= prev && i > 0) throw CorruptPayloadError("fit: bounds not increasing");
    if (i == 0 && m.bounds[i] == 0) throw CorruptPayloadError("fit: bounds not increasing");
    prev = m.bounds[i];
  }
  if (prev != count) throw CorruptPayloadError("fit: bounds do not cover the sequence");
  if (m.coeffs.size() != m.bounds.size() * m.coeffs_per_segment())
    throw CorruptPayloadError("fit: coefficient count mismatch");
  const std::uint32_t l = m.sign_split;
  if (l > count) throw CorruptPayloadError("fit: sign split out of range");
  if (l > 0 && l < count && !std::binary_search(m.bounds.begin(), m.bounds.end(), l))
    throw CorruptPayloadError("fit: segment straddles sign split");

  const std::uint32_t un = static_cast<std::uint32_t>(count);
  Vector t(static_cast<Index>(count));
  std::uint32_t begin = 0;
  const std::size_t cps = m.coeffs_per_segment();
  for (std::size_t s = 0; s < m.bounds.size(); ++s) {
    const std::uint32_t end = m.bounds[s];
    const float* c = m.coeffs.data() + s * cps;
    for (std::uint32_t i = begin; i < end; ++i) {
      const double x = static_cast<double>(i - begin + 1);
      t(i) = m.kind == FitKind::DoubleExp ? eval_dexp(c, x) : eval_poly(c, cps, x);
    }
    begin = end;
  }

  Vector sorted(static_cast<Index>(count));
  for (std::uint32_t i = 0; i < l; ++i) sorted(i) = t(i);
  for (std::uint32_t i = l; i < un; ++i) sorted(i) = -t(l + (un - 1 - i));

  if (reorder.empty()) return sorted;
  if (reorder.size() != count) throw CorruptPayloadError("reorder: wrong entry count");
  std::vector<bool> seen(count, false);
  Vector out(static_cast<Index>(count));
  for (std::uint64_t p = 0; p < count; ++p) {
    const std::uint32_t orig = reorder[p];
    if (orig >= un || seen[orig]) throw CorruptPayloadError("reorder: not a permutation");
    seen[orig] = true;
    out(orig) = sorted(static_cast<Index>(p));
  }
  return out;
}

}  // namespace gradpack
