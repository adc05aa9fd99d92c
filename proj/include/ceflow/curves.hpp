#pragma once

// Augmented 1-Lipschitz curves y(s) = (t(s), x(s)), their BV counterparts
// (left-continuous skeleton plus constant-speed jump transitions), and the
// mutually inverse transforms between the two classes:
//
//   to_abv   unit-speed Lipschitz curve -> skeleton + transitions
//   to_lip   skeleton + transitions    -> unit-speed Lipschitz curve
//
// Curves are piecewise linear. A jump is a maximal parameter interval on
// which t is exactly constant; "exactly" is bitwise, which the transforms
// preserve, so round trips are lossless up to floating-point sums.
//
// The curve-carried pairings omega_curve (parametrized by s) and theta_u
// (parametrized by t and the transition parameter) evaluate the same measure
// through the two representations; both cut every linear piece at the
// supplied breakpoints, so piecewise-polynomial test functions integrate
// exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ceflow/common.hpp"
#include "ceflow/norms.hpp"
#include "ceflow/symbolic.hpp"

namespace ceflow {

struct LipCurve {
  Vec s;                    // parameter breakpoints, s.front() == 0, increasing
  std::vector<Vec> points;  // (t, x...) per breakpoint
  NormSpec norm;

  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()) - 1; }
  double s_end() const { return s.empty() ? 0.0 : s.back(); }
  double t_end() const { return points.empty() ? 0.0 : points.back()[0]; }
};

inline void validate(const LipCurve& y) {
  if (y.s.empty() || y.s.size() != y.points.size())
    throw std::invalid_argument("curve: breakpoints/points mismatch");
  if (y.s.front() != 0.0) throw std::invalid_argument("curve: parameter must start at 0");
  const std::size_t w = y.points.front().size();
  if (w < 2) throw std::invalid_argument("curve: points need (t, x) entries");
  Vec d(w);
  for (std::size_t i = 0; i < y.s.size(); ++i) {
    if (y.points[i].size() != w) throw std::invalid_argument("curve: ragged points");
    if (i == 0) continue;
    const double ds = y.s[i] - y.s[i - 1];
    if (!(ds > 0.0)) throw std::invalid_argument("curve: breakpoints not increasing");
    if (y.points[i][0] < y.points[i - 1][0])
      throw std::invalid_argument("curve: time component decreasing");
    for (std::size_t k = 0; k < w; ++k) d[k] = y.points[i][k] - y.points[i - 1][k];
    if (y.norm(d) > ds * (1.0 + 1e-12))
      throw std::invalid_argument("curve: segment speed exceeds 1");
  }
}

/// Unit speed on every segment (the normalized class).
inline bool is_normalized(const LipCurve& y, double tol = 1e-12) {
  Vec d;
  for (std::size_t i = 0; i + 1 < y.s.size(); ++i) {
    const double ds = y.s[i + 1] - y.s[i];
    d.assign(y.points[i].size(), 0.0);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = y.points[i + 1][k] - y.points[i][k];
    if (std::abs(y.norm(d) / ds - 1.0) > tol) return false;
  }
  return true;
}

/// Point at parameter s; constant extension beyond both ends.
inline Vec curve_point(const LipCurve& y, double s) {
  if (s <= y.s.front()) return y.points.front();
  if (s >= y.s.back()) return y.points.back();
  const auto it = std::upper_bound(y.s.begin(), y.s.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - y.s.begin());
  const double u = (s - y.s[i - 1]) / (y.s[i] - y.s[i - 1]);
  Vec p(y.points[i - 1].size());
  for (std::size_t k = 0; k < p.size(); ++k)
    p[k] = y.points[i - 1][k] + u * (y.points[i][k] - y.points[i - 1][k]);
  return p;
}

/// Sum over n of 2^-n min(1, sup over [0, n] of the pointwise distance).
/// The difference of two piecewise-linear curves is piecewise linear and any
/// norm is convex, so each supremum is attained at a merged breakpoint or at
/// the window edge.
inline double d_metric(const LipCurve& y1, const LipCurve& y2, int n_terms = 20) {
  if (n_terms < 1) throw std::invalid_argument("d_metric: n_terms < 1");
  if (y1.points.front().size() != y2.points.front().size())
    throw std::invalid_argument("d_metric: dimension mismatch");
  Vec grid;
  grid.insert(grid.end(), y1.s.begin(), y1.s.end());
  grid.insert(grid.end(), y2.s.begin(), y2.s.end());
  for (int n = 1; n <= n_terms; ++n) grid.push_back(static_cast<double>(n));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  Vec d(y1.points.front().size());
  double total = 0.0, sup = 0.0;
  std::size_t g = 0;
  for (int n = 1; n <= n_terms; ++n) {
    for (; g < grid.size() && grid[g] <= static_cast<double>(n); ++g) {
      if (grid[g] < 0.0) continue;
      const Vec p = curve_point(y1, grid[g]);
      const Vec q = curve_point(y2, grid[g]);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = p[k] - q[k];
      sup = std::max(sup, y1.norm(d));
    }
    total += std::ldexp(std::min(sup, 1.0), -n);
  }
  return total;
}

struct SBounds {
  double s_minus = 0.0, s_plus = 0.0;
};

/// Level-set bounds of the time component: s_minus = sup{s : t(s) < t} with
/// sup of the empty set = 0, s_plus = inf{s : t(s) > t} with inf of the
/// empty set = s_end. t is piecewise linear and nondecreasing, so both are
/// crossing points of segments and exact.
inline SBounds s_bounds(const LipCurve& y, double t) {
  if (t < y.points.front()[0] || t > y.points.back()[0])
    throw std::out_of_range("s_bounds: t outside the curve's time range");
  SBounds b;
  b.s_minus = 0.0;
  for (std::size_t i = 0; i + 1 < y.s.size(); ++i) {
    const double t0 = y.points[i][0], t1 = y.points[i + 1][0];
    if (t1 >= t) {
      b.s_minus = t0 >= t ? y.s[i]
                          : y.s[i] + (y.s[i + 1] - y.s[i]) * (t - t0) / (t1 - t0);
      break;
    }
    b.s_minus = y.s[i + 1];
  }
  if (y.points.front()[0] >= t) b.s_minus = 0.0;
  b.s_plus = y.s_end();
  for (std::size_t i = y.s.size(); i-- > 1;) {
    const double t0 = y.points[i - 1][0], t1 = y.points[i][0];
    if (t0 <= t) {
      b.s_plus = t1 <= t ? y.s[i]
                         : y.s[i - 1] + (y.s[i] - y.s[i - 1]) * (t - t0) / (t1 - t0);
      break;
    }
    b.s_plus = y.s[i - 1];
  }
  return b;
}

struct JumpTransition {
  double t = 0.0;
  std::vector<Vec> path;  // spatial polyline from u(t,0) to u(t,1)
  double length = 0.0;    // arc length in the curve norm, > 0
};

struct ABVCurve {
  Vec times;                          // strictly increasing sample grid
  std::vector<Vec> values;            // left-continuous skeleton at the grid
  std::vector<JumpTransition> jumps;  // sorted; every jump time is a grid time
  NormSpec norm;

  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
};

namespace detail {

inline std::size_t grid_index(const Vec& times, double t) {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) return times.size();
  return static_cast<std::size_t>(it - times.begin());
}

}  // namespace detail

inline void validate(const ABVCurve& u) {
  if (u.times.empty() || u.times.size() != u.values.size())
    throw std::invalid_argument("abv: times/values mismatch");
  const std::size_t d = u.values.front().size();
  if (d == 0) throw std::invalid_argument("abv: empty values");
  for (std::size_t i = 0; i < u.times.size(); ++i) {
    if (u.values[i].size() != d) throw std::invalid_argument("abv: ragged values");
    if (i > 0 && !(u.times[i - 1] < u.times[i]))
      throw std::invalid_argument("abv: times not increasing");
  }
  double prev = -std::numeric_limits<double>::infinity();
  Vec e(d);
  for (const JumpTransition& j : u.jumps) {
    if (!(j.t > prev)) throw std::invalid_argument("abv: jumps out of order");
    prev = j.t;
    if (j.path.size() < 2) throw std::invalid_argument("abv: transition needs >= 2 vertices");
    if (!(j.length > 0.0)) throw std::invalid_argument("abv: transition length <= 0");
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < j.path.size(); ++i) {
      if (j.path[i].size() != d || j.path[i + 1].size() != d)
        throw std::invalid_argument("abv: transition dim mismatch");
      for (std::size_t k = 0; k < d; ++k) e[k] = j.path[i + 1][k] - j.path[i][k];
      len += u.norm(e);
    }
    if (std::abs(len - j.length) > 1e-7 * std::max(1.0, j.length))
      throw std::invalid_argument("abv: transition length disagrees with its path");
    const std::size_t gi = detail::grid_index(u.times, j.t);
    if (gi == u.times.size())
      throw std::invalid_argument("abv: jump time missing from the sample grid");
    for (std::size_t k = 0; k < d; ++k) e[k] = j.path.front()[k] - u.values[gi][k];
    if (u.norm(e) > 1e-7)
      throw std::invalid_argument("abv: transition start disagrees with the skeleton");
  }
}

/// The map from unit-speed curves to BV data: skeleton samples at the
/// breakpoint times, one transition per maximal flat-t parameter run.
inline ABVCurve to_abv(const LipCurve& y) {
  validate(y);
  if (!is_normalized(y)) throw std::invalid_argument("to_abv: curve is not unit speed");
  ABVCurve u;
  u.norm = y.norm;
  const std::size_t n = y.s.size();
  auto xpart = [&](std::size_t i) {
    return Vec(y.points[i].begin() + 1, y.points[i].end());
  };
  std::size_t i = 0;
  while (i < n) {
    // maximal run [i, k] with constant time
    std::size_t k = i;
    while (k + 1 < n && y.points[k + 1][0] == y.points[i][0]) ++k;
    u.times.push_back(y.points[i][0]);
    u.values.push_back(xpart(i));  // left value: run start
    if (k > i) {
      JumpTransition j;
      j.t = y.points[i][0];
      j.length = y.s[k] - y.s[i];
      for (std::size_t p = i; p <= k; ++p) j.path.push_back(xpart(p));
      u.jumps.push_back(std::move(j));
    }
    i = k + 1;
  }
  return u;
}

/// The inverse map: rebuilds the unit-speed curve by cumulative arc length.
/// Absolutely continuous motion between grid times becomes one segment per
/// time cell; transitions are traversed at unit speed with t held constant.
inline LipCurve to_lip(const ABVCurve& u) {
  validate(u);
  LipCurve y;
  y.norm = u.norm;
  const std::size_t d = u.values.front().size();
  std::vector<std::size_t> jump_at(u.times.size(), u.jumps.size());
  for (std::size_t j = 0; j < u.jumps.size(); ++j)
    jump_at[detail::grid_index(u.times, u.jumps[j].t)] = j;

  Vec e(d + 1);
  double s = 0.0;
  Vec cur = u.values.front();
  auto push = [&](double t, const Vec& x) {
    Vec p(d + 1);
    p[0] = t;
    std::copy(x.begin(), x.end(), p.begin() + 1);
    y.s.push_back(s);
    y.points.push_back(std::move(p));
  };
  push(u.times.front(), cur);
  for (std::size_t i = 0; i < u.times.size(); ++i) {
    if (i > 0) {
      // one straight segment from (t_{i-1}, cur) to (t_i, values[i])
      e[0] = u.times[i] - u.times[i - 1];
      for (std::size_t k = 0; k < d; ++k) e[k + 1] = u.values[i][k] - cur[k];
      s += u.norm(e);
      cur = u.values[i];
      push(u.times[i], cur);
    }
    if (jump_at[i] != u.jumps.size()) {
      const JumpTransition& j = u.jumps[jump_at[i]];
      e[0] = 0.0;
      for (std::size_t p = 1; p < j.path.size(); ++p) {
        for (std::size_t k = 0; k < d; ++k) e[k + 1] = j.path[p][k] - j.path[p - 1][k];
        const double ds = u.norm(e);
        if (ds == 0.0) continue;
        s += ds;
        cur = j.path[p];
        push(u.times[i], cur);
      }
    }
  }
  return y;
}

/// Arc-length window of time level t in the BV data: L_minus counts all
/// motion strictly before t, L_plus adds the transition at t if any. After
/// to_lip these coincide with s_bounds of the output.
inline SBounds l_bounds(const ABVCurve& u, double t) {
  validate(u);
  if (t < u.times.front() || t > u.times.back())
    throw std::out_of_range("l_bounds: t outside the sample grid");
  const std::size_t d = u.values.front().size();
  Vec e(d + 1);
  double acc = 0.0;
  double cur_t = u.times.front();
  double at_jump = 0.0;
  for (std::size_t j = 0; j < u.jumps.size() && u.jumps[j].t <= t; ++j) {
    if (u.jumps[j].t < t)
      acc += u.jumps[j].length;
    else
      at_jump = u.jumps[j].length;
  }
  for (std::size_t i = 1; i < u.times.size() && cur_t < t; ++i) {
    Vec post = u.values[i - 1];
    for (const JumpTransition& j : u.jumps)
      if (j.t == u.times[i - 1]) post = j.path.back();
    e[0] = u.times[i] - u.times[i - 1];
    for (std::size_t k = 0; k < d; ++k) e[k + 1] = u.values[i][k] - post[k];
    const double full = u.norm(e);
    if (u.times[i] <= t)
      acc += full;
    else
      acc += full * (t - u.times[i - 1]) / (u.times[i] - u.times[i - 1]);
    cur_t = u.times[i];
  }
  return {acc, acc + at_jump};
}

/// Skeleton value at t: left limit, and right limit (past the transition).
inline std::pair<Vec, Vec> skeleton_limits(const ABVCurve& u, double t) {
  if (t < u.times.front() || t > u.times.back())
    throw std::out_of_range("skeleton_limits: t outside the sample grid");
  const auto it = std::upper_bound(u.times.begin(), u.times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - u.times.begin());
  Vec left;
  if (i == 0) {
    left = u.values.front();
  } else if (u.times[i - 1] == t) {
    left = u.values[i - 1];
  } else {
    // inside an absolutely continuous cell: interpolate from the post-jump
    // value of the left grid node
    Vec post = u.values[i - 1];
    for (const JumpTransition& j : u.jumps)
      if (j.t == u.times[i - 1]) post = j.path.back();
    const double w = (t - u.times[i - 1]) / (u.times[i] - u.times[i - 1]);
    left.resize(post.size());
    for (std::size_t k = 0; k < left.size(); ++k)
      left[k] = post[k] + w * (u.values[i][k] - post[k]);
  }
  Vec right = left;
  for (const JumpTransition& j : u.jumps)
    if (j.t == t) right = j.path.back();
  return {std::move(left), std::move(right)};
}

struct DerivativeDecomposition {
  Vec times;                     // grid copy, cell i spans [times[i], times[i+1]]
  std::vector<Vec> ac_slope;     // per cell
  std::vector<Vec> cantor;       // identically zero in the piecewise-linear model
  std::vector<Vec> jump_disp;    // per jump, u(t,1) - u(t,0)
  Vec jump_times;
};

inline DerivativeDecomposition derivative_decomposition(const ABVCurve& u) {
  validate(u);
  DerivativeDecomposition dd;
  dd.times = u.times;
  const std::size_t d = u.values.front().size();
  for (std::size_t i = 1; i < u.times.size(); ++i) {
    Vec post = u.values[i - 1];
    for (const JumpTransition& j : u.jumps)
      if (j.t == u.times[i - 1]) post = j.path.back();
    Vec g(d);
    const double dt = u.times[i] - u.times[i - 1];
    for (std::size_t k = 0; k < d; ++k) g[k] = (u.values[i][k] - post[k]) / dt;
    dd.ac_slope.push_back(std::move(g));
    dd.cantor.push_back(Vec(d, 0.0));
  }
  for (const JumpTransition& j : u.jumps) {
    Vec disp(d);
    for (std::size_t k = 0; k < d; ++k) disp[k] = j.path.back()[k] - j.path.front()[k];
    dd.jump_disp.push_back(std::move(disp));
    dd.jump_times.push_back(j.t);
  }
  return dd;
}

namespace detail {

/// Integral of f(p(u)) . w over u in [0,1] along the affine path p0 -> p1 in
/// (t, x)-space, cut at the breakpoint planes of every axis. f writes a
/// (1 + d)-vector test value.
template <class F>
double segment_pairing(const Vec& p0, const Vec& p1, const Vec& w, F&& f,
                       const AxisBreaks& br) {
  std::vector<Vec> all_breaks;
  all_breaks.push_back(br.t);
  for (const Vec& b : br.x) all_breaks.push_back(b);
  const Vec cuts = quad::path_cuts(p0, p1, all_breaks);
  Vec pos(p0.size()), val(p0.size());
  return quad::piecewise_gl5(
      [&](double u) {
        for (std::size_t k = 0; k < pos.size(); ++k)
          pos[k] = p0[k] + u * (p1[k] - p0[k]);
        std::fill(val.begin(), val.end(), 0.0);
        f(pos[0], std::span<const double>(pos.data() + 1, pos.size() - 1),
          std::span<double>(val));
        return dot(val, w);
      },
      0.0, 1.0, cuts);
}

}  // namespace detail

/// <omega_y, f> = integral of f(y(s)) . y'(s) ds over [0, min(s_end, s_max)],
/// exact for test functions polynomial between the supplied breakpoints.
/// f(t, x, out) writes the (1 + d)-vector (f_0, f_vec).
template <class F>
double omega_curve(const LipCurve& y, F&& f, const AxisBreaks& br,
                   double s_max = std::numeric_limits<double>::infinity()) {
  validate(y);
  Vec terms;
  const std::size_t w = y.points.front().size();
  Vec delta(w), p1(w);
  for (std::size_t i = 0; i + 1 < y.s.size(); ++i) {
    if (y.s[i] >= s_max) break;
    const double clip = std::min(y.s[i + 1], s_max);
    const double frac = (clip - y.s[i]) / (y.s[i + 1] - y.s[i]);
    for (std::size_t k = 0; k < w; ++k) {
      delta[k] = (y.points[i + 1][k] - y.points[i][k]) * frac;
      p1[k] = y.points[i][k] + delta[k];
    }
    terms.push_back(detail::segment_pairing(y.points[i], p1, delta, f, br));
  }
  return pairwise_sum(terms);
}

/// <theta_u, f>: the same measure evaluated through the BV data, one term
/// per absolutely continuous cell (d Gamma(t) = (1, slope) dt) plus one per
/// transition edge (d Gamma = (0, dx)).
template <class F>
double theta_u(const ABVCurve& u, F&& f, const AxisBreaks& br) {
  validate(u);
  const std::size_t d = u.values.front().size();
  Vec terms;
  Vec p0(d + 1), p1(d + 1), w(d + 1);
  for (std::size_t i = 1; i < u.times.size(); ++i) {
    Vec post = u.values[i - 1];
    for (const JumpTransition& j : u.jumps)
      if (j.t == u.times[i - 1]) post = j.path.back();
    p0[0] = u.times[i - 1];
    p1[0] = u.times[i];
    for (std::size_t k = 0; k < d; ++k) {
      p0[k + 1] = post[k];
      p1[k + 1] = u.values[i][k];
    }
    for (std::size_t k = 0; k <= d; ++k) w[k] = p1[k] - p0[k];
    terms.push_back(detail::segment_pairing(p0, p1, w, f, br));
  }
  for (const JumpTransition& j : u.jumps) {
    p0[0] = p1[0] = j.t;
    w[0] = 0.0;
    for (std::size_t e = 0; e + 1 < j.path.size(); ++e) {
      for (std::size_t k = 0; k < d; ++k) {
        p0[k + 1] = j.path[e][k];
        p1[k + 1] = j.path[e + 1][k];
        w[k + 1] = p1[k + 1] - p0[k + 1];
      }
      terms.push_back(detail::segment_pairing(p0, p1, w, f, br));
    }
  }
  return pairwise_sum(terms);
}

namespace detail {

/// Closest-approach distance of two segments [a0, a1], [b0, b1] and the
/// minimizing parameters. Quadratic over the unit square: the minimum lies
/// at the unconstrained critical point or on an edge, all solved in closed
/// form.
struct SegDist {
  double dist = 0.0, u = 0.0, v = 0.0;
};

inline SegDist segment_distance(const Vec& a0, const Vec& a1, const Vec& b0, const Vec& b1) {
  const std::size_t n = a0.size();
  Vec A(n), B(n), C(n);
  for (std::size_t k = 0; k < n; ++k) {
    A[k] = a1[k] - a0[k];
    B[k] = b1[k] - b0[k];
    C[k] = a0[k] - b0[k];
  }
  const double aa = dot(A, A), bb = dot(B, B), ab = dot(A, B);
  const double ac = dot(A, C), bc = dot(B, C);
  auto value = [&](double u, double v) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = C[k] + u * A[k] - v * B[k];
      s += e * e;
    }
    return s;
  };
  SegDist best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  auto consider = [&](double u, double v) {
    u = std::clamp(u, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    const double q = value(u, v);
    if (q < best.dist) best = {q, u, v};
  };
  const double det = aa * bb - ab * ab;
  if (det > 1e-30) consider((ab * bc - bb * ac) / det, (aa * bc - ab * ac) / det);
  // each fixed edge reduces to a 1-D quadratic in the other parameter
  if (aa > 0.0) {
    consider(-ac / aa, 0.0);
    consider((ab - ac) / aa, 1.0);
  }
  if (bb > 0.0) {
    consider(0.0, bc / bb);
    consider(1.0, (bc + ab) / bb);
  }
  consider(0.0, 0.0);
  consider(1.0, 0.0);
  consider(0.0, 1.0);
  consider(1.0, 1.0);
  best.dist = std::sqrt(best.dist);
  return best;
}

}  // namespace detail

/// True iff the image has no self-intersection: no two parameters farther
/// apart than tol whose points are closer than tol. Pairwise exact segment
/// distances; consecutive segments may share their junction, and sharing
/// more than that (an exactly reversed direction) fails.
inline bool injectivity_check(const LipCurve& y, double tol = 1e-9) {
  validate(y);
  const std::size_t w = y.points.front().size();
  const std::size_t nseg = y.s.size() - 1;
  Vec A(w), B(w);
  auto edge = [&](std::size_t i, Vec& out) {
    for (std::size_t k = 0; k < w; ++k) out[k] = y.points[i + 1][k] - y.points[i][k];
  };
  for (std::size_t i = 0; i < nseg; ++i) {
    edge(i, A);
    const double la2 = dot(A, A);
    if (la2 == 0.0) continue;
    for (std::size_t j = i + 1; j < nseg; ++j) {
      edge(j, B);
      const double lb2 = dot(B, B);
      if (lb2 == 0.0) continue;
      if (j == i + 1) {
        // only the shared junction is permitted; an exactly opposite
        // direction doubles back over the first segment
        if (dot(A, B) < -(1.0 - 1e-12) * std::sqrt(la2 * lb2)) return false;
        continue;
      }
      const detail::SegDist sd =
          detail::segment_distance(y.points[i], y.points[i + 1], y.points[j], y.points[j + 1]);
      if (sd.dist > tol) continue;
      const double su = y.s[i] + sd.u * (y.s[i + 1] - y.s[i]);
      const double sv = y.s[j] + sd.v * (y.s[j + 1] - y.s[j]);
      if (std::abs(sv - su) > tol) return false;
    }
  }
  return true;
}

/// True iff every maximal flat-t run traces the straight segment between its
/// endpoints: run arc length equals the endpoint distance. The equality case
/// of the triangle inequality characterizes segments only for strictly
/// convex norms; the default L2 qualifies.
inline bool segment_check(const LipCurve& y, double tol = 1e-9) {
  validate(y);
  if (!is_normalized(y)) throw std::invalid_argument("segment_check: curve is not unit speed");
  const std::size_t n = y.s.size();
  const std::size_t w = y.points.front().size();
  Vec chord(w);
  std::size_t i = 0;
  while (i + 1 < n) {
    if (y.points[i + 1][0] != y.points[i][0]) {
      ++i;
      continue;
    }
    std::size_t k = i;
    while (k + 1 < n && y.points[k + 1][0] == y.points[i][0]) ++k;
    const double run = y.s[k] - y.s[i];  // arc length, unit speed
    for (std::size_t c = 0; c < w; ++c) chord[c] = y.points[k][c] - y.points[i][c];
    if (run - y.norm(chord) > tol * std::max(1.0, run)) return false;
    i = k;
  }
  return true;
}

}  // namespace ceflow
