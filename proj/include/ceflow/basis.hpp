#pragma once

// Tensor-product cubic B-spline test functions over a uniform knot grid.
//
// Each axis carries knots - 4 bumps, every bump spanning four cells, so all
// functions are C^2, compactly supported inside the cover box, and have
// analytic values and gradients. Axis 0 is time; its upper knot is clamped
// to the data window's end so that functions vanish identically at the final
// time (the one-sided weak formulation tests nothing beyond it), while the
// lower knot dips below t = 0 so that some functions are alive at t = 0 and
// the initial-datum pairing is actually exercised.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "ceflow/common.hpp"
#include "ceflow/norms.hpp"
#include "ceflow/symbolic.hpp"

namespace ceflow {

namespace detail {

// cardinal cubic B-spline on [0,4], max 2/3 at u = 2, |B'| <= 1/2
inline double b3(double u) {
  if (u <= 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return u * u * u / 6.0;
  if (u < 2.0) {
    const double v = u - 1.0;
    return (((-3.0 * v + 3.0) * v + 3.0) * v + 1.0) / 6.0;
  }
  if (u < 3.0) {
    const double v = u - 2.0;
    return ((3.0 * v - 6.0) * v * v + 4.0) / 6.0;
  }
  const double v = 4.0 - u;
  return v * v * v / 6.0;
}

inline double db3(double u) {
  if (u <= 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return 0.5 * u * u;
  if (u < 2.0) {
    const double v = u - 1.0;
    return ((-9.0 * v + 6.0) * v + 3.0) / 6.0;
  }
  if (u < 3.0) {
    const double v = u - 2.0;
    return ((9.0 * v - 12.0) * v) / 6.0;
  }
  const double v = 4.0 - u;
  return -0.5 * v * v;
}

}  // namespace detail

struct BsplineAxis {
  double lo = 0.0;
  double h = 1.0;
  int knots = 16;

  int count() const { return knots - 4; }
  double hi() const { return lo + h * (knots - 1); }
  double value(int j, double v) const { return detail::b3((v - lo) / h - j); }
  double deriv(int j, double v) const { return detail::db3((v - lo) / h - j) / h; }

  Vec knot_values() const {
    Vec k(knots);
    for (int i = 0; i < knots; ++i) k[i] = lo + h * i;
    return k;
  }
};

struct TestBasis {
  std::vector<BsplineAxis> axes;  // axis 0 = time, then space
  NormSpec norm;

  int dims() const { return static_cast<int>(axes.size()); }
  int total() const {
    int n = 1;
    for (const BsplineAxis& a : axes) n *= a.count();
    return n;
  }

  void decode(int k, std::span<int> idx) const {
    for (int a = dims() - 1; a >= 0; --a) {
      idx[a] = k % axes[a].count();
      k /= axes[a].count();
    }
  }

  static constexpr std::size_t kMaxAxes = 8;

  /// phi_k value; early-exits to 0 outside the support box.
  double value(int k, double t, std::span<const double> x) const {
    std::array<int, kMaxAxes> idx{};
    decode(k, std::span<int>(idx.data(), axes.size()));
    double p = axes[0].value(idx[0], t);
    for (std::size_t a = 1; a < axes.size() && p != 0.0; ++a)
      p *= axes[a].value(idx[a], x[a - 1]);
    return p;
  }

  /// Writes (d/dt phi_k, D_x phi_k) into dt and grad; returns phi_k.
  double eval(int k, double t, std::span<const double> x, double& dt,
              std::span<double> grad) const {
    std::array<int, kMaxAxes> idx{};
    decode(k, std::span<int>(idx.data(), axes.size()));
    std::array<double, kMaxAxes> val{}, der{};
    val[0] = axes[0].value(idx[0], t);
    der[0] = axes[0].deriv(idx[0], t);
    for (std::size_t a = 1; a < axes.size(); ++a) {
      val[a] = axes[a].value(idx[a], x[a - 1]);
      der[a] = axes[a].deriv(idx[a], x[a - 1]);
    }
    double phi = 1.0;
    for (std::size_t a = 0; a < axes.size(); ++a) phi *= val[a];
    auto partial = [&](std::size_t a) {
      double p = der[a];
      for (std::size_t b = 0; b < axes.size() && p != 0.0; ++b)
        if (b != a) p *= val[b];
      return p;
    };
    dt = partial(0);
    for (std::size_t a = 1; a < axes.size(); ++a) grad[a - 1] = partial(a);
    return phi;
  }

  /// Visits every basis function alive at (t, x): at most 4 per axis.
  /// f(k, phi, dphi_dt, grad_span).
  template <class F>
  void for_each_active(double t, std::span<const double> x, F&& f) const {
    const std::size_t n = axes.size();
    // per-axis active bump indices and their value/derivative
    std::vector<std::vector<int>> act(n);
    std::vector<Vec> val(n), der(n);
    for (std::size_t a = 0; a < n; ++a) {
      const double v = a == 0 ? t : x[a - 1];
      const BsplineAxis& ax = axes[a];
      const int cell = static_cast<int>(std::floor((v - ax.lo) / ax.h));
      for (int j = std::max(0, cell - 3); j <= std::min(ax.count() - 1, cell); ++j) {
        const double bv = ax.value(j, v);
        const double bd = ax.deriv(j, v);
        if (bv == 0.0 && bd == 0.0) continue;
        act[a].push_back(j);
        val[a].push_back(bv);
        der[a].push_back(bd);
      }
      if (act[a].empty()) return;
    }
    std::vector<std::size_t> pos(n, 0);
    Vec grad(n - 1);
    while (true) {
      double phi = 1.0;
      for (std::size_t a = 0; a < n; ++a) phi *= val[a][pos[a]];
      auto partial = [&](std::size_t a) {
        double p = der[a][pos[a]];
        for (std::size_t b = 0; b < n; ++b)
          if (b != a) p *= val[b][pos[b]];
        return p;
      };
      const double dt = partial(0);
      for (std::size_t a = 1; a < n; ++a) grad[a - 1] = partial(a);
      int k = 0;
      for (std::size_t a = 0; a < n; ++a) k = k * axes[a].count() + act[a][pos[a]];
      f(k, phi, dt, std::span<const double>(grad));
      std::size_t a = n;
      while (a > 0) {
        if (++pos[a - 1] < act[a - 1].size()) break;
        pos[a - 1] = 0;
        --a;
      }
      if (a == 0) return;
    }
  }

  /// Uniform C^1-size proxy: 1 + max|phi| + ||per-axis derivative maxima||.
  double c1_norm_proxy() const {
    const std::size_t n = axes.size();
    const double vmax = std::pow(2.0 / 3.0, static_cast<double>(n));
    Vec dmax(n);
    for (std::size_t a = 0; a < n; ++a)
      dmax[a] = 0.5 / axes[a].h * std::pow(2.0 / 3.0, static_cast<double>(n - 1));
    return 1.0 + vmax + norm(dmax);
  }

  /// Knot values per axis, for exact piecewise quadrature.
  AxisBreaks breaks() const {
    AxisBreaks br;
    br.t = axes[0].knot_values();
    for (std::size_t a = 1; a < axes.size(); ++a) br.x.push_back(axes[a].knot_values());
    return br;
  }

  Box cover() const {
    Box b;
    b.lo.resize(axes.size());
    b.hi.resize(axes.size());
    for (std::size_t a = 0; a < axes.size(); ++a) {
      b.lo[a] = axes[a].lo;
      b.hi[a] = axes[a].hi();
    }
    return b;
  }
};

/// Builds the basis over a data window in (t, x). Space axes inflate by 20%
/// on both sides; the time axis inflates downward only and is pinned at
/// t_end above.
inline TestBasis make_test_basis(const Box& data, double t_end, int knots_per_axis = 16,
                                 NormSpec norm = {}) {
  if (knots_per_axis < 5) throw std::invalid_argument("basis: need >= 5 knots per axis");
  if (data.lo.empty()) throw std::invalid_argument("basis: empty data window");
  TestBasis tb;
  tb.norm = norm;
  tb.axes.resize(data.dims());
  for (int a = 0; a < static_cast<int>(data.dims()); ++a) {
    double lo = data.lo[a], hi = data.hi[a];
    const double pad = 0.2 * (hi > lo ? hi - lo : 1.0);
    if (a == 0) {
      hi = t_end;
      lo = std::min(lo, hi) - pad;
    } else {
      lo -= pad;
      hi += pad;
    }
    tb.axes[a].lo = lo;
    tb.axes[a].h = (hi - lo) / (knots_per_axis - 1);
    tb.axes[a].knots = knots_per_axis;
  }
  return tb;
}

}  // namespace ceflow
