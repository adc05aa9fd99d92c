#pragma once

// Independent reference implementations used to derive expected values.
// Everything here is deliberately written against the standard library only,
// with different algorithms than the library under test: distances by greedy
// mass matching, LPs by exhaustive vertex enumeration, integrals by Simpson.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

/// 1-D W1 by greedy matching of sorted mass piles (two-pointer splitting).
inline double w1_greedy_1d(Vec xa, Vec wa, Vec xb, Vec wb) {
  std::vector<std::size_t> ia(xa.size()), ib(xb.size());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::sort(ia.begin(), ia.end(), [&](auto i, auto j) { return xa[i] < xa[j]; });
  std::sort(ib.begin(), ib.end(), [&](auto i, auto j) { return xb[i] < xb[j]; });
  double cost = 0.0;
  std::size_t p = 0, q = 0;
  double ra = p < ia.size() ? wa[ia[p]] : 0.0, rb = q < ib.size() ? wb[ib[q]] : 0.0;
  while (p < ia.size() && q < ib.size()) {
    const double m = std::min(ra, rb);
    cost += m * std::abs(xa[ia[p]] - xb[ib[q]]);
    ra -= m;
    rb -= m;
    if (ra <= 1e-15) {
      ++p;
      ra = p < ia.size() ? wa[ia[p]] : 0.0;
    }
    if (rb <= 1e-15) {
      ++q;
      rb = q < ib.size() ? wb[ib[q]] : 0.0;
    }
  }
  return cost;
}

/// Optimal transport value by enumerating spanning-tree basic solutions of
/// the balanced transportation polytope. Exponential; supports <= ~5 x 5.
inline double transport_vertex_enum(const Vec& supply, const Vec& demand,
                                    const std::vector<Vec>& cost) {
  const std::size_t m = supply.size(), n = demand.size();
  const std::size_t arcs = m * n, need = m + n - 1;
  if (need > arcs) throw std::invalid_argument("transport oracle: degenerate shape");
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(need);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start,
                                                          std::size_t depth) {
    if (depth == need) {
      // solve the tree by repeated leaf elimination
      std::vector<int> deg(m + n, 0);
      for (std::size_t a : pick) {
        ++deg[a / n];
        ++deg[m + a % n];
      }
      Vec resid(m + n);
      for (std::size_t i = 0; i < m; ++i) resid[i] = supply[i];
      for (std::size_t j = 0; j < n; ++j) resid[m + j] = demand[j];
      Vec flow(need, 0.0);
      std::vector<char> used(need, 0);
      bool ok = true;
      for (std::size_t step = 0; step + 1 < need + 1 && ok; ++step) {
        bool progressed = false;
        for (std::size_t e = 0; e < need && !progressed; ++e) {
          if (used[e]) continue;
          const std::size_t i = pick[e] / n, j = m + pick[e] % n;
          if (deg[i] == 1) {
            flow[e] = resid[i];
            resid[i] = 0.0;
            resid[j] -= flow[e];
            used[e] = 1;
            --deg[i];
            --deg[j];
            progressed = true;
          } else if (deg[j] == 1) {
            flow[e] = resid[j];
            resid[j] = 0.0;
            resid[i] -= flow[e];
            used[e] = 1;
            --deg[i];
            --deg[j];
            progressed = true;
          }
        }
        if (!progressed) break;
      }
      for (std::size_t e = 0; e < need; ++e)
        if (!used[e] || flow[e] < -1e-9) ok = false;
      for (double r : resid)
        if (std::abs(r) > 1e-9) ok = false;
      if (ok) {
        double c = 0.0;
        for (std::size_t e = 0; e < need; ++e) c += flow[e] * cost[pick[e] / n][pick[e] % n];
        best = std::min(best, c);
      }
      return;
    }
    for (std::size_t a = start; a + (need - depth) <= arcs + 0; ++a) {
      pick[depth] = a;
      rec(a + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

struct OracleRow {
  Vec a;
  double lo, hi;  // lo <= a.x <= hi (use equal values for equality)
};

/// Minimize c.x over box [lo, up] and ranged rows by enumerating candidate
/// vertices: every choice of n active constraints from variable bounds and
/// row bounds, solved densely and filtered by feasibility.
inline double lp_vertex_enum(const Vec& c, const Vec& lo, const Vec& up,
                             const std::vector<OracleRow>& rows, double feas_tol = 1e-9) {
  const std::size_t n = c.size();
  struct Cand {
    Vec a;
    double b;
  };
  std::vector<Cand> pool;
  for (std::size_t i = 0; i < n; ++i) {
    Vec e(n, 0.0);
    e[i] = 1.0;
    if (std::isfinite(lo[i])) pool.push_back({e, lo[i]});
    if (std::isfinite(up[i])) pool.push_back({e, up[i]});
  }
  for (const OracleRow& r : rows) {
    pool.push_back({r.a, r.lo});
    if (r.hi != r.lo) pool.push_back({r.a, r.hi});
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(n);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start,
                                                          std::size_t depth) {
    if (depth == n) {
      // dense Gaussian elimination with partial pivoting
      std::vector<Vec> M(n, Vec(n + 1));
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < n; ++j) M[r][j] = pool[pick[r]].a[j];
        M[r][n] = pool[pick[r]].b;
      }
      for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
          if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
        if (std::abs(M[piv][col]) < 1e-11) return;
        std::swap(M[col], M[piv]);
        for (std::size_t r = 0; r < n; ++r) {
          if (r == col) continue;
          const double f = M[r][col] / M[col][col];
          if (f == 0.0) continue;
          for (std::size_t j = col; j <= n; ++j) M[r][j] -= f * M[col][j];
        }
      }
      Vec x(n);
      for (std::size_t r = 0; r < n; ++r) x[r] = M[r][n] / M[r][r];
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] < lo[i] - feas_tol || x[i] > up[i] + feas_tol) return;
      for (const OracleRow& r : rows) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += r.a[j] * x[j];
        if (s < r.lo - feas_tol || s > r.hi + feas_tol) return;
      }
      double obj = 0.0;
      for (std::size_t j = 0; j < n; ++j) obj += c[j] * x[j];
      best = std::min(best, obj);
      return;
    }
    for (std::size_t a = start; a < pool.size(); ++a) {
      pick[depth] = a;
      rec(a + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Composite Simpson on a uniform grid (n even).
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace oracle
