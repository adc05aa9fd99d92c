#pragma once

// Dense bounded-variable two-phase simplex.
//
// Small and deterministic rather than fast: Bland's smallest-index rule for
// entering and leaving variables (no cycling), explicit tableau updates,
// artificial variables on every row in phase 1. Intended for desk-scale
// problems (hundreds of rows); callers should scale their rows to O(1)
// coefficients.
//
// Rows may be <=, >=, ==, or ranged (lo <= a.x <= hi); ranges become a
// bounded slack, which is what the relaxed divergence constraints use.
//
// Redundant row systems (rank much lower than the row count) make the
// iterated tableau drift badly, so the solver refactorizes: the original
// system is kept frozen and T = B^-1 A plus the basic values are rebuilt
// from it periodically and whenever a pivot element looks degenerate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ceflow/common.hpp"

namespace ceflow {

enum class Rel { Le, Ge, Eq, Range };

struct LpRow {
  Vec a;
  Rel rel = Rel::Eq;
  double b = 0.0;   // rhs; lower rhs for Range
  double b2 = 0.0;  // upper rhs for Range
};

struct LinearProgram {
  std::size_t n = 0;  // structural variables
  Vec c;              // minimize c . x
  Vec lo, up;         // bounds, +-inf allowed
  std::vector<LpRow> rows;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, PivotLimit };

struct LpResult {
  LpStatus status = LpStatus::Optimal;
  Vec x;
  double objective = 0.0;
  std::size_t pivots = 0;
};

inline LpResult solve_lp(const LinearProgram& lp, std::size_t max_pivots = 1000000,
                         double tol = 1e-9) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = lp.n, m = lp.rows.size();
  if (lp.c.size() != n || lp.lo.size() != n || lp.up.size() != n)
    throw std::invalid_argument("solve_lp: inconsistent sizes");
  for (const LpRow& r : lp.rows)
    if (r.a.size() != n) throw std::invalid_argument("solve_lp: row width mismatch");

  // layout: [0,n) structural, [n,n+m) slacks, [n+m,n+2m) artificials
  const std::size_t N = n + 2 * m;
  Vec lob(N), upb(N), cost(N, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    lob[j] = lp.lo[j];
    upb[j] = lp.up[j];
    if (lob[j] > upb[j]) throw std::invalid_argument("solve_lp: empty variable bound");
  }
  Vec rhs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const LpRow& r = lp.rows[i];
    const std::size_t s = n + i;
    switch (r.rel) {
      case Rel::Le: lob[s] = 0.0; upb[s] = inf; rhs[i] = r.b; break;
      case Rel::Ge: lob[s] = -inf; upb[s] = 0.0; rhs[i] = r.b; break;
      case Rel::Eq: lob[s] = 0.0; upb[s] = 0.0; rhs[i] = r.b; break;
      case Rel::Range:
        if (!(r.b <= r.b2)) throw std::invalid_argument("solve_lp: empty row range");
        lob[s] = 0.0;
        upb[s] = r.b2 - r.b;
        rhs[i] = r.b2;
        break;
    }
  }

  // tableau T = B^-1 [A], beta = current basic values
  std::vector<Vec> T(m, Vec(N, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) T[i][j] = lp.rows[i].a[j];
    T[i][n + i] = 1.0;
  }

  enum Stat : char { Basic, AtLo, AtUp, FreeZero };
  std::vector<char> stat(N);
  Vec xval(N, 0.0);
  auto park = [&](std::size_t j) {
    if (std::isfinite(lob[j]) && (!std::isfinite(upb[j]) || std::abs(lob[j]) <= std::abs(upb[j]))) {
      stat[j] = AtLo;
      xval[j] = lob[j];
    } else if (std::isfinite(upb[j])) {
      stat[j] = AtUp;
      xval[j] = upb[j];
    } else {
      stat[j] = FreeZero;
      xval[j] = 0.0;
    }
  };
  for (std::size_t j = 0; j < n + m; ++j) park(j);

  // rows whose own slack can absorb the initial residual start with that
  // slack basic and a pinned artificial; the rest get a basic artificial
  // (the row negated if needed so its coefficient is +1) for phase 1
  std::vector<std::size_t> basis(m);
  Vec beta(m), brow(m);
  bool need_phase1 = false;
  for (std::size_t i = 0; i < m; ++i) {
    double resid = rhs[i];
    for (std::size_t j = 0; j < n + m; ++j)
      if (xval[j] != 0.0) resid -= T[i][j] * xval[j];
    brow[i] = rhs[i];
    const std::size_t slk = n + i, art = n + m + i;
    cost[art] = 1.0;  // phase-1 objective
    const double s_new = xval[slk] + resid;
    if (s_new >= lob[slk] - 1e-12 && s_new <= upb[slk] + 1e-12) {
      basis[i] = slk;
      stat[slk] = Basic;
      beta[i] = std::clamp(s_new, lob[slk], upb[slk]);
      T[i][art] = 1.0;
      lob[art] = upb[art] = 0.0;
      stat[art] = AtLo;
      continue;
    }
    if (resid < 0.0) {
      for (std::size_t j = 0; j < n + m; ++j) T[i][j] = -T[i][j];
      resid = -resid;
      brow[i] = -rhs[i];
    }
    T[i][art] = 1.0;
    lob[art] = 0.0;
    upb[art] = inf;
    basis[i] = art;
    stat[art] = Basic;
    beta[i] = resid;
    need_phase1 = true;
  }
  const std::vector<Vec> Araw = T;  // frozen system, T . x = brow

  LpResult res;
  Vec d(N);

  // rebuild T = B^-1 Araw and beta = B^-1 (brow - A_N x_N) by Gauss-Jordan
  // elimination on the basis columns; false if the basis matrix is singular
  std::size_t since_refactor = 0;
  auto refactor = [&]() -> bool {
    std::vector<Vec> W(m, Vec(N + 1));
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(Araw[i].begin(), Araw[i].end(), W[i].begin());
      double adj = brow[i];
      for (std::size_t j = 0; j < N; ++j)
        if (stat[j] != Basic && xval[j] != 0.0) adj -= Araw[i][j] * xval[j];
      W[i][N] = adj;
    }
    std::vector<std::size_t> claimed(m, m);
    std::vector<char> used(m, 0);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t col = basis[k];
      std::size_t r = m;
      double best = 1e-13;
      for (std::size_t i = 0; i < m; ++i)
        if (!used[i] && std::abs(W[i][col]) > best) {
          best = std::abs(W[i][col]);
          r = i;
        }
      if (r == m) return false;
      used[r] = 1;
      claimed[k] = r;
      const double piv = W[r][col];
      for (std::size_t j = 0; j <= N; ++j) W[r][j] /= piv;
      for (std::size_t i = 0; i < m; ++i) {
        if (i == r) continue;
        const double f = W[i][col];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j <= N; ++j) W[i][j] -= f * W[r][j];
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      beta[k] = W[claimed[k]][N];
      std::copy(W[claimed[k]].begin(), W[claimed[k]].begin() + N, T[k].begin());
    }
    since_refactor = 0;
    return true;
  };

  // entering candidates are priced steepest-first (Dantzig); after a run of
  // degenerate steps the order falls back to smallest index (Bland) until a
  // real step is taken, which keeps the walk finite
  std::vector<std::pair<double, std::size_t>> cand;
  std::size_t degen_run = 0;

  auto run_phase = [&](int) -> LpStatus {
    while (true) {
      if (res.pivots >= max_pivots) return LpStatus::PivotLimit;
      if (since_refactor >= 64 && !refactor()) return LpStatus::PivotLimit;
      // reduced costs d = c - c_B B^-1 A
      for (std::size_t j = 0; j < N; ++j) d[j] = cost[j];
      for (std::size_t i = 0; i < m; ++i) {
        const double cb = cost[basis[i]];
        if (cb == 0.0) continue;
        for (std::size_t j = 0; j < N; ++j) d[j] -= cb * T[i][j];
      }
      const bool bland = degen_run > 32;
      cand.clear();
      for (std::size_t j = 0; j < N; ++j) {
        if (stat[j] == Basic) continue;
        if (lob[j] == upb[j]) continue;  // fixed
        double score = 0.0;
        if (stat[j] == AtLo && d[j] < -tol) score = d[j];
        else if (stat[j] == AtUp && d[j] > tol) score = -d[j];
        else if (stat[j] == FreeZero && std::abs(d[j]) > tol) score = -std::abs(d[j]);
        else continue;
        cand.push_back({bland ? static_cast<double>(j) : score, j});
      }
      if (cand.empty()) return LpStatus::Optimal;  // no improving column
      std::sort(cand.begin(), cand.end());

      bool stepped = false;
      for (const auto& [score, q] : cand) {
        const int dir = stat[q] == AtLo    ? 1
                        : stat[q] == AtUp ? -1
                                          : (d[q] > 0 ? -1 : 1);
        // two-pass ratio test: find the tightest cap allowing a small bound
        // overshoot, then among rows inside that window pivot on the largest
        // element (in Bland mode: strict caps, smallest-index ties)
        const double delta = bland ? 0.0 : 1e-9;
        double relaxed = inf;
        if (std::isfinite(upb[q] - lob[q])) relaxed = upb[q] - lob[q];  // bound flip
        for (std::size_t i = 0; i < m; ++i) {
          const double alpha = dir * T[i][q];
          if (std::abs(alpha) < 1e-11) continue;
          const std::size_t bi = basis[i];
          // basic value moves by -alpha * step
          double cap = inf;
          if (alpha > 0.0 && std::isfinite(lob[bi])) cap = (beta[i] - lob[bi] + delta) / alpha;
          if (alpha < 0.0 && std::isfinite(upb[bi])) cap = (beta[i] - upb[bi] - delta) / alpha;
          relaxed = std::min(relaxed, std::max(0.0, cap));
        }
        if (!std::isfinite(relaxed)) {
          // trust an unbounded ray only on a freshly rebuilt tableau
          if (since_refactor > 0) break;
          return LpStatus::Unbounded;
        }
        double limit = std::isfinite(upb[q] - lob[q]) ? upb[q] - lob[q] : inf;
        std::size_t leave = m;  // row index of leaving basic variable
        int leave_to = 0;       // -1 to lower, +1 to upper
        double leave_alpha = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double alpha = dir * T[i][q];
          if (std::abs(alpha) < 1e-11) continue;
          const std::size_t bi = basis[i];
          double cap = inf;
          int to = 0;
          if (alpha > 0.0 && std::isfinite(lob[bi])) { cap = (beta[i] - lob[bi]) / alpha; to = -1; }
          if (alpha < 0.0 && std::isfinite(upb[bi])) { cap = (beta[i] - upb[bi]) / alpha; to = 1; }
          if (to == 0) continue;
          cap = std::max(0.0, cap);
          if (cap > relaxed + 1e-12) continue;  // outside the window
          const bool better =
              leave == m ||
              (bland ? cap < limit - 1e-12 || (cap < limit + 1e-12 && bi < basis[leave])
                     : std::abs(alpha) > std::abs(leave_alpha));
          if (better) {
            limit = std::min(cap, relaxed);
            leave = i;
            leave_to = to;
            leave_alpha = alpha;
          }
        }
        if (leave == m) limit = upb[q] - lob[q];  // bound flip wins

        if (leave != m && (std::abs(T[leave][q]) < 1e-8 || std::abs(T[leave][q]) > 1e8)) {
          // degenerate pivot element: rebuild a drifted tableau and re-price,
          // or on a fresh one pass over this candidate entirely
          if (since_refactor > 0) break;
          continue;
        }

        ++res.pivots;
        ++since_refactor;
        degen_run = limit <= 1e-12 ? degen_run + 1 : 0;
        if (leave == m) {
          // entering variable flips to its other bound
          for (std::size_t i = 0; i < m; ++i) beta[i] -= dir * limit * T[i][q];
          stat[q] = dir > 0 ? AtUp : AtLo;
          xval[q] = dir > 0 ? upb[q] : lob[q];
          stepped = true;
          break;
        }
        // pivot: q enters the basis in row `leave`
        const std::size_t out = basis[leave];
        for (std::size_t i = 0; i < m; ++i) beta[i] -= dir * limit * T[i][q];
        const double enter_val =
            (stat[q] == AtLo ? lob[q] : stat[q] == AtUp ? upb[q] : 0.0) + dir * limit;
        stat[out] = leave_to < 0 ? AtLo : AtUp;
        xval[out] = leave_to < 0 ? lob[out] : upb[out];
        if (lob[out] == upb[out]) stat[out] = AtLo;
        // step moves above already produced the new basic values; row
        // elimination below only re-expresses T in the new basis
        const double piv = T[leave][q];
        for (std::size_t j = 0; j < N; ++j) T[leave][j] /= piv;
        beta[leave] = enter_val;
        for (std::size_t i = 0; i < m; ++i) {
          if (i == leave) continue;
          const double f = T[i][q];
          if (f == 0.0) continue;
          for (std::size_t j = 0; j < N; ++j) T[i][j] -= f * T[leave][j];
        }
        basis[leave] = q;
        stat[q] = Basic;
        stepped = true;
        break;
      }
      if (!stepped) {
        // every candidate was rejected; on stale numbers rebuild and retry,
        // on fresh ones the rejects are all noise-level and we are done
        if (since_refactor > 0) {
          if (!refactor()) return LpStatus::PivotLimit;
          continue;
        }
        return LpStatus::Optimal;
      }
    }
  };

  if (need_phase1) {
    const LpStatus st1 = run_phase(1);
    if (st1 != LpStatus::Optimal) {
      res.status = st1 == LpStatus::Unbounded ? LpStatus::Infeasible : st1;
      return res;
    }
    if (since_refactor > 0 && !refactor()) {
      res.status = LpStatus::PivotLimit;
      return res;
    }
  }
  double art_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] >= n + m) art_sum += std::abs(beta[i]);
  for (std::size_t j = 0; j < N; ++j)
    if (j >= n + m && stat[j] != Basic) art_sum += std::abs(xval[j]);
  if (art_sum > 1e-7) {
    res.status = LpStatus::Infeasible;
    return res;
  }
  // phase 2: real objective, artificials pinned at zero
  for (std::size_t j = 0; j < N; ++j) cost[j] = j < n ? lp.c[j] : 0.0;
  for (std::size_t j = n + m; j < N; ++j) {
    upb[j] = 0.0;
    if (stat[j] != Basic) {
      stat[j] = AtLo;
      xval[j] = 0.0;
    }
  }
  const LpStatus st = run_phase(2);
  res.status = st;
  if (st != LpStatus::Optimal && st != LpStatus::PivotLimit) return res;
  if (since_refactor > 0) refactor();

  res.x.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    res.x[j] = stat[j] == Basic ? 0.0 : xval[j];
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) res.x[basis[i]] = beta[i];
  Vec terms(n);
  for (std::size_t j = 0; j < n; ++j) terms[j] = lp.c[j] * res.x[j];
  res.objective = pairwise_sum(terms);
  return res;
}

}  // namespace ceflow
