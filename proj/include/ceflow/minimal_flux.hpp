#pragma once

// Minimal-submeasure linear program and minimal pairs.
//
// A submeasure zeta = lambda * theta (lambda in [0,1] atomwise) has the same
// distributional divergence as theta over a test basis iff the pairings of
// (1 - lambda) theta with every basis gradient vanish. Minimizing the mass
// of zeta under those (relaxed) constraints picks out the divergence-
// irreducible core of theta: loops drop to zero, injective open paths are
// already minimal and survive untouched.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ceflow/basis.hpp"
#include "ceflow/common.hpp"
#include "ceflow/measure.hpp"
#include "ceflow/simplex.hpp"
#include "ceflow/weak_form.hpp"

namespace ceflow {

namespace detail {

/// Scales a constraint row to unit infinity norm and appends it as the range
/// -eps_con <= a . mu <= eps_con, dropping zero rows and duplicate
/// directions. The same spatial pattern seen through several time bumps
/// yields identical scaled rows, which add nothing to the feasible set but
/// cripple the simplex with degeneracy.
struct ScaledRowSink {
  LinearProgram* lp;
  double eps_con;
  std::map<std::vector<long long>, std::size_t> seen;

  void push(Vec a) {
    double amax = 0.0;
    for (double v : a) amax = std::max(amax, std::abs(v));
    if (amax <= 1e-14) return;
    for (double& v : a) v /= amax;
    std::vector<long long> key(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) key[i] = std::llround(a[i] * 1e12);
    if (!seen.emplace(std::move(key), lp->rows.size()).second) return;
    lp->rows.push_back({std::move(a), Rel::Range, -eps_con, eps_con});
  }
};

}  // namespace detail

struct MinimalSubmeasureResult {
  Vec lambda;  // per-atom, in [0,1]
  AtomicVectorMeasure zeta;
  double objective = 0.0;
  std::size_t pivots = 0;
  std::size_t n_rows = 0;
};

/// Per-atom objective weights ||w_i|| and constraint rows
/// sum_i Dphi_k(t_i, x_i) . w_i (1 - lambda_i) = 0, relaxed to +-eps_con
/// after unit-infinity row scaling. Zero rows are dropped.
inline MinimalSubmeasureResult minimal_submeasure(const AtomicVectorMeasure& theta,
                                                  const TestBasis& basis,
                                                  double eps_con = 1e-8) {
  if (!(eps_con > 0.0)) throw std::invalid_argument("minimal_submeasure: eps_con <= 0");
  const std::size_t n = theta.atoms.size();
  MinimalSubmeasureResult out;
  out.lambda.assign(n, 1.0);
  out.zeta = theta;
  if (n == 0) return out;

  // rows keyed by basis index, built atom-major through the active bumps
  std::map<int, Vec> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a = theta.atoms[i];
    basis.for_each_active(a.t, a.x, [&](int k, double, double, std::span<const double> g) {
      double s = 0.0;
      for (std::size_t c = 0; c < g.size(); ++c) s += g[c] * a.w[c];
      if (s == 0.0) return;
      auto [it, fresh] = rows.try_emplace(k);
      if (fresh) it->second.assign(n, 0.0);
      it->second[i] = s;
    });
  }

  // solved over the dropped fraction mu = 1 - lambda, so that mu = 0 is a
  // feasible start and the solver needs no phase-1 walk
  LinearProgram lp;
  lp.n = n;
  lp.c.resize(n);
  Vec mass(n);
  for (std::size_t i = 0; i < n; ++i) {
    mass[i] = theta.norm(theta.atoms[i].w);
    lp.c[i] = -mass[i];
  }
  lp.lo.assign(n, 0.0);
  lp.up.assign(n, 1.0);
  detail::ScaledRowSink sink{&lp, eps_con, {}};
  for (auto& [k, a] : rows) sink.push(std::move(a));
  out.n_rows = lp.rows.size();

  const LpResult r = solve_lp(lp);
  if (r.status == LpStatus::PivotLimit)
    throw std::runtime_error("minimal_submeasure: pivot limit exceeded");
  if (r.status != LpStatus::Optimal)
    throw std::runtime_error("minimal_submeasure: relaxed LP unexpectedly infeasible");
  out.pivots = r.pivots;
  Vec terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.lambda[i] = std::clamp(1.0 - r.x[i], 0.0, 1.0);
    for (double& w : out.zeta.atoms[i].w) w *= out.lambda[i];
    terms[i] = mass[i] * out.lambda[i];
  }
  out.objective = pairwise_sum(terms);
  return out;
}

/// Exact-entry variant for product-form fluxes: one LP variable per
/// (time cell x polyline edge), entries integrated to machine precision so
/// closed loops yield exactly-zero constraint sums. Returned zeta atoms
/// represent the cells (midpoints, integrated weights).
inline MinimalSubmeasureResult minimal_submeasure_symbolic(const SymbolicMeasure& theta,
                                                           const TestBasis& basis,
                                                           double eps_con = 1e-8,
                                                           int time_cells = 8) {
  if (!(eps_con > 0.0)) throw std::invalid_argument("minimal_submeasure: eps_con <= 0");
  validate(theta);
  const AxisBreaks br = basis.breaks();
  const int n_time = basis.axes[0].count();
  int n_space = 1;
  for (std::size_t a = 1; a < basis.axes.size(); ++a) n_space *= basis.axes[a].count();

  AtomicVectorMeasure cells{theta.dim, theta.norm, {}};
  std::map<int, Vec> rows;  // basis index -> entries per variable
  auto add_entry = [&](int k, std::size_t var, double v) {
    if (v == 0.0) return;
    auto [it, fresh] = rows.try_emplace(k);
    if (fresh) it->second.clear();
    if (it->second.size() <= var) it->second.resize(var + 1, 0.0);
    it->second[var] += v;
  };

  for (const Component& c : theta.components) {
    // time cells with integrated masses and per-time-bump factors
    struct TimeCell {
      double mid, mass;
      Vec bump;  // integral of B_j over the cell (or value at a Dirac)
    };
    std::vector<TimeCell> tcells;
    if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) {
      const int nc = std::max(1, time_cells);
      for (int q = 0; q < nc; ++q) {
        TimeCell tc;
        const double a = leb->a + (leb->b - leb->a) * q / nc;
        const double b = leb->a + (leb->b - leb->a) * (q + 1) / nc;
        tc.mid = 0.5 * (a + b);
        tc.mass = (leb->c0 + 0.5 * leb->c1 * (a + b)) * (b - a);
        tc.bump.resize(n_time);
        for (int j = 0; j < n_time; ++j)
          tc.bump[j] = quad::piecewise_gl5(
              [&](double t) { return basis.axes[0].value(j, t) * leb->density(t); }, a, b,
              br.t);
        tcells.push_back(std::move(tc));
      }
    } else {
      TimeCell tc;
      tc.mid = std::get<TimeDirac>(c.time).t;
      tc.mass = 1.0;
      tc.bump.resize(n_time);
      for (int j = 0; j < n_time; ++j) tc.bump[j] = basis.axes[0].value(j, tc.mid);
      tcells.push_back(std::move(tc));
    }

    // spatial pieces: polyline edges (exact line integrals) or point atoms
    struct SpacePiece {
      Vec mid, w;
      Vec grad;  // exact <piece, D X_m> per spatial multi-index
    };
    std::vector<SpacePiece> pieces;
    if (const auto* pl = std::get_if<SpacePolyline>(&c.space)) {
      detail::SpatialFactor sf{&basis, std::vector<int>(basis.axes.size() - 1, 0)};
      Vec pos(theta.dim);
      for (std::size_t i = 0; i + 1 < pl->points.size(); ++i) {
        const Vec &p0 = pl->points[i], &p1 = pl->points[i + 1];
        if (detail::seg_len(p0, p1) == 0.0) continue;
        SpacePiece sp;
        sp.mid.resize(theta.dim);
        sp.w.resize(theta.dim);
        for (int kd = 0; kd < theta.dim; ++kd) {
          sp.mid[kd] = 0.5 * (p0[kd] + p1[kd]);
          sp.w[kd] = pl->orientation * (p1[kd] - p0[kd]);
        }
        sp.grad.resize(n_space);
        const Vec cuts = quad::path_cuts(p0, p1, br.x);
        for (int msi = 0; msi < n_space; ++msi) {
          int rem = msi;
          for (int a = static_cast<int>(sf.idx.size()) - 1; a >= 0; --a) {
            sf.idx[a] = rem % basis.axes[a + 1].count();
            rem /= basis.axes[a + 1].count();
          }
          sp.grad[msi] = quad::piecewise_gl5(
              [&](double u) {
                for (int kd = 0; kd < theta.dim; ++kd)
                  pos[kd] = p0[kd] + u * (p1[kd] - p0[kd]);
                return sf.grad_dot(pos, sp.w);
              },
              0.0, 1.0, cuts);
        }
        pieces.push_back(std::move(sp));
      }
    } else if (const auto* at = std::get_if<SpaceAtoms>(&c.space)) {
      detail::SpatialFactor sf{&basis, std::vector<int>(basis.axes.size() - 1, 0)};
      for (std::size_t j = 0; j < at->points.size(); ++j) {
        SpacePiece sp;
        sp.mid = at->points[j];
        sp.w = at->weights[j];
        if (sp.w.size() != static_cast<std::size_t>(theta.dim))
          throw std::invalid_argument("minimal_submeasure: flux needs d-vector weights");
        sp.grad.resize(n_space);
        for (int msi = 0; msi < n_space; ++msi) {
          int rem = msi;
          for (int a = static_cast<int>(sf.idx.size()) - 1; a >= 0; --a) {
            sf.idx[a] = rem % basis.axes[a + 1].count();
            rem /= basis.axes[a + 1].count();
          }
          sp.grad[msi] = sf.grad_dot(sp.mid, sp.w);
        }
        pieces.push_back(std::move(sp));
      }
    } else {
      throw std::invalid_argument("minimal_submeasure: scalar segment is not a flux");
    }

    for (const TimeCell& tc : tcells)
      for (const SpacePiece& sp : pieces) {
        const std::size_t var = cells.atoms.size();
        Atom a;
        a.t = tc.mid;
        a.x = sp.mid;
        a.w = sp.w;
        for (double& w : a.w) w *= c.scale * tc.mass;
        cells.atoms.push_back(std::move(a));
        for (int j = 0; j < n_time; ++j) {
          if (tc.bump[j] == 0.0) continue;
          for (int msi = 0; msi < n_space; ++msi)
            add_entry(j * n_space + msi, var, c.scale * tc.bump[j] * sp.grad[msi]);
        }
      }
  }

  const std::size_t n = cells.atoms.size();
  MinimalSubmeasureResult out;
  out.lambda.assign(n, 1.0);
  out.zeta = cells;
  if (n == 0) return out;

  LinearProgram lp;
  lp.n = n;
  lp.c.resize(n);
  Vec mass(n);
  for (std::size_t i = 0; i < n; ++i) {
    mass[i] = theta.norm(cells.atoms[i].w);
    lp.c[i] = -mass[i];
  }
  lp.lo.assign(n, 0.0);
  lp.up.assign(n, 1.0);
  detail::ScaledRowSink sink{&lp, eps_con, {}};
  for (auto& [k, a] : rows) {
    a.resize(n, 0.0);
    sink.push(std::move(a));
  }
  out.n_rows = lp.rows.size();

  const LpResult r = solve_lp(lp);
  if (r.status == LpStatus::PivotLimit)
    throw std::runtime_error("minimal_submeasure: pivot limit exceeded");
  if (r.status != LpStatus::Optimal)
    throw std::runtime_error("minimal_submeasure: relaxed LP unexpectedly infeasible");
  out.pivots = r.pivots;
  Vec terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.lambda[i] = std::clamp(1.0 - r.x[i], 0.0, 1.0);
    for (double& w : out.zeta.atoms[i].w) w *= out.lambda[i];
    terms[i] = mass[i] * out.lambda[i];
  }
  out.objective = pairwise_sum(terms);
  return out;
}

struct MinimalPair {
  Vec lambda;  // densities on the nu_perp atoms
  AtomicVectorMeasure nu_ac, nu_perp, nu_bar;
  double objective = 0.0;  // LP optimum over nu_perp
};

/// Splits nu against mu by colocation, minimizes only the singular part and
/// reassembles nu_bar = nu_ac + lambda nu_perp.
inline MinimalPair minimal_pair(const AtomicVectorMeasure& mu, const AtomicVectorMeasure& nu,
                                const TestBasis& basis, double eps_loc, double eps_con = 1e-8) {
  MinimalPair mp;
  auto [ac, perp] = lebesgue_decompose(nu, mu, eps_loc);
  mp.nu_ac = std::move(ac);
  mp.nu_perp = std::move(perp);
  MinimalSubmeasureResult ms = minimal_submeasure(mp.nu_perp, basis, eps_con);
  mp.lambda = std::move(ms.lambda);
  mp.objective = ms.objective;
  mp.nu_bar = concat(mp.nu_ac, ms.zeta);
  return mp;
}

}  // namespace ceflow
