#pragma once

// Distributional residuals of the continuity equation
//
//     r_k = <mu, d_t phi_k> + <nu, D phi_k> + <mu0, phi_k(0, .)>
//
// and of its augmented (s, t, x) variant, against a finite tensor B-spline
// basis. Acceptance is "no counterexample in the basis span": residuals are
// normalized per function by a C^1-size proxy so tolerances are independent
// of basis scaling.
//
// Symbolic inputs integrate exactly: product components separate into a
// time-factor integral times a space-factor integral per basis function, and
// every 1-D integral is piecewise Gauss cut at the basis knots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ceflow/basis.hpp"
#include "ceflow/common.hpp"
#include "ceflow/measure.hpp"
#include "ceflow/symbolic.hpp"

namespace ceflow {

struct ResidualReport {
  Vec per_fn;         // normalized residuals
  Vec normalization;  // per-function C^1 proxies
  double max_abs = 0.0;
  int n_basis = 0;
  bool cover_warning = false;

  bool pass(double tol) const { return n_basis > 0 && max_abs <= tol; }
};

namespace detail {

inline void finalize_report(ResidualReport& rep, const TestBasis& basis, Vec raw) {
  const double proxy = basis.c1_norm_proxy();
  rep.n_basis = basis.total();
  rep.normalization.assign(raw.size(), proxy);
  rep.per_fn.resize(raw.size());
  rep.max_abs = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    rep.per_fn[k] = raw[k] / proxy;
    rep.max_abs = std::max(rep.max_abs, std::abs(rep.per_fn[k]));
  }
}

inline bool in_cover(const Box& c, double t, std::span<const double> x) {
  if (t < c.lo[0] - 1e-12 || t > c.hi[0] + 1e-12) return false;
  for (std::size_t a = 0; a + 1 < c.lo.size(); ++a)
    if (x[a] < c.lo[a + 1] - 1e-12 || x[a] > c.hi[a + 1] + 1e-12) return false;
  return true;
}

enum class PairKind { TimeDeriv, SpaceGrad, ValueAtZero };

/// Adds the atomic pairing of `m` into raw residuals. ValueAtZero ignores
/// atom times and pairs phi(0, x).
inline void accumulate_atoms(const TestBasis& basis, const AtomicVectorMeasure& m,
                             PairKind kind, Vec& raw, bool& cover_ok) {
  const Box cov = basis.cover();
  for (const Atom& a : m.atoms) {
    const double t = kind == PairKind::ValueAtZero ? 0.0 : a.t;
    if (!in_cover(cov, t, a.x)) cover_ok = false;
    basis.for_each_active(t, a.x, [&](int k, double phi, double dt,
                                      std::span<const double> grad) {
      switch (kind) {
        case PairKind::TimeDeriv:
          raw[k] += dt * a.w[0];
          break;
        case PairKind::ValueAtZero:
          raw[k] += phi * a.w[0];
          break;
        case PairKind::SpaceGrad: {
          double s = 0.0;
          for (std::size_t c = 0; c < grad.size(); ++c) s += grad[c] * a.w[c];
          raw[k] += s;
          break;
        }
      }
    });
  }
}

/// Spatial factor of basis function multi-index m over axes 1..n-1.
struct SpatialFactor {
  const TestBasis* basis;
  std::vector<int> idx;  // per spatial axis

  double value(std::span<const double> x) const {
    double p = 1.0;
    for (std::size_t a = 0; a < idx.size() && p != 0.0; ++a)
      p *= basis->axes[a + 1].value(idx[a], x[a]);
    return p;
  }
  // gradient dotted with w
  double grad_dot(std::span<const double> x, std::span<const double> w) const {
    const std::size_t n = idx.size();
    std::array<double, TestBasis::kMaxAxes> val{}, der{};
    for (std::size_t a = 0; a < n; ++a) {
      val[a] = basis->axes[a + 1].value(idx[a], x[a]);
      der[a] = basis->axes[a + 1].deriv(idx[a], x[a]);
    }
    double s = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      double p = der[a] * w[a];
      for (std::size_t b = 0; b < n && p != 0.0; ++b)
        if (b != a) p *= val[b];
      s += p;
    }
    return s;
  }
};

/// Adds the exact pairing of a product-form measure into raw residuals.
inline void accumulate_symbolic(const TestBasis& basis, const SymbolicMeasure& m,
                                PairKind kind, Vec& raw, bool& cover_ok) {
  validate(m);
  const AxisBreaks br = basis.breaks();
  const Box cov = basis.cover();
  {
    const Box sb = symbolic_support_box(m);
    for (int a = 0; a < static_cast<int>(sb.dims()); ++a) {
      const bool time_axis = a == 0;
      const double lo = kind == PairKind::ValueAtZero && time_axis ? 0.0 : sb.lo[a];
      const double hi = kind == PairKind::ValueAtZero && time_axis ? 0.0 : sb.hi[a];
      if (lo < cov.lo[a] - 1e-12 || hi > cov.hi[a] + 1e-12) cover_ok = false;
    }
  }
  const int n_time = basis.axes[0].count();
  int n_space = 1;
  for (std::size_t a = 1; a < basis.axes.size(); ++a) n_space *= basis.axes[a].count();

  for (const Component& c : m.components) {
    // time-factor integrals per time bump
    Vec tfac(n_time);
    if (kind == PairKind::ValueAtZero) {
      if (!std::holds_alternative<TimeDirac>(c.time))
        throw std::invalid_argument("weak form: initial datum must be a time Dirac");
      for (int j = 0; j < n_time; ++j) tfac[j] = basis.axes[0].value(j, 0.0);
    } else if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) {
      for (int j = 0; j < n_time; ++j)
        tfac[j] = quad::piecewise_gl5(
            [&](double t) {
              const double b = kind == PairKind::TimeDeriv ? basis.axes[0].deriv(j, t)
                                                           : basis.axes[0].value(j, t);
              return b * leb->density(t);
            },
            leb->a, leb->b, br.t);
    } else {
      const double t0 = std::get<TimeDirac>(c.time).t;
      for (int j = 0; j < n_time; ++j)
        tfac[j] = kind == PairKind::TimeDeriv ? basis.axes[0].deriv(j, t0)
                                              : basis.axes[0].value(j, t0);
    }

    // space-factor integrals per spatial multi-index
    const bool want_grad = kind == PairKind::SpaceGrad;
    Vec sfac(n_space);
    SpatialFactor sf{&basis, std::vector<int>(basis.axes.size() - 1, 0)};
    for (int msi = 0; msi < n_space; ++msi) {
      {
        int rem = msi;
        for (int a = static_cast<int>(sf.idx.size()) - 1; a >= 0; --a) {
          sf.idx[a] = rem % basis.axes[a + 1].count();
          rem /= basis.axes[a + 1].count();
        }
      }
      double s = 0.0;
      if (const auto* at = std::get_if<SpaceAtoms>(&c.space)) {
        for (std::size_t j = 0; j < at->points.size(); ++j)
          s += want_grad ? sf.grad_dot(at->points[j], at->weights[j])
                         : sf.value(at->points[j]) * at->weights[j][0];
      } else if (const auto* pl = std::get_if<SpacePolyline>(&c.space)) {
        if (!want_grad)
          throw std::invalid_argument("weak form: polyline flux used as scalar measure");
        Vec w(m.dim), pos(m.dim);
        for (std::size_t i = 0; i + 1 < pl->points.size(); ++i) {
          const Vec &p0 = pl->points[i], &p1 = pl->points[i + 1];
          for (int kdim = 0; kdim < m.dim; ++kdim)
            w[kdim] = pl->orientation * (p1[kdim] - p0[kdim]);
          const Vec cuts = quad::path_cuts(p0, p1, br.x);
          s += quad::piecewise_gl5(
              [&](double u) {
                for (int kdim = 0; kdim < m.dim; ++kdim)
                  pos[kdim] = p0[kdim] + u * (p1[kdim] - p0[kdim]);
                return sf.grad_dot(pos, w);
              },
              0.0, 1.0, cuts);
        }
      } else {
        if (want_grad)
          throw std::invalid_argument("weak form: scalar segment used as flux");
        const auto& sg = std::get<SpaceSegment>(c.space);
        const double len = detail::seg_len(sg.a, sg.b);
        Vec pos(m.dim);
        const Vec cuts = quad::path_cuts(sg.a, sg.b, br.x);
        s += len * quad::piecewise_gl5(
                       [&](double u) {
                         for (int kdim = 0; kdim < m.dim; ++kdim)
                           pos[kdim] = sg.a[kdim] + u * (sg.b[kdim] - sg.a[kdim]);
                         return sf.value(pos);
                       },
                       0.0, 1.0, cuts);
      }
      sfac[msi] = s;
    }

    for (int j = 0; j < n_time; ++j) {
      if (tfac[j] == 0.0) continue;
      for (int msi = 0; msi < n_space; ++msi)
        raw[j * n_space + msi] += c.scale * tfac[j] * sfac[msi];
    }
  }
}

}  // namespace detail

/// Data window of atomic measures in (t, x); mu0 enters at t = 0.
inline Box ce_data_window(const AtomicVectorMeasure& mu, const AtomicVectorMeasure& nu,
                          const AtomicVectorMeasure& mu0) {
  Box b;
  Vec p;
  auto absorb = [&](const AtomicVectorMeasure& m, bool at_zero) {
    for (const Atom& a : m.atoms) {
      p.assign(1, at_zero ? 0.0 : a.t);
      p.insert(p.end(), a.x.begin(), a.x.end());
      b.absorb(p);
    }
  };
  absorb(mu, false);
  absorb(nu, false);
  absorb(mu0, true);
  return b;
}

/// Residuals of d_t mu + div nu = 0 with initial datum mu0, atomic inputs.
inline ResidualReport ce_residual(const AtomicVectorMeasure& mu,
                                  const AtomicVectorMeasure& nu,
                                  const AtomicVectorMeasure& mu0,
                                  const TestBasis& basis) {
  if (mu.weight_dim() != 1 || mu0.weight_dim() != 1)
    throw std::invalid_argument("ce_residual: mu and mu0 must be scalar");
  if (!nu.atoms.empty() && nu.weight_dim() != static_cast<std::size_t>(nu.dim))
    throw std::invalid_argument("ce_residual: nu must carry d-vector weights");
  Vec raw(basis.total(), 0.0);
  bool cover_ok = true;
  detail::accumulate_atoms(basis, mu, detail::PairKind::TimeDeriv, raw, cover_ok);
  detail::accumulate_atoms(basis, nu, detail::PairKind::SpaceGrad, raw, cover_ok);
  detail::accumulate_atoms(basis, mu0, detail::PairKind::ValueAtZero, raw, cover_ok);
  ResidualReport rep;
  rep.cover_warning = !cover_ok;
  detail::finalize_report(rep, basis, std::move(raw));
  return rep;
}

/// Same residuals with exact integration of product-form inputs.
inline ResidualReport ce_residual_symbolic(const SymbolicMeasure& mu,
                                           const SymbolicMeasure& nu,
                                           const SymbolicMeasure& mu0,
                                           const TestBasis& basis) {
  Vec raw(basis.total(), 0.0);
  bool cover_ok = true;
  detail::accumulate_symbolic(basis, mu, detail::PairKind::TimeDeriv, raw, cover_ok);
  detail::accumulate_symbolic(basis, nu, detail::PairKind::SpaceGrad, raw, cover_ok);
  detail::accumulate_symbolic(basis, mu0, detail::PairKind::ValueAtZero, raw, cover_ok);
  ResidualReport rep;
  rep.cover_warning = !cover_ok;
  detail::finalize_report(rep, basis, std::move(raw));
  return rep;
}

/// Residuals of d_s sigma + d_t sigma0 + div sigma_vec = 0 with datum
/// delta_0 (x) delta_0 (x) mu0. Measures live over (s; t, x): the atom time
/// slot holds s and the first space coordinate holds t. The basis spans
/// (s, t, x), so its axis count is d + 2.
inline ResidualReport augmented_residual(const AtomicVectorMeasure& sigma,
                                         const AtomicVectorMeasure& sigma0,
                                         const AtomicVectorMeasure& sigma_vec,
                                         const AtomicVectorMeasure& mu0,
                                         const TestBasis& basis) {
  const int d = static_cast<int>(basis.axes.size()) - 2;
  if (d < 1) throw std::invalid_argument("augmented_residual: basis needs s, t and space axes");
  if (sigma.weight_dim() != 1 || sigma0.weight_dim() != 1)
    throw std::invalid_argument("augmented_residual: sigma and sigma0 must be scalar");
  for (const Atom& a : sigma.atoms)
    if (a.w[0] < -1e-12) throw std::invalid_argument("augmented_residual: sigma signed");
  for (const Atom& a : sigma0.atoms)
    if (a.w[0] < -1e-12) throw std::invalid_argument("augmented_residual: sigma0 signed");

  Vec raw(basis.total(), 0.0);
  bool cover_ok = true;
  detail::accumulate_atoms(basis, sigma, detail::PairKind::TimeDeriv, raw, cover_ok);
  // d_t pairs the first "spatial" axis: dot the gradient with (w, 0, ..)
  {
    AtomicVectorMeasure lifted = sigma0;
    for (Atom& a : lifted.atoms) {
      Vec w(static_cast<std::size_t>(d) + 1, 0.0);
      w[0] = a.w[0];
      a.w = std::move(w);
    }
    detail::accumulate_atoms(basis, lifted, detail::PairKind::SpaceGrad, raw, cover_ok);
  }
  {
    AtomicVectorMeasure shifted = sigma_vec;
    for (Atom& a : shifted.atoms) {
      if (a.w.size() != static_cast<std::size_t>(d))
        throw std::invalid_argument("augmented_residual: sigma_vec must carry d-vector weights");
      Vec w(static_cast<std::size_t>(d) + 1, 0.0);
      std::copy(a.w.begin(), a.w.end(), w.begin() + 1);
      a.w = std::move(w);
    }
    detail::accumulate_atoms(basis, shifted, detail::PairKind::SpaceGrad, raw, cover_ok);
  }
  {
    // datum atoms at (s, t, x) = (0, 0, x_j)
    AtomicVectorMeasure datum{d + 1, mu0.norm, {}};
    for (const Atom& a : mu0.atoms) {
      Atom b;
      b.t = 0.0;
      b.x.assign(1, 0.0);
      b.x.insert(b.x.end(), a.x.begin(), a.x.end());
      b.w = a.w;
      datum.atoms.push_back(std::move(b));
    }
    detail::accumulate_atoms(basis, datum, detail::PairKind::ValueAtZero, raw, cover_ok);
  }
  ResidualReport rep;
  rep.cover_warning = !cover_ok;
  detail::finalize_report(rep, basis, std::move(raw));
  return rep;
}

/// <theta, D phi> for a spatial test function with analytic gradient.
/// grad_fn(x, out) writes D phi(x).
inline double divergence_pairing(
    const AtomicVectorMeasure& theta,
    const std::function<void(std::span<const double>, std::span<double>)>& grad_fn) {
  Vec g(theta.dim), terms;
  terms.reserve(theta.atoms.size());
  for (const Atom& a : theta.atoms) {
    std::fill(g.begin(), g.end(), 0.0);
    grad_fn(a.x, std::span<double>(g));
    terms.push_back(dot(g, a.w));
  }
  return pairwise_sum(terms);
}

/// Exact variant for product-form fluxes; axis_breaks are the spatial
/// breakpoints of phi (one sorted list per axis).
inline double divergence_pairing_symbolic(
    const SymbolicMeasure& theta,
    const std::function<void(std::span<const double>, std::span<double>)>& grad_fn,
    const std::vector<Vec>& axis_breaks) {
  AxisBreaks br;
  br.x = axis_breaks;
  return pair_symbolic(
      theta,
      [&](double, std::span<const double> x, std::span<double> out) { grad_fn(x, out); },
      br);
}

/// Freezes a finite-interval solution beyond its end: appends the final
/// slice as a constant-in-time component on (t_end, t_new]. The flux needs
/// no change, so (extended mu, nu) still solves the equation on [0, t_new].
inline SymbolicMeasure extend_time(const SymbolicMeasure& mu, double t_end, double t_new,
                                   const SpacePart& final_slice) {
  if (!(t_new > t_end)) throw std::invalid_argument("extend_time: t_new <= t_end");
  SymbolicMeasure out = mu;
  out.components.push_back({TimeLebesgue{t_end, t_new, 1.0, 0.0}, final_slice, 1.0});
  return out;
}

}  // namespace ceflow
