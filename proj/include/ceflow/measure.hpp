#pragma once

// Atomic vector measures on the time-space cylinder [0,inf) x R^d.
//
// Every measure in the toolkit is ultimately a finite list of atoms (t, x, w)
// with a vector weight w of dimension 1 (scalar mass), d (spatial flux) or
// d+1 (augmented flux). Values are immutable by convention: operations are
// pure and return new values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ceflow/common.hpp"
#include "ceflow/norms.hpp"

namespace ceflow {

struct Atom {
  double t = 0.0;
  Vec x;  // d entries
  Vec w;  // 1, d or d+1 entries
};

struct AtomicVectorMeasure {
  int dim = 1;  // spatial dimension d
  NormSpec norm;
  std::vector<Atom> atoms;

  std::size_t weight_dim() const { return atoms.empty() ? 1 : atoms.front().w.size(); }

  void validate() const {
    for (const Atom& a : atoms) {
      if (a.t < 0.0) throw std::invalid_argument("measure: atom with t < 0");
      if (static_cast<int>(a.x.size()) != dim)
        throw std::invalid_argument("measure: atom position dim mismatch");
      const std::size_t m = a.w.size();
      if (m != 1 && m != static_cast<std::size_t>(dim) &&
          m != static_cast<std::size_t>(dim) + 1)
        throw std::invalid_argument("measure: weight dim must be 1, d or d+1");
      if (m != weight_dim())
        throw std::invalid_argument("measure: mixed weight dims");
    }
  }
};

struct TimeWindow {
  double a = 0.0, b = 0.0;  // closed below, open above unless b == +inf

  bool contains(double t) const { return t >= a && (t < b || b == std::numeric_limits<double>::infinity()); }
};

/// Sum over atoms in the window of ||w|| in the measure's norm.
inline double total_variation(const AtomicVectorMeasure& m,
                              std::optional<TimeWindow> window = std::nullopt) {
  if (window && !(window->a <= window->b))
    throw std::invalid_argument("total_variation: window has a > b");
  Vec terms;
  terms.reserve(m.atoms.size());
  for (const Atom& a : m.atoms) {
    if (window && !window->contains(a.t)) continue;
    terms.push_back(m.norm(a.w));
  }
  return pairwise_sum(terms);
}

/// Pairing <m, f> = sum_i f(t_i, x_i) . w_i for a vector test function f
/// writing its value (same dimension as the weights) into `out`.
template <class F>
double pair(const AtomicVectorMeasure& m, F&& f) {
  const std::size_t wd = m.weight_dim();
  Vec out(wd), terms;
  terms.reserve(m.atoms.size());
  for (const Atom& a : m.atoms) {
    std::fill(out.begin(), out.end(), 0.0);
    f(a.t, std::span<const double>(a.x), std::span<double>(out));
    if (out.size() != a.w.size())
      throw std::invalid_argument("pair: test function dim mismatch");
    terms.push_back(dot(out, a.w));
  }
  return pairwise_sum(terms);
}

/// Scalar convenience pairing for scalar measures.
template <class F>
double pair_scalar(const AtomicVectorMeasure& m, F&& f) {
  return pair(m, [&](double t, std::span<const double> x, std::span<double> out) {
    if (out.size() != 1) throw std::invalid_argument("pair_scalar: weights not scalar");
    out[0] = f(t, x);
  });
}

/// Relocate atoms through a point map (t, x) -> (t', x'); weights unchanged.
template <class P>
AtomicVectorMeasure pushforward(const AtomicVectorMeasure& m, P&& p) {
  AtomicVectorMeasure out = m;
  for (Atom& a : out.atoms) {
    auto [t2, x2] = p(a.t, std::span<const double>(a.x));
    a.t = t2;
    a.x = std::move(x2);
  }
  return out;
}

inline AtomicVectorMeasure restrict_time(const AtomicVectorMeasure& m, TimeWindow w) {
  AtomicVectorMeasure out{m.dim, m.norm, {}};
  for (const Atom& a : m.atoms)
    if (w.contains(a.t)) out.atoms.push_back(a);
  return out;
}

inline AtomicVectorMeasure concat(const AtomicVectorMeasure& a, const AtomicVectorMeasure& b) {
  if (a.atoms.empty()) return b;
  if (b.atoms.empty()) return a;
  if (a.dim != b.dim || a.weight_dim() != b.weight_dim())
    throw std::invalid_argument("concat: incompatible measures");
  AtomicVectorMeasure out = a;
  out.atoms.insert(out.atoms.end(), b.atoms.begin(), b.atoms.end());
  return out;
}

inline AtomicVectorMeasure scaled(const AtomicVectorMeasure& m, double c) {
  AtomicVectorMeasure out = m;
  for (Atom& a : out.atoms)
    for (double& w : a.w) w *= c;
  return out;
}

inline double spacetime_dist(const NormSpec& n, const Atom& a, const Atom& b) {
  Vec d(a.x.size() + 1);
  d[0] = a.t - b.t;
  for (std::size_t i = 0; i < a.x.size(); ++i) d[i + 1] = a.x[i] - b.x[i];
  return n(d);
}

/// Split nu into the part colocated with mu (within eps_loc in space-time) and
/// the remainder. This is the desk-scale stand-in for the Lebesgue
/// decomposition w.r.t. mu; there is no canonical radius, callers pass one.
inline std::pair<AtomicVectorMeasure, AtomicVectorMeasure> lebesgue_decompose(
    const AtomicVectorMeasure& nu, const AtomicVectorMeasure& mu, double eps_loc) {
  if (!(eps_loc > 0.0)) throw std::invalid_argument("lebesgue_decompose: eps_loc <= 0");
  AtomicVectorMeasure ac{nu.dim, nu.norm, {}}, perp{nu.dim, nu.norm, {}};
  for (const Atom& a : nu.atoms) {
    bool near = false;
    for (const Atom& b : mu.atoms) {
      if (spacetime_dist(nu.norm, a, b) <= eps_loc) {
        near = true;
        break;
      }
    }
    (near ? ac : perp).atoms.push_back(a);
  }
  return {std::move(ac), std::move(perp)};
}

/// Half the minimum positive spatial spacing among atoms; default eps_loc.
inline double default_eps_loc(const AtomicVectorMeasure& m) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.atoms.size(); ++i)
    for (std::size_t j = i + 1; j < m.atoms.size(); ++j) {
      Vec d(m.atoms[i].x.size());
      for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = m.atoms[i].x[k] - m.atoms[j].x[k];
      const double r = m.norm(d);
      if (r > 0.0) best = std::min(best, r);
    }
  return std::isfinite(best) ? 0.5 * best : 1.0;
}

struct SubmeasureWitness {
  bool ok = false;
  Vec lambda;  // per-atom densities, clamped to [0,1]
};

/// Check zeta = lambda * theta atomwise for some lambda in [0,1] (up to tol).
/// Requires co-discretized inputs: identical atom locations in order.
inline SubmeasureWitness submeasure_check(const AtomicVectorMeasure& zeta,
                                          const AtomicVectorMeasure& theta,
                                          double tol = 1e-9) {
  if (zeta.atoms.size() != theta.atoms.size())
    throw std::invalid_argument("submeasure_check: mismatched atom grids");
  SubmeasureWitness w;
  w.ok = true;
  w.lambda.resize(zeta.atoms.size(), 1.0);
  for (std::size_t i = 0; i < zeta.atoms.size(); ++i) {
    const Atom& z = zeta.atoms[i];
    const Atom& th = theta.atoms[i];
    if (std::abs(z.t - th.t) > 1e-12 || z.x != th.x || z.w.size() != th.w.size())
      throw std::invalid_argument("submeasure_check: mismatched atom grids");
    const double den = dot(th.w, th.w);
    if (den == 0.0) {
      if (dot(z.w, z.w) > tol * tol) w.ok = false;
      w.lambda[i] = 1.0;
      continue;
    }
    double lam = dot(z.w, th.w) / den;
    double resid2 = 0.0;
    for (std::size_t k = 0; k < z.w.size(); ++k) {
      const double r = z.w[k] - lam * th.w[k];
      resid2 += r * r;
    }
    const double scale = 1.0 + std::sqrt(den);
    if (std::sqrt(resid2) > tol * scale) w.ok = false;
    if (lam < -tol || lam > 1.0 + tol) w.ok = false;
    w.lambda[i] = std::clamp(lam, 0.0, 1.0);
  }
  return w;
}

/// Piecewise-constant-in-time family of spatial slices: mu = L^1 (x) mu_t.
/// Slice atoms live in d-space; their t fields are ignored.
struct TimeSlicedMeasure {
  Vec times;  // strictly increasing, starting at 0
  std::vector<AtomicVectorMeasure> slices;

  void validate(double eps_mass = 1e-9) const {
    if (times.size() != slices.size() || times.empty())
      throw std::invalid_argument("sliced measure: times/slices mismatch");
    if (times.front() != 0.0)
      throw std::invalid_argument("sliced measure: grid must start at 0");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
      if (!(times[i] < times[i + 1]))
        throw std::invalid_argument("sliced measure: grid not increasing");
    for (const AtomicVectorMeasure& s : slices) {
      if (s.weight_dim() != 1)
        throw std::invalid_argument("sliced measure: slices must be scalar");
      if (std::abs(total_variation(s) - 1.0) > eps_mass)
        throw std::invalid_argument("sliced measure: slice is not a probability");
    }
  }

  const AtomicVectorMeasure& slice_at(double t) const {
    if (t < times.front() || t > times.back())
      throw std::out_of_range("sliced measure: time outside range");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return slices[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

/// Bounding box over (t, x) of the listed measures' atoms.
inline Box support_box(std::span<const AtomicVectorMeasure* const> ms) {
  Box b;
  Vec p;
  for (const AtomicVectorMeasure* m : ms)
    for (const Atom& a : m->atoms) {
      p.assign(1, a.t);
      p.insert(p.end(), a.x.begin(), a.x.end());
      b.absorb(p);
    }
  return b;
}

}  // namespace ceflow
