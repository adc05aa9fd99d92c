#pragma once

// Finite weighted curve ensembles over augmented space-time and the
// pushforward identities they are supposed to satisfy: the time marginal
// recovers mu, the spatial derivative recovers nu, the speed recovers the
// joint variation, and flux splits into a moving-time part and a flat-time
// part. Everything pairs against the tensor B-spline test basis, with the
// same exactness contract as the weak-form module: segments are cut at the
// knot planes, so integrands are polynomial per piece and Gauss nodes are
// exact.
//
// Per-curve contributions are computed in parallel and combined by a
// deterministic pairwise reduction, so results are bitwise reproducible
// regardless of thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <future>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "ceflow/basis.hpp"
#include "ceflow/common.hpp"
#include "ceflow/curves.hpp"
#include "ceflow/measure.hpp"
#include "ceflow/symbolic.hpp"
#include "ceflow/weak_form.hpp"

namespace ceflow {

/// Probability-weighted ensemble of Lipschitz curves in (t, x), each
/// anchored at time zero, integrated over the common horizon [0, s_max].
/// s_step is the sampling step for pointwise (non-pairing) checks.
struct SuperpositionMeasure {
  std::vector<LipCurve> curves;
  Vec weights;
  double s_max = 0.0;
  double s_step = 1e-3;
};

inline void validate(const SuperpositionMeasure& eta) {
  if (eta.curves.size() != eta.weights.size())
    throw std::invalid_argument("superposition: curves/weights mismatch");
  if (!(eta.s_max > 0.0)) throw std::invalid_argument("superposition: need s_max > 0");
  if (!(eta.s_step > 0.0)) throw std::invalid_argument("superposition: need s_step > 0");
  double sum = 0.0;
  for (double w : eta.weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("superposition: negative weight");
    sum += w;
  }
  if (!eta.weights.empty() && std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("superposition: weights must sum to 1");
  for (const LipCurve& y : eta.curves) {
    validate(y);
    if (std::abs(y.points.front()[0]) > 1e-12)
      throw std::invalid_argument("superposition: curve not anchored at t = 0");
  }
}

namespace detail {

inline std::vector<Vec> basis_break_planes(const TestBasis& basis) {
  const AxisBreaks br = basis.breaks();
  std::vector<Vec> all;
  all.push_back(br.t);
  for (const Vec& b : br.x) all.push_back(b);
  return all;
}

/// Gauss nodes along one curve clipped at s_max, segments cut at the given
/// axis planes. f(slope, t, x, wq) with wq the arc-measure node weight.
template <class NodeFn>
void curve_nodes(const std::vector<Vec>& planes, const LipCurve& y, double s_max,
                 NodeFn&& f) {
  const std::size_t w = y.points.front().size();
  Vec slope(w), p1(w), pos(w);
  for (std::size_t i = 0; i + 1 < y.s.size(); ++i) {
    if (y.s[i] >= s_max) break;
    const double ds = std::min(y.s[i + 1], s_max) - y.s[i];
    const double full = y.s[i + 1] - y.s[i];
    for (std::size_t k = 0; k < w; ++k) {
      slope[k] = (y.points[i + 1][k] - y.points[i][k]) / full;
      p1[k] = y.points[i][k] + slope[k] * ds;
    }
    const Vec cuts = quad::path_cuts(y.points[i], p1, planes);
    Vec edges{0.0};
    edges.insert(edges.end(), cuts.begin(), cuts.end());
    edges.push_back(1.0);
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      if (!(edges[e + 1] > edges[e])) continue;
      const double mid = 0.5 * (edges[e] + edges[e + 1]);
      const double half = 0.5 * (edges[e + 1] - edges[e]);
      for (int q = 0; q < 5; ++q) {
        const double u = mid + half * quad::gl5_x[q];
        for (std::size_t k = 0; k < w; ++k)
          pos[k] = y.points[i][k] + u * (p1[k] - y.points[i][k]);
        f(std::span<const double>(slope), pos[0],
          std::span<const double>(pos.data() + 1, w - 1),
          quad::gl5_w[q] * half * ds);
      }
    }
  }
}

/// Per-curve fill run in parallel, combined by pairwise reduction in index
/// order. fill(j, out) adds curve j's contribution into a zeroed vector.
template <class Fill>
Vec reduce_curves(std::size_t n_curves, std::size_t n_out, Fill&& fill) {
  if (n_curves == 0) return Vec(n_out, 0.0);
  std::vector<Vec> parts(n_curves);
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const std::size_t chunk = (n_curves + hw - 1) / hw;
  std::vector<std::future<void>> tasks;
  for (std::size_t b = 0; b < n_curves; b += chunk) {
    const std::size_t e = std::min(n_curves, b + chunk);
    tasks.push_back(std::async(std::launch::async, [&, b, e] {
      for (std::size_t j = b; j < e; ++j) {
        parts[j].assign(n_out, 0.0);
        fill(j, parts[j]);
      }
    }));
  }
  for (auto& t : tasks) t.get();
  for (std::size_t step = 1; step < n_curves; step *= 2)
    for (std::size_t i = 0; i + step < n_curves; i += 2 * step)
      for (std::size_t k = 0; k < n_out; ++k) parts[i][k] += parts[i + step][k];
  return std::move(parts[0]);
}

inline void check_dims(const SuperpositionMeasure& eta, const TestBasis& basis) {
  validate(eta);
  for (const LipCurve& y : eta.curves)
    if (y.points.front().size() != basis.axes.size())
      throw std::invalid_argument("superposition: curve/basis dimension mismatch");
}

}  // namespace detail

/// Pairings of the ensemble's time marginal: for each basis function,
/// sum_j p_j of the integral of phi(y_j(s)) t'(s) ds.
inline Vec push_mu(const SuperpositionMeasure& eta, const TestBasis& basis) {
  detail::check_dims(eta, basis);
  const auto planes = detail::basis_break_planes(basis);
  return detail::reduce_curves(
      eta.curves.size(), static_cast<std::size_t>(basis.total()), [&](std::size_t j, Vec& out) {
        const double p = eta.weights[j];
        detail::curve_nodes(planes, eta.curves[j], eta.s_max,
                            [&](std::span<const double> slope, double t,
                                std::span<const double> x, double wq) {
                              if (slope[0] == 0.0) return;
                              basis.for_each_active(
                                  t, x,
                                  [&](int k, double phi, double, std::span<const double>) {
                                    out[k] += p * wq * slope[0] * phi;
                                  });
                            });
      });
}

/// Pairings of the ensemble's flux, one vector per spatial component:
/// sum_j p_j of the integral of phi(y_j(s)) x_c'(s) ds.
inline std::vector<Vec> push_nu(const SuperpositionMeasure& eta, const TestBasis& basis) {
  detail::check_dims(eta, basis);
  const std::size_t d = basis.axes.size() - 1;
  const std::size_t total = static_cast<std::size_t>(basis.total());
  const auto planes = detail::basis_break_planes(basis);
  Vec flat = detail::reduce_curves(
      eta.curves.size(), d * total, [&](std::size_t j, Vec& out) {
        const double p = eta.weights[j];
        detail::curve_nodes(planes, eta.curves[j], eta.s_max,
                            [&](std::span<const double> slope, double t,
                                std::span<const double> x, double wq) {
                              bool moving = false;
                              for (std::size_t c = 0; c < d; ++c)
                                moving = moving || slope[1 + c] != 0.0;
                              if (!moving) return;
                              basis.for_each_active(
                                  t, x,
                                  [&](int k, double phi, double, std::span<const double>) {
                                    for (std::size_t c = 0; c < d; ++c)
                                      out[c * total + k] += p * wq * slope[1 + c] * phi;
                                  });
                            });
      });
  std::vector<Vec> comps(d);
  for (std::size_t c = 0; c < d; ++c)
    comps[c].assign(flat.begin() + c * total, flat.begin() + (c + 1) * total);
  return comps;
}

/// Pairings of the speed-weighted occupation measure, and of the plain one.
/// For a normalized (unit-speed) ensemble the two coincide and `normalized`
/// reports that the second-equality check is meaningful.
struct TvPairings {
  Vec weighted;
  Vec plain;
  bool normalized = false;
};

inline TvPairings push_tv(const SuperpositionMeasure& eta, const TestBasis& basis) {
  detail::check_dims(eta, basis);
  const std::size_t total = static_cast<std::size_t>(basis.total());
  const auto planes = detail::basis_break_planes(basis);
  Vec flat = detail::reduce_curves(
      eta.curves.size(), 2 * total, [&](std::size_t j, Vec& out) {
        const double p = eta.weights[j];
        const NormSpec& norm = eta.curves[j].norm;
        detail::curve_nodes(planes, eta.curves[j], eta.s_max,
                            [&](std::span<const double> slope, double t,
                                std::span<const double> x, double wq) {
                              const double speed = norm(slope);
                              basis.for_each_active(
                                  t, x,
                                  [&](int k, double phi, double, std::span<const double>) {
                                    out[k] += p * wq * speed * phi;
                                    out[total + k] += p * wq * phi;
                                  });
                            });
      });
  TvPairings tv;
  tv.weighted.assign(flat.begin(), flat.begin() + total);
  tv.plain.assign(flat.begin() + total, flat.end());
  tv.normalized = true;
  for (const LipCurve& y : eta.curves) tv.normalized = tv.normalized && is_normalized(y);
  return tv;
}

/// Flux pairings split by whether time moves at the sample: flux_plus
/// collects x' where t' > eps_flat, flux_zero the rest. mu_plus is the time
/// pushforward restricted to the moving part (it equals push_mu whenever
/// flat runs have exactly zero time slope). mass_plus integrates the full
/// speed over the moving part, mass_zero the spatial speed over flat runs.
struct FluxSplit {
  std::vector<Vec> flux_plus;
  std::vector<Vec> flux_zero;
  Vec mu_plus;
  double mass_plus = 0.0;
  double mass_zero = 0.0;
};

inline FluxSplit split_D(const SuperpositionMeasure& eta, const TestBasis& basis,
                         double eps_flat = 1e-6) {
  detail::check_dims(eta, basis);
  const std::size_t d = basis.axes.size() - 1;
  const std::size_t total = static_cast<std::size_t>(basis.total());
  const auto planes = detail::basis_break_planes(basis);
  // layout: [ flux_plus (d x total) | flux_zero (d x total) | mu_plus | masses ]
  const std::size_t n_out = (2 * d + 1) * total + 2;
  Vec flat = detail::reduce_curves(
      eta.curves.size(), n_out, [&](std::size_t j, Vec& out) {
        const double p = eta.weights[j];
        const NormSpec& norm = eta.curves[j].norm;
        Vec spatial(d + 1, 0.0);
        detail::curve_nodes(planes, eta.curves[j], eta.s_max,
                            [&](std::span<const double> slope, double t,
                                std::span<const double> x, double wq) {
                              const bool moving = slope[0] > eps_flat;
                              if (moving) {
                                out[n_out - 2] += p * wq * norm(slope);
                              } else {
                                for (std::size_t c = 0; c <= d; ++c)
                                  spatial[c] = c == 0 ? 0.0 : slope[c];
                                out[n_out - 1] += p * wq * norm(spatial);
                              }
                              const std::size_t base = moving ? 0 : d * total;
                              basis.for_each_active(
                                  t, x,
                                  [&](int k, double phi, double, std::span<const double>) {
                                    for (std::size_t c = 0; c < d; ++c)
                                      out[base + c * total + k] += p * wq * slope[1 + c] * phi;
                                    if (moving)
                                      out[2 * d * total + k] += p * wq * slope[0] * phi;
                                  });
                            });
      });
  FluxSplit fs;
  fs.flux_plus.resize(d);
  fs.flux_zero.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    fs.flux_plus[c].assign(flat.begin() + c * total, flat.begin() + (c + 1) * total);
    fs.flux_zero[c].assign(flat.begin() + (d + c) * total, flat.begin() + (d + c + 1) * total);
  }
  fs.mu_plus.assign(flat.begin() + 2 * d * total, flat.begin() + (2 * d + 1) * total);
  fs.mass_plus = flat[n_out - 2];
  fs.mass_zero = flat[n_out - 1];
  return fs;
}

/// Weak-form residual of the pair the ensemble represents: for each basis
/// function, <mu_eta, d_t phi> + <nu_eta, D phi> + phi(0, .) paired with the
/// ensemble's start points. Along each curve the integrand is the exact
/// s-derivative of phi(y(s)), so for any ensemble whose curves end where the
/// basis vanishes the residual telescopes to zero identically; quadrature is
/// exact per piece, making this a machine-precision identity rather than a
/// convergence statement.
inline ResidualReport ce_residual_ensemble(const SuperpositionMeasure& eta,
                                           const TestBasis& basis) {
  detail::check_dims(eta, basis);
  const std::size_t d = basis.axes.size() - 1;
  const std::size_t total = static_cast<std::size_t>(basis.total());
  const auto planes = detail::basis_break_planes(basis);
  const Box cov = basis.cover();
  bool cover_ok = true;
  for (const LipCurve& y : eta.curves)
    for (const Vec& pt : y.points)
      cover_ok = cover_ok &&
                 detail::in_cover(cov, pt[0],
                                  std::span<const double>(pt.data() + 1, pt.size() - 1));
  Vec raw = detail::reduce_curves(
      eta.curves.size(), total, [&](std::size_t j, Vec& out) {
        const double p = eta.weights[j];
        const LipCurve& y = eta.curves[j];
        detail::curve_nodes(planes, y, eta.s_max,
                            [&](std::span<const double> slope, double t,
                                std::span<const double> x, double wq) {
                              basis.for_each_active(
                                  t, x,
                                  [&](int k, double, double dt,
                                      std::span<const double> grad) {
                                    double g = dt * slope[0];
                                    for (std::size_t c = 0; c < d; ++c)
                                      g += grad[c] * slope[1 + c];
                                    out[k] += p * wq * g;
                                  });
                            });
        const Vec& p0 = y.points.front();
        basis.for_each_active(
            0.0, std::span<const double>(p0.data() + 1, p0.size() - 1),
            [&](int k, double phi, double, std::span<const double>) { out[k] += p * phi; });
      });
  ResidualReport rep;
  rep.cover_warning = !cover_ok;
  detail::finalize_report(rep, basis, std::move(raw));
  return rep;
}

/// Worst sampled deviation of the curve directions from the field: segments
/// are subdivided to s_step and ||y' - (tau, v)(y)|| is taken at piece
/// midpoints, in the curve's norm.
template <class Field>
double characteristic_residual(const SuperpositionMeasure& eta, const Field& field) {
  validate(eta);
  double worst = 0.0;
  Vec dir, diff, pos;
  for (const LipCurve& y : eta.curves) {
    const std::size_t w = y.points.front().size();
    dir.assign(w, 0.0);
    diff.assign(w, 0.0);
    pos.assign(w, 0.0);
    for (std::size_t i = 0; i + 1 < y.s.size(); ++i) {
      if (y.s[i] >= eta.s_max) break;
      const double ds = std::min(y.s[i + 1], eta.s_max) - y.s[i];
      const double full = y.s[i + 1] - y.s[i];
      const int pieces = std::max(1, static_cast<int>(std::ceil(ds / eta.s_step)));
      for (int q = 0; q < pieces; ++q) {
        const double u = (q + 0.5) / pieces * (ds / full);
        for (std::size_t k = 0; k < w; ++k)
          pos[k] = y.points[i][k] + u * (y.points[i + 1][k] - y.points[i][k]);
        field.eval(pos[0], std::span<const double>(pos.data() + 1, w - 1),
                   std::span<double>(dir));
        for (std::size_t k = 0; k < w; ++k)
          diff[k] = (y.points[i + 1][k] - y.points[i][k]) / full - dir[k];
        worst = std::max(worst, y.norm(diff));
      }
    }
  }
  return worst;
}

/// Ensemble of BV curves (time-indexed skeletons with jump transitions).
struct BVSuperposition {
  std::vector<ABVCurve> curves;
  Vec weights;
};

inline void validate(const BVSuperposition& eta) {
  if (eta.curves.size() != eta.weights.size())
    throw std::invalid_argument("bv superposition: curves/weights mismatch");
  double sum = 0.0;
  for (double w : eta.weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("bv superposition: negative weight");
    sum += w;
  }
  if (!eta.weights.empty() && std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("bv superposition: weights must sum to 1");
  for (const ABVCurve& u : eta.curves) validate(u);
}

/// One-sided slice measures at time t: atoms at each curve's left and right
/// skeleton limits, carrying the curve weights.
inline std::pair<AtomicVectorMeasure, AtomicVectorMeasure> mu_sided(
    const BVSuperposition& eta, double t) {
  validate(eta);
  const int d = eta.curves.empty() ? 0 : eta.curves.front().dim();
  AtomicVectorMeasure left{d, {}, {}}, right{d, {}, {}};
  for (std::size_t j = 0; j < eta.curves.size(); ++j) {
    const auto [lo, hi] = skeleton_limits(eta.curves[j], t);
    left.atoms.push_back({t, lo, {eta.weights[j]}});
    right.atoms.push_back({t, hi, {eta.weights[j]}});
  }
  return {std::move(left), std::move(right)};
}

/// How faithfully a BV ensemble represents a reference pair: max normalized
/// deviation of the time-derivative pairings from mu and of the spatial ones
/// from nu, the moving/flat mass split, and the worst mismatch between jump
/// transition directions and the supplied unit flux direction (sampled at
/// the transition edge midpoints; skipped when no sampler is given).
struct RepresentationReport {
  double mu_dev = 0.0;
  double nu_dev = 0.0;
  double jump_dir_dev = 0.0;
  double mass_plus = 0.0;
  double mass_zero = 0.0;
  int n_basis = 0;
  bool jumps_checked = false;

  bool pass(double tol) const { return n_basis > 0 && mu_dev <= tol && nu_dev <= tol; }
};

using FluxDirection =
    std::function<void(double, std::span<const double>, std::span<double>)>;

inline RepresentationReport bv_representation(const BVSuperposition& eta,
                                              const TestBasis& basis,
                                              const SymbolicMeasure& mu_ref,
                                              const SymbolicMeasure& nu_ref,
                                              const FluxDirection& flux_dir = {}) {
  validate(eta);
  const std::size_t d = basis.axes.size() - 1;
  for (const ABVCurve& u : eta.curves)
    if (u.values.front().size() != d)
      throw std::invalid_argument("bv superposition: curve/basis dimension mismatch");
  const AxisBreaks br = basis.breaks();
  const double proxy = basis.c1_norm_proxy();

  RepresentationReport rep;
  rep.n_basis = basis.total();
  for (int k = 0; k < basis.total(); ++k) {
    for (std::size_t slot = 0; slot <= d; ++slot) {
      auto f = [&](double t, std::span<const double> x, std::span<double> out) {
        out[slot] = basis.value(k, t, x);
      };
      double pairing = 0.0;
      for (std::size_t j = 0; j < eta.curves.size(); ++j)
        pairing += eta.weights[j] * theta_u(eta.curves[j], f, br);
      if (slot == 0) {
        const double ref = pair_symbolic(
            mu_ref,
            [&](double t, std::span<const double> x, std::span<double> out) {
              out[0] = basis.value(k, t, x);
            },
            br);
        rep.mu_dev = std::max(rep.mu_dev, std::abs(pairing - ref) / proxy);
      } else {
        const double ref = pair_symbolic(
            nu_ref,
            [&](double t, std::span<const double> x, std::span<double> out) {
              out[slot - 1] = basis.value(k, t, x);
            },
            br);
        rep.nu_dev = std::max(rep.nu_dev, std::abs(pairing - ref) / proxy);
      }
    }
  }

  Vec g(d + 1), edge(d), ref_dir(d), mid(d);
  for (std::size_t j = 0; j < eta.curves.size(); ++j) {
    const ABVCurve& u = eta.curves[j];
    const double p = eta.weights[j];
    const DerivativeDecomposition dd = derivative_decomposition(u);
    for (std::size_t i = 0; i + 1 < u.times.size(); ++i) {
      g[0] = 1.0;
      for (std::size_t c = 0; c < d; ++c) g[1 + c] = dd.ac_slope[i][c];
      rep.mass_plus += p * (u.times[i + 1] - u.times[i]) * u.norm(g);
    }
    for (const JumpTransition& jt : u.jumps) {
      rep.mass_zero += p * jt.length;
      if (!flux_dir) continue;
      for (std::size_t e = 0; e + 1 < jt.path.size(); ++e) {
        double len = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          edge[c] = jt.path[e + 1][c] - jt.path[e][c];
          mid[c] = 0.5 * (jt.path[e][c] + jt.path[e + 1][c]);
          len += edge[c] * edge[c];
        }
        len = std::sqrt(len);
        if (len == 0.0) continue;
        std::fill(ref_dir.begin(), ref_dir.end(), 0.0);
        flux_dir(jt.t, mid, std::span<double>(ref_dir));
        double dev = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double delta = edge[c] / len - ref_dir[c];
          dev += delta * delta;
        }
        rep.jump_dir_dev = std::max(rep.jump_dir_dev, std::sqrt(dev));
      }
    }
  }
  rep.jumps_checked = static_cast<bool>(flux_dir);
  return rep;
}

}  // namespace ceflow
