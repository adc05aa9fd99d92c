#pragma once

// Smoothing, velocity extraction and characteristic flow for measure pairs.
//
// The pipeline: mollify a (density, flux) pair onto a uniform grid, divide to
// get a direction field of unit joint norm, integrate its characteristics in
// arc parameter, and collect the visited states as atomic occupation measures
// whose marginals can be checked against the grid densities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "ceflow/basis.hpp"
#include "ceflow/common.hpp"
#include "ceflow/curves.hpp"
#include "ceflow/grid_field.hpp"
#include "ceflow/measure.hpp"
#include "ceflow/norms.hpp"
#include "ceflow/symbolic.hpp"
#include "ceflow/weak_form.hpp"

namespace ceflow {

namespace detail {

/// Backward-in-time bump on (0, eps): 30/eps * v^2 (1-v)^2 with v = u/eps.
/// Unit mass, C^1 at both ends of the support.
inline double bump_kernel(double u, double eps) {
  const double v = u / eps;
  if (v <= 0.0 || v >= 1.0) return 0.0;
  const double w = v * (1.0 - v);
  return 30.0 / eps * w * w;
}

/// Integral of bump_kernel over (0, u).
inline double bump_cdf(double u, double eps) {
  const double v = u / eps;
  if (v <= 0.0) return 0.0;
  if (v >= 1.0) return 1.0;
  return ((6.0 * v - 15.0) * v + 10.0) * v * v * v;
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Isotropic Gaussian density at x centred at p, width sigma per axis.
inline double gauss_point(std::span<const double> x, std::span<const double> p,
                          double sigma) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - p[i];
    q += d * d;
  }
  const double s2 = sigma * sigma;
  return std::pow(2.0 * std::numbers::pi * s2, -0.5 * double(x.size())) *
         std::exp(-0.5 * q / s2);
}

/// Exact arc-length integral of the Gaussian kernel centred at x over the
/// segment [a, b]. Splitting x - a into tangential offset m and transverse
/// distance D factorises the integral into a 1-d normal CDF difference.
inline double gauss_line(std::span<const double> x, std::span<const double> a,
                         std::span<const double> b, double sigma) {
  const std::size_t d = x.size();
  double L2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double e = b[i] - a[i];
    L2 += e * e;
  }
  const double L = std::sqrt(L2);
  if (!(L > 0.0)) return 0.0;
  double m = 0.0, P2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double p = x[i] - a[i];
    P2 += p * p;
    m += p * (b[i] - a[i]);
  }
  m /= L;
  const double D2 = std::max(0.0, P2 - m * m);
  const double s2 = sigma * sigma;
  const double amp = std::pow(2.0 * std::numbers::pi * s2, -0.5 * double(d - 1)) *
                     std::exp(-0.5 * D2 / s2);
  return amp * (normal_cdf((L - m) / sigma) - normal_cdf(-m / sigma));
}

/// Kernel-smoothed weight of a time part at clock time t. Single panel is
/// exact: the integrand is a quintic.
inline double time_factor(const TimePart& tp, double eps, double t) {
  if (const auto* leb = std::get_if<TimeLebesgue>(&tp)) {
    const double lo = std::max(leb->a, t - eps);
    const double hi = std::min(leb->b, t);
    if (!(hi > lo)) return 0.0;
    return quad::gl5([&](double r) { return bump_kernel(t - r, eps) * leb->density(r); },
                     lo, hi);
  }
  return bump_kernel(t - std::get<TimeDirac>(tp).t, eps);
}

/// Kernel-smoothed spatial factor (wd components) of a space part at x.
inline void space_factor(const SpacePart& sp, double sigma, std::span<const double> x,
                         std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (const auto* at = std::get_if<SpaceAtoms>(&sp)) {
    for (std::size_t j = 0; j < at->points.size(); ++j) {
      const double g = gauss_point(x, at->points[j], sigma);
      const Vec& w = at->weights[j];
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[c] * g;
    }
    return;
  }
  if (const auto* pl = std::get_if<SpacePolyline>(&sp)) {
    for (std::size_t e = 0; e + 1 < pl->points.size(); ++e) {
      const Vec& a = pl->points[e];
      const Vec& b = pl->points[e + 1];
      double len2 = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) len2 += (b[i] - a[i]) * (b[i] - a[i]);
      const double len = std::sqrt(len2);
      if (!(len > 0.0)) continue;
      const double s = gauss_line(x, a, b, sigma) * pl->orientation / len;
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += s * (b[c] - a[c]);
    }
    return;
  }
  const auto& seg = std::get<SpaceSegment>(sp);
  out[0] += gauss_line(x, seg.a, seg.b, sigma);
}

inline void absorb_space(const SpacePart& sp, Box& bx) {
  if (const auto* at = std::get_if<SpaceAtoms>(&sp)) {
    for (const Vec& p : at->points) bx.absorb(p);
  } else if (const auto* pl = std::get_if<SpacePolyline>(&sp)) {
    for (const Vec& p : pl->points) bx.absorb(p);
  } else {
    const auto& seg = std::get<SpaceSegment>(sp);
    bx.absorb(seg.a);
    bx.absorb(seg.b);
  }
}

}  // namespace detail

/// Grid request for mollify. Negative entries are derived from the data:
/// t_end from the measures' time extent, margin as 6 * eps + 2 * h.
struct MollifyGrid {
  double h = 0.01;
  double margin = -1.0;
  double t_end = -1.0;
};

/// Smooth grid densities of a measure pair plus datum. mu is scalar over
/// (t, x), nu carries the d flux components on the same grid, mu0 lives on
/// the spatial axes alone.
struct MollifiedFields {
  GridField mu;
  GridField nu;
  GridField mu0;
  double eps = 0.0;
  double h = 0.0;
  bool narrow_warning = false;  // kernel width below grid step

  int dim() const { return int(mu.axes.size()) - 1; }
};

namespace detail {

inline MollifiedFields assemble_fields(double eps, const MollifyGrid& g, double t_end,
                                       const Box& space) {
  if (!(eps > 0.0)) throw std::invalid_argument("mollify: eps must be positive");
  if (!(g.h > 0.0)) throw std::invalid_argument("mollify: grid step must be positive");
  if (!(t_end > 0.0)) throw std::invalid_argument("mollify: empty time window");
  const double margin = g.margin >= 0.0 ? g.margin : 6.0 * eps + 2.0 * g.h;

  MollifiedFields out;
  out.eps = eps;
  out.h = g.h;
  out.narrow_warning = eps < g.h;

  GridAxis tax;
  tax.lo = 0.0;
  tax.n = std::max<int>(2, int(std::llround(t_end / g.h)) + 1);
  tax.h = t_end / double(tax.n - 1);  // snapped so the last node is t_end exactly
  out.mu.axes.push_back(tax);
  out.nu.axes.push_back(tax);
  for (std::size_t a = 0; a < space.lo.size(); ++a) {
    GridAxis ax;
    ax.lo = space.lo[a] - margin;
    ax.h = g.h;
    ax.n = std::max<int>(2, int(std::ceil((space.hi[a] + margin - ax.lo) / g.h)) + 1);
    out.mu.axes.push_back(ax);
    out.nu.axes.push_back(ax);
    out.mu0.axes.push_back(ax);
  }
  out.mu.comps = 1;
  out.nu.comps = int(space.lo.size());
  out.mu0.comps = 1;
  out.mu.allocate();
  out.nu.allocate();
  out.mu0.allocate();
  return out;
}

inline void require_positive(const GridField& mu) {
  for (double v : mu.values)
    if (!(v > 0.0))
      throw std::runtime_error("mollify: smoothed density is not strictly positive on the grid");
}

}  // namespace detail

/// Mollifies (mu, nu, mu0) with the backward bump in time and a Gaussian of
/// width eps per spatial axis. For t < eps the datum feeds in with weight
/// 1 - K(t/eps), extending mu backward in time, so slices keep unit mass.
/// All spatial integrals are closed-form; no quadrature error in space.
inline MollifiedFields mollify(const SymbolicMeasure& mu, const SymbolicMeasure& nu,
                               const SymbolicMeasure& mu0, double eps,
                               MollifyGrid grid = {}) {
  validate(mu);
  validate(nu);
  validate(mu0);
  const int d = mu.dim;
  if (nu.dim != d || mu0.dim != d)
    throw std::invalid_argument("mollify: dimension mismatch");

  double t_end = grid.t_end;
  Box space;
  auto absorb = [&](const SymbolicMeasure& m, bool spans_time) {
    for (const Component& c : m.components) {
      if (spans_time && grid.t_end < 0.0) {
        if (const auto* leb = std::get_if<TimeLebesgue>(&c.time))
          t_end = std::max(t_end, leb->b);
        else
          t_end = std::max(t_end, std::get<TimeDirac>(c.time).t);
      }
      detail::absorb_space(c.space, space);
    }
  };
  absorb(mu, true);
  absorb(nu, true);
  absorb(mu0, false);
  if (space.lo.empty()) throw std::invalid_argument("mollify: no spatial support");
  if (int(space.lo.size()) != d) throw std::invalid_argument("mollify: dimension mismatch");

  MollifiedFields out = detail::assemble_fields(eps, grid, t_end, space);
  const std::size_t sn = out.mu0.node_count();
  const int nt = out.mu.axes[0].n;

  Vec tf(nt), sf;
  auto compute_sf = [&](const SpacePart& sp, std::size_t wd) {
    sf.assign(sn * wd, 0.0);
    out.mu0.for_each_node([&](std::span<const int>, std::span<const double> xc,
                              std::size_t flat) {
      detail::space_factor(sp, eps, xc, std::span<double>(sf).subspan(flat * wd, wd));
    });
  };
  // time x space tensor product: one outer product per component
  auto fill = [&](GridField& target, double scale, std::size_t wd) {
    const std::size_t block = sn * wd;
    for (int ti = 0; ti < nt; ++ti) {
      if (tf[std::size_t(ti)] == 0.0) continue;
      const double a = scale * tf[std::size_t(ti)];
      double* dst = target.values.data() + std::size_t(ti) * block;
      for (std::size_t j = 0; j < block; ++j) dst[j] += a * sf[j];
    }
  };

  for (const Component& c : mu.components) {
    if (detail::space_weight_dim(c.space, d) != 1)
      throw std::invalid_argument("mollify: mu must be scalar");
    for (int ti = 0; ti < nt; ++ti)
      tf[std::size_t(ti)] = detail::time_factor(c.time, eps, out.mu.axes[0].coord(ti));
    compute_sf(c.space, 1);
    fill(out.mu, c.scale, 1);
  }

  for (const Component& c : nu.components) {
    if (std::holds_alternative<SpaceSegment>(c.space))
      throw std::invalid_argument("mollify: flux needs an oriented polyline, not a segment");
    if (detail::space_weight_dim(c.space, d) != std::size_t(d))
      throw std::invalid_argument("mollify: nu weight dimension must match dim");
    for (int ti = 0; ti < nt; ++ti)
      tf[std::size_t(ti)] = detail::time_factor(c.time, eps, out.nu.axes[0].coord(ti));
    compute_sf(c.space, std::size_t(d));
    fill(out.nu, c.scale, std::size_t(d));
  }

  for (const Component& c : mu0.components) {
    const auto* dir = std::get_if<TimeDirac>(&c.time);
    if (dir == nullptr || std::abs(dir->t) > 1e-12)
      throw std::invalid_argument("mollify: datum must be concentrated at time zero");
    if (detail::space_weight_dim(c.space, d) != 1)
      throw std::invalid_argument("mollify: datum must be scalar");
    compute_sf(c.space, 1);
    for (std::size_t j = 0; j < sn; ++j) out.mu0.values[j] += c.scale * sf[j];
    // backward extension: unconsumed kernel mass at small t comes from the datum
    for (int ti = 0; ti < nt; ++ti)
      tf[std::size_t(ti)] = 1.0 - detail::bump_cdf(out.mu.axes[0].coord(ti), eps);
    fill(out.mu, c.scale, 1);
  }

  detail::require_positive(out.mu);
  return out;
}

/// Mollifies already-discretised atomic data. Same kernels, per-atom fill.
inline MollifiedFields mollify(const AtomicVectorMeasure& mu, const AtomicVectorMeasure& nu,
                               const AtomicVectorMeasure& mu0, double eps,
                               MollifyGrid grid = {}) {
  mu.validate();
  nu.validate();
  mu0.validate();
  const int d = mu.dim;
  if ((nu.dim != d && !nu.atoms.empty()) || mu0.dim != d)
    throw std::invalid_argument("mollify: dimension mismatch");
  if (mu.weight_dim() != 1 || mu0.weight_dim() != 1)
    throw std::invalid_argument("mollify: mu and datum must be scalar");
  if (!nu.atoms.empty() && nu.weight_dim() != std::size_t(d))
    throw std::invalid_argument("mollify: nu weight dimension must match dim");

  double t_end = grid.t_end;
  Box space;
  for (const Atom& a : mu.atoms) {
    if (grid.t_end < 0.0) t_end = std::max(t_end, a.t);
    space.absorb(a.x);
  }
  for (const Atom& a : nu.atoms) {
    if (grid.t_end < 0.0) t_end = std::max(t_end, a.t);
    space.absorb(a.x);
  }
  for (const Atom& a : mu0.atoms) {
    if (std::abs(a.t) > 1e-12)
      throw std::invalid_argument("mollify: datum must be concentrated at time zero");
    space.absorb(a.x);
  }
  if (space.lo.empty()) throw std::invalid_argument("mollify: no spatial support");

  MollifiedFields out = detail::assemble_fields(eps, grid, t_end, space);
  const std::size_t sn = out.mu0.node_count();
  const int nt = out.mu.axes[0].n;

  Vec gv(sn);
  auto gauss_row = [&](std::span<const double> p) {
    out.mu0.for_each_node([&](std::span<const int>, std::span<const double> xc,
                              std::size_t flat) {
      gv[flat] = detail::gauss_point(xc, p, eps);
    });
  };

  for (const Atom& a : mu.atoms) {
    gauss_row(a.x);
    for (int ti = 0; ti < nt; ++ti) {
      const double k = detail::bump_kernel(out.mu.axes[0].coord(ti) - a.t, eps);
      if (k == 0.0) continue;
      const double w = k * a.w[0];
      double* dst = out.mu.values.data() + std::size_t(ti) * sn;
      for (std::size_t j = 0; j < sn; ++j) dst[j] += w * gv[j];
    }
  }
  for (const Atom& a : nu.atoms) {
    gauss_row(a.x);
    for (int ti = 0; ti < nt; ++ti) {
      const double k = detail::bump_kernel(out.nu.axes[0].coord(ti) - a.t, eps);
      if (k == 0.0) continue;
      double* dst = out.nu.values.data() + std::size_t(ti) * sn * std::size_t(d);
      for (std::size_t j = 0; j < sn; ++j)
        for (int c = 0; c < d; ++c)
          dst[j * std::size_t(d) + std::size_t(c)] += k * gv[j] * a.w[std::size_t(c)];
    }
  }
  for (const Atom& a : mu0.atoms) {
    gauss_row(a.x);
    for (std::size_t j = 0; j < sn; ++j) out.mu0.values[j] += a.w[0] * gv[j];
    for (int ti = 0; ti < nt; ++ti) {
      const double k = 1.0 - detail::bump_cdf(out.mu.axes[0].coord(ti), eps);
      if (k == 0.0) continue;
      const double w = k * a.w[0];
      double* dst = out.mu.values.data() + std::size_t(ti) * sn;
      for (std::size_t j = 0; j < sn; ++j) dst[j] += w * gv[j];
    }
  }

  detail::require_positive(out.mu);
  return out;
}

/// Spatial integral of a scalar (t, x) field at each time node. Plain h^d
/// rule: Gaussian tails decay below any tolerance inside the grid margin.
inline Vec slice_masses(const GridField& f) {
  if (f.comps != 1 || f.axes.size() < 2)
    throw std::invalid_argument("slice_masses: scalar (t, x) field required");
  std::size_t sn = 1;
  double cell = 1.0;
  for (std::size_t a = 1; a < f.axes.size(); ++a) {
    sn *= std::size_t(f.axes[a].n);
    cell *= f.axes[a].h;
  }
  Vec out(std::size_t(f.axes[0].n), 0.0);
  for (std::size_t ti = 0; ti < out.size(); ++ti) {
    double s = 0.0;
    const double* v = f.values.data() + ti * sn;
    for (std::size_t j = 0; j < sn; ++j) s += v[j];
    out[ti] = s * cell;
  }
  return out;
}

namespace detail {

template <class Node>
double time_space_integral(const GridField& f, Node&& node_value) {
  std::size_t sn = 1;
  double cell = 1.0;
  for (std::size_t a = 1; a < f.axes.size(); ++a) {
    sn *= std::size_t(f.axes[a].n);
    cell *= f.axes[a].h;
  }
  const int nt = f.axes[0].n;
  double total = 0.0;
  for (int ti = 0; ti < nt; ++ti) {
    double s = 0.0;
    for (std::size_t j = 0; j < sn; ++j) s += node_value(std::size_t(ti) * sn + j);
    const double wt = (ti == 0 || ti == nt - 1) ? 0.5 : 1.0;
    total += wt * s;
  }
  return total * cell * f.axes[0].h;
}

}  // namespace detail

/// Total variation of a vector field over (t, x): trapezoid in time, plain
/// rule in space, pointwise norm of the components.
inline double vector_field_mass(const GridField& f, const NormSpec& norm) {
  if (f.axes.size() < 2) throw std::invalid_argument("field mass: (t, x) field required");
  const std::size_t d = std::size_t(f.comps);
  return detail::time_space_integral(f, [&](std::size_t node) {
    return norm(std::span<const double>(f.values.data() + node * d, d));
  });
}

/// Mass of the joint density norm(mu, nu) over (t, x).
inline double joint_field_mass(const GridField& mu, const GridField& nu,
                               const NormSpec& norm) {
  if (mu.comps != 1 || mu.axes.size() != nu.axes.size() || mu.node_count() != nu.node_count())
    throw std::invalid_argument("field mass: grids do not match");
  const std::size_t d = std::size_t(nu.comps);
  return detail::time_space_integral(mu, [&](std::size_t node) {
    return joint_norm(norm, mu.values[node],
                      std::span<const double>(nu.values.data() + node * d, d));
  });
}

/// Pointwise unit-norm direction data over the mollified grid.
struct VelocityField {
  GridField tau;  // scalar time rate
  GridField v;    // d spatial components
  NormSpec norm;

  int dim() const { return v.comps; }
  Box cover() const { return tau.cover(); }

  /// Interpolated direction at (t, x), renormalised so norm((tau, v)) == 1.
  /// Interpolation is multilinear per component; renormalising restores the
  /// nodewise invariant in the cell interiors.
  void eval(double t, std::span<const double> x, std::span<double> out) const {
    std::array<double, GridField::kMaxAxes> pb{};
    pb[0] = t;
    std::copy(x.begin(), x.end(), pb.begin() + 1);
    const std::span<const double> p(pb.data(), 1 + x.size());
    tau.eval(p, out.subspan(0, 1));
    v.eval(p, out.subspan(1));
    const double jn = joint_norm(norm, out[0], out.subspan(1));
    if (jn < 1e-300) {
      out[0] = 1.0;
      std::fill(out.begin() + 1, out.end(), 0.0);
      return;
    }
    for (double& c : out) c /= jn;
  }
};

/// Direction field of the pair: at each node, (1, nu/mu) normalised to unit
/// joint norm. The division is rescaled by the largest component first, so
/// astronomically large nu/mu ratios stay finite; positive homogeneity of
/// the norm makes the result identical.
inline VelocityField velocity(const GridField& mu_eps, const GridField& nu_eps,
                              NormSpec norm = {}) {
  if (mu_eps.comps != 1) throw std::invalid_argument("velocity: mu must be scalar");
  if (mu_eps.node_count() != nu_eps.node_count() || mu_eps.axes.size() != nu_eps.axes.size())
    throw std::invalid_argument("velocity: grids do not match");
  VelocityField f;
  f.norm = norm;
  f.tau.axes = mu_eps.axes;
  f.tau.comps = 1;
  f.tau.allocate();
  f.v.axes = mu_eps.axes;
  f.v.comps = nu_eps.comps;
  f.v.allocate();

  const std::size_t d = std::size_t(nu_eps.comps);
  Vec tmp(1 + d);
  for (std::size_t node = 0; node < mu_eps.node_count(); ++node) {
    const double m = mu_eps.values[node];
    if (!(m > 0.0))
      throw std::runtime_error("velocity: density must be strictly positive");
    const double m_eff = std::max(m, 1e-300);
    double scale = 1.0;
    for (std::size_t c = 0; c < d; ++c)
      scale = std::max(scale, std::abs(nu_eps.values[node * d + c]) / m_eff);
    tmp[0] = 1.0 / scale;
    for (std::size_t c = 0; c < d; ++c)
      tmp[1 + c] = (nu_eps.values[node * d + c] / m_eff) / scale;
    const double jn = joint_norm(norm, tmp[0], std::span<const double>(tmp).subspan(1));
    f.tau.values[node] = tmp[0] / jn;
    for (std::size_t c = 0; c < d; ++c) f.v.values[node * d + c] = tmp[1 + c] / jn;
  }
  return f;
}

/// Integral curve of the autonomous field d(T, Y)/ds = (tau, v)(T, Y).
struct Trajectory {
  Vec s;                    // arc parameter samples, s[0] = 0
  std::vector<Vec> states;  // (T, Y...) per sample
  Vec step_dt;              // per-interval T increments as combined by the
                            // integrator, before accumulation rounds them;
                            // keeps dT alive where tau underflows the ULP of T
  bool truncated = false;   // stopped at the cover boundary
};

/// Fixed-step RK4 in the arc parameter, starting from (t0, x0). Stops at
/// s_max, or earlier when the trajectory leaves the field's cover: crossing
/// the top of the time axis rescales the final step so the last sample lands
/// on the boundary exactly, spatial exits just stop with the flag set.
template <class Field>
Trajectory flow_one(const Field& field, std::span<const double> x0, double s_max,
                    double ds, double t0 = 0.0) {
  if (!(ds > 0.0) || !(s_max >= 0.0))
    throw std::invalid_argument("flow: need ds > 0 and s_max >= 0");
  const Box cover = field.cover();
  const double t_top = cover.hi[0];
  const std::size_t d = x0.size();

  Vec z(1 + d), znext(1 + d), tmp(1 + d);
  Vec k1(1 + d), k2(1 + d), k3(1 + d), k4(1 + d);
  z[0] = t0;
  std::copy(x0.begin(), x0.end(), z.begin() + 1);

  auto rhs = [&](const Vec& state, Vec& k) {
    field.eval(state[0], std::span<const double>(state).subspan(1), std::span<double>(k));
  };
  auto rk4 = [&](double h, double& dt_inc) {
    rhs(z, k1);
    for (std::size_t i = 0; i <= d; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i <= d; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i <= d; ++i) tmp[i] = z[i] + h * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i <= d; ++i) {
      const double inc = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      znext[i] = z[i] + inc;
      if (i == 0) dt_inc = inc;
    }
    // Where the rate swings hard within one step (smoothed near-degenerate
    // regions, where grid interpolation also has slope breaks between cells),
    // the stage-weighted T increment is only ~1e-3 accurate relative to the
    // true integral of tau along the step. T itself does not care (the
    // increment is astronomically small there) but the time-rescaling
    // inversion divides by it, so refine: quadrature of tau along the cubic
    // Hermite interpolant of the step, in eight Gauss panels.
    if (k1[0] > 0.0 && k4[0] > 0.0 && std::abs(std::log(k4[0] / k1[0])) > 0.04) {
      rhs(znext, k3);  // true end-state derivative; stages are spent already
      if (k3[0] > 0.0 && std::abs(std::log(k3[0] / k1[0])) > 0.04) {
        auto tau_on_step = [&](double f) {
          const double f2 = f * f, f3 = f2 * f;
          const double h00 = 2.0 * f3 - 3.0 * f2 + 1.0, h10 = f3 - 2.0 * f2 + f;
          const double h01 = -2.0 * f3 + 3.0 * f2, h11 = f3 - f2;
          for (std::size_t i = 0; i <= d; ++i)
            tmp[i] = h00 * z[i] + h * h10 * k1[i] + h01 * znext[i] + h * h11 * k3[i];
          rhs(tmp, k2);
          return k2[0];
        };
        double mean = 0.0;
        for (int p = 0; p < 8; ++p)
          mean += quad::gl5(tau_on_step, 0.125 * p, 0.125 * (p + 1));
        dt_inc = h * mean;
        znext[0] = z[0] + dt_inc;
      }
    }
  };
  auto outside_space = [&](const Vec& state) {
    for (std::size_t a = 1; a <= d; ++a)
      if (state[a] < cover.lo[a] || state[a] > cover.hi[a]) return true;
    return false;
  };

  Trajectory tr;
  tr.s.push_back(0.0);
  tr.states.push_back(z);
  double s = 0.0;
  while (s < s_max * (1.0 - 1e-15)) {
    const double step = std::min(ds, s_max - s);
    double dt_inc = 0.0;
    rk4(step, dt_inc);
    if (znext[0] > t_top) {
      // secant rescale of the step so T lands on the boundary
      double lam = (t_top - z[0]) / (znext[0] - z[0]);
      if (!(lam > 0.0)) {
        tr.truncated = true;
        break;
      }
      for (int it = 0; it < 3; ++it) {
        lam = std::min(lam, 1.0);
        rk4(step * lam, dt_inc);
        const double drift = znext[0] - t_top;
        if (std::abs(drift) <= 1e-15 * std::max(1.0, std::abs(t_top))) break;
        lam *= (t_top - z[0]) / (znext[0] - z[0]);
        if (!(lam > 0.0)) lam = 1e-12;
      }
      znext[0] = t_top;
      s += step * lam;
      tr.s.push_back(s);
      tr.states.push_back(znext);
      tr.step_dt.push_back(dt_inc);
      tr.truncated = true;
      break;
    }
    s += step;
    tr.s.push_back(s);
    tr.states.push_back(znext);
    tr.step_dt.push_back(dt_inc);
    if (outside_space(znext)) {
      tr.truncated = true;
      break;
    }
    z = znext;
  }
  return tr;
}

template <class Field>
std::vector<Trajectory> flow(const Field& field, const std::vector<Vec>& starts,
                             double s_max, double ds) {
  std::vector<Trajectory> out;
  out.reserve(starts.size());
  for (const Vec& x : starts) out.push_back(flow_one(field, x, s_max, ds));
  return out;
}

/// Classical characteristic in clock time: dX/dt = v/tau. Cross-checks the
/// autonomous parameterisation. Samples are (t, X...) with s holding t.
template <class Field>
Trajectory flow_time(const Field& field, std::span<const double> x0, double t_end,
                     double dt, double t0 = 0.0) {
  if (!(dt > 0.0) || !(t_end >= t0)) throw std::invalid_argument("flow_time: bad step");
  const Box cover = field.cover();
  const std::size_t d = x0.size();
  Vec x(x0.begin(), x0.end()), xn(d), tmp(d), dir(1 + d);
  Vec k1(d), k2(d), k3(d), k4(d);

  auto rhs = [&](double t, const Vec& p, Vec& k) {
    field.eval(t, p, dir);
    if (!(dir[0] > 1e-12)) throw std::runtime_error("flow_time: time rate vanished");
    for (std::size_t c = 0; c < d; ++c) k[c] = dir[1 + c] / dir[0];
  };
  auto outside_space = [&](const Vec& p) {
    for (std::size_t a = 0; a < d; ++a)
      if (p[a] < cover.lo[1 + a] || p[a] > cover.hi[1 + a]) return true;
    return false;
  };

  Trajectory tr;
  double t = t0;
  Vec st(1 + d);
  auto push = [&](double at, const Vec& p) {
    st[0] = at;
    std::copy(p.begin(), p.end(), st.begin() + 1);
    tr.states.push_back(st);
  };
  tr.s.push_back(t);
  push(t, x);
  while (t < t_end - 1e-15 * std::max(1.0, t_end)) {
    const double h = std::min(dt, t_end - t);
    rhs(t, x, k1);
    for (std::size_t c = 0; c < d; ++c) tmp[c] = x[c] + 0.5 * h * k1[c];
    rhs(t + 0.5 * h, tmp, k2);
    for (std::size_t c = 0; c < d; ++c) tmp[c] = x[c] + 0.5 * h * k2[c];
    rhs(t + 0.5 * h, tmp, k3);
    for (std::size_t c = 0; c < d; ++c) tmp[c] = x[c] + h * k3[c];
    rhs(t + h, tmp, k4);
    for (std::size_t c = 0; c < d; ++c)
      xn[c] = x[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    t += h;
    tr.s.push_back(t);
    push(t, xn);
    tr.step_dt.push_back(h);
    if (outside_space(xn)) {
      tr.truncated = true;
      break;
    }
    x = xn;
  }
  return tr;
}

/// Quadrature of S(T) = integral of norm(1, w) in clock time along the
/// trajectory, composed with the trajectory's own time component; returns
/// max_k |S(T_k) - (s_k - s_0)|. Product rule against the recorded exact T
/// increments: each interval contributes dT divided by the mean rate, with
/// the mean taken by composite Simpson over the chord between the recorded
/// states (field resampled at the subdivision points). Resampling is what
/// makes the rule robust where the rate spans twenty orders of magnitude
/// through a smoothed transport jump: endpoint-only rules inherit a
/// percent-level bias from the interpolation slope breaks between grid
/// cells, and raw T differences round to zero there and lose the transit
/// arc entirely.
template <class Field>
double reparam_roundtrip(const Field& field, const Trajectory& tr) {
  const std::size_t n = tr.s.size();
  if (n < 2) return 0.0;
  const std::size_t d = tr.states.front().size() - 1;
  Vec tau(n);
  Vec dir(1 + d), pos(d);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec& st = tr.states[k];
    field.eval(st[0], std::span<const double>(st).subspan(1), std::span<double>(dir));
    tau[k] = dir[0];
  }
  const bool recorded = tr.step_dt.size() == n - 1;

  // 16-subinterval Simpson mean of tau along the chord from state k to k+1;
  // endpoint values are the precomputed samples.
  auto chord_mean = [&](std::size_t k) {
    const Vec& za = tr.states[k];
    const Vec& zb = tr.states[k + 1];
    double sum = tau[k] + tau[k + 1];
    for (int j = 1; j < 16; ++j) {
      const double f = j / 16.0;
      const double t = za[0] + f * (zb[0] - za[0]);
      for (std::size_t i = 0; i < d; ++i) pos[i] = za[1 + i] + f * (zb[1 + i] - za[1 + i]);
      field.eval(t, pos, std::span<double>(dir));
      sum += (j % 2 ? 4.0 : 2.0) * dir[0];
    }
    return sum / 48.0;
  };

  double S = 0.0, worst = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dT = recorded ? tr.step_dt[k] : tr.states[k + 1][0] - tr.states[k][0];
    const double a = tau[k], b = tau[k + 1];
    if (dT > 0.0) {
      if (a > 0.0 && b > 0.0) {
        S += dT / chord_mean(k);
      } else {
        S += 0.5 * (1.0 / std::max(a, 1e-300) + 1.0 / std::max(b, 1e-300)) * dT;
      }
    }
    worst = std::max(worst, std::abs(S - (tr.s[k + 1] - tr.s[0])));
  }
  return worst;
}

/// Systematic inverse-CDF draws from a nonnegative grid density: N evenly
/// spaced quantiles with one shared uniform offset. Deterministic per seed.
inline std::vector<Vec> stratified_starts(const GridField& mu0, int n,
                                          std::uint32_t seed = 42) {
  if (n <= 0) throw std::invalid_argument("stratified_starts: need n > 0");
  if (mu0.comps != 1) throw std::invalid_argument("stratified_starts: scalar density required");
  Vec cdf(mu0.node_count());
  double total = 0.0;
  for (std::size_t j = 0; j < cdf.size(); ++j) {
    total += std::max(0.0, mu0.values[j]);
    cdf[j] = total;
  }
  if (!(total > 0.0)) throw std::runtime_error("stratified_starts: zero mass");

  std::mt19937 rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::vector<Vec> out;
  out.reserve(std::size_t(n));
  std::size_t j = 0;
  for (int k = 0; k < n; ++k) {
    const double target = (double(k) + u) / double(n) * total;
    while (j + 1 < cdf.size() && cdf[j] < target) ++j;
    Vec x(mu0.axes.size());
    std::size_t rem = j;
    for (std::size_t a = mu0.axes.size(); a-- > 0;) {
      const int na = mu0.axes[a].n;
      x[a] = mu0.axes[a].coord(int(rem % std::size_t(na)));
      rem /= std::size_t(na);
    }
    out.push_back(std::move(x));
  }
  return out;
}

/// Uniform-weight atomic datum sitting at the given start points.
inline AtomicVectorMeasure starts_measure(const std::vector<Vec>& starts,
                                          NormSpec norm = {}) {
  AtomicVectorMeasure m;
  m.dim = starts.empty() ? 1 : int(starts.front().size());
  m.norm = norm;
  const double w = starts.empty() ? 0.0 : 1.0 / double(starts.size());
  for (const Vec& x : starts) m.atoms.push_back(Atom{0.0, x, Vec{w}});
  return m;
}

/// Occupation measures of a trajectory ensemble over (s, (t, x)). sigma
/// weights plain arc length; sigma0 and sigma_vec carry the tau and v
/// components of the field along the way, so their density against sigma is
/// the unit direction by construction.
struct SigmaBundle {
  AtomicVectorMeasure sigma;
  AtomicVectorMeasure sigma0;
  AtomicVectorMeasure sigma_vec;
  double s_max = 0.0;
};

/// Discretises the ensemble occupation measures with trapezoid weights along
/// each trajectory. `every` strides the samples (the last one is always
/// kept) to decouple quadrature resolution from the ODE step.
template <class Field>
SigmaBundle build_sigma(const std::vector<Trajectory>& trajs, std::span<const double> weights,
                        const Field& field, double s_max, int every = 1) {
  if (trajs.size() != weights.size())
    throw std::invalid_argument("build_sigma: one weight per trajectory");
  if (every < 1) throw std::invalid_argument("build_sigma: stride must be positive");
  SigmaBundle sb;
  sb.s_max = s_max;
  if (trajs.empty()) return sb;

  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("build_sigma: weights must sum to one");

  const std::size_t aug = trajs.front().states.front().size();  // 1 + d
  const std::size_t d = aug - 1;
  sb.sigma.dim = int(aug);
  sb.sigma0.dim = int(aug);
  sb.sigma_vec.dim = int(aug);

  Vec dir(aug);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Trajectory& tr = trajs[i];
    const std::size_t n = tr.s.size();
    if (n < 2) continue;
    keep.clear();
    for (std::size_t q = 0; q < n; q += std::size_t(every)) keep.push_back(q);
    if (keep.back() != n - 1) keep.push_back(n - 1);

    for (std::size_t a = 0; a < keep.size(); ++a) {
      const double s_prev = a == 0 ? tr.s[keep[0]] : tr.s[keep[a - 1]];
      const double s_next = a + 1 == keep.size() ? tr.s[keep[a]] : tr.s[keep[a + 1]];
      const double wq = 0.5 * (s_next - s_prev) * weights[i];
      if (!(wq > 0.0)) continue;
      const Vec& st = tr.states[keep[a]];
      field.eval(st[0], std::span<const double>(st).subspan(1), std::span<double>(dir));
      const double s_here = tr.s[keep[a]];
      sb.sigma.atoms.push_back(Atom{s_here, st, Vec{wq}});
      sb.sigma0.atoms.push_back(Atom{s_here, st, Vec{wq * dir[0]}});
      Vec wv(d);
      for (std::size_t c = 0; c < d; ++c) wv[c] = wq * dir[1 + c];
      sb.sigma_vec.atoms.push_back(Atom{s_here, st, std::move(wv)});
    }
  }
  return sb;
}

/// Test basis over (s, (t, x)) for the occupation measures. Functions vanish
/// at s = s_max and t = t_top: truncated trajectories park mass on those
/// edges, so one-sided pairings must see zero there. The remaining sides get
/// the usual padding.
inline TestBasis make_augmented_basis(const SigmaBundle& sb, double t_top,
                                      int knots_per_axis = 12, NormSpec norm = {}) {
  if (knots_per_axis < 5) throw std::invalid_argument("basis: need at least 5 knots");
  if (sb.sigma.atoms.empty()) throw std::invalid_argument("basis: empty sigma");

  Box bx;
  for (const Atom& a : sb.sigma.atoms) bx.absorb(a.x);

  auto clamped = [&](double lo_data, double hi_pin) {
    BsplineAxis ax;
    ax.knots = knots_per_axis;
    double span = hi_pin - std::min(lo_data, hi_pin);
    if (!(span > 0.0)) span = 1.0;
    ax.lo = std::min(lo_data, hi_pin) - 0.2 * span;
    ax.h = (hi_pin - ax.lo) / double(knots_per_axis - 1);
    return ax;
  };
  auto padded = [&](double lo_data, double hi_data) {
    BsplineAxis ax;
    ax.knots = knots_per_axis;
    double span = hi_data - lo_data;
    if (!(span > 0.0)) span = 1.0;
    const double pad = 0.2 * span;
    ax.lo = lo_data - pad;
    ax.h = (hi_data + pad - ax.lo) / double(knots_per_axis - 1);
    return ax;
  };

  TestBasis b;
  b.norm = norm;
  b.axes.push_back(clamped(0.0, sb.s_max));       // arc axis
  b.axes.push_back(clamped(bx.lo[0], t_top));     // clock axis
  for (std::size_t a = 1; a < bx.lo.size(); ++a)
    b.axes.push_back(padded(bx.lo[a], bx.hi[a]));
  return b;
}

/// Outcome of comparing ensemble marginals against the grid densities.
struct MarginalReport {
  ResidualReport pairings;      // per basis function, max over mu and nu slots
  double tightness_lhs = 0.0;   // sigma0 mass beyond the arc cutoff
  double tightness_bound = 0.0;
  bool tightness_ok = true;
};

/// Pairs the projected occupation marginals against mu^eps and nu^eps for
/// every basis function over (t, x), and checks that sigma0 keeps only a
/// sliver of mass at arc parameters beyond s_cut (default 10x the time
/// horizon): the Chebyshev-style bound (T/S) |(mu, nu)| + tol.
inline MarginalReport marginal_check(const AtomicVectorMeasure& sigma0,
                                     const AtomicVectorMeasure& sigma_vec,
                                     const GridField& mu_eps, const GridField& nu_eps,
                                     const TestBasis& basis, double s_cut = -1.0,
                                     double tightness_tol = 1e-3) {
  const std::size_t d = std::size_t(nu_eps.comps);
  if (basis.axes.size() != 1 + d)
    throw std::invalid_argument("marginal_check: basis must live over (t, x)");
  const std::size_t nb = std::size_t(basis.total());
  Vec amu(nb, 0.0), anu(nb * d, 0.0), bmu(nb, 0.0), bnu(nb * d, 0.0);
  const Box cov = basis.cover();
  bool cover_ok = true;

  for (const Atom& a : sigma0.atoms) {
    const double t = a.x[0];
    const std::span<const double> x = std::span<const double>(a.x).subspan(1);
    if (!detail::in_cover(cov, t, x)) cover_ok = false;
    basis.for_each_active(t, x, [&](int k, double phi, double, std::span<const double>) {
      amu[std::size_t(k)] += phi * a.w[0];
    });
  }
  for (const Atom& a : sigma_vec.atoms) {
    const double t = a.x[0];
    const std::span<const double> x = std::span<const double>(a.x).subspan(1);
    if (!detail::in_cover(cov, t, x)) cover_ok = false;
    basis.for_each_active(t, x, [&](int k, double phi, double, std::span<const double>) {
      for (std::size_t c = 0; c < d; ++c) anu[std::size_t(k) * d + c] += phi * a.w[c];
    });
  }

  // grid side: trapezoid in time, plain rule in space
  std::size_t sn = 1;
  double cell = 1.0;
  for (std::size_t a = 1; a < mu_eps.axes.size(); ++a) {
    sn *= std::size_t(mu_eps.axes[a].n);
    cell *= mu_eps.axes[a].h;
  }
  const int nt = mu_eps.axes[0].n;
  mu_eps.for_each_node([&](std::span<const int> idx, std::span<const double> coord,
                           std::size_t node) {
    const double wt = (idx[0] == 0 || idx[0] == nt - 1) ? 0.5 : 1.0;
    const double w = wt * cell * mu_eps.axes[0].h;
    const double t = coord[0];
    const std::span<const double> x = coord.subspan(1);
    if (!detail::in_cover(cov, t, x)) cover_ok = false;
    basis.for_each_active(t, x, [&](int k, double phi, double, std::span<const double>) {
      bmu[std::size_t(k)] += phi * w * mu_eps.values[node];
      for (std::size_t c = 0; c < d; ++c)
        bnu[std::size_t(k) * d + c] += phi * w * nu_eps.values[node * d + c];
    });
  });

  Vec raw(nb, 0.0);
  for (std::size_t k = 0; k < nb; ++k) {
    double r = std::abs(amu[k] - bmu[k]);
    for (std::size_t c = 0; c < d; ++c)
      r = std::max(r, std::abs(anu[k * d + c] - bnu[k * d + c]));
    raw[k] = r;
  }

  MarginalReport rep;
  detail::finalize_report(rep.pairings, basis, std::move(raw));
  rep.pairings.cover_warning = !cover_ok;

  const double t_top = mu_eps.axes[0].hi();
  const double cut = s_cut > 0.0 ? s_cut : 10.0 * t_top;
  double lhs = 0.0;
  for (const Atom& a : sigma0.atoms)
    if (a.t > cut) lhs += a.w[0];
  rep.tightness_lhs = lhs;
  rep.tightness_bound =
      t_top / cut * joint_field_mass(mu_eps, nu_eps, basis.norm) + tightness_tol;
  rep.tightness_ok = lhs <= rep.tightness_bound;
  return rep;
}

/// Reparameterises a curve by a positive rate function of position: the new
/// parameter is Theta(s) = integral of 1/theta(y(r)) dr, accumulated by the
/// trapezoid over segments refined to sub_step. theta must stay in [1/c, c].
/// Inputs and outputs may run faster than unit speed (a rate above one
/// produces exactly that), so only structure is checked, not the speed cap.
template <class Theta>
LipCurve rescale_curve(const LipCurve& y, Theta&& theta, double c = 100.0,
                       double sub_step = 1e-3) {
  if (y.s.empty() || y.s.size() != y.points.size())
    throw std::invalid_argument("rescale: breakpoints/points mismatch");
  if (y.points.front().size() < 2)
    throw std::invalid_argument("rescale: points need (t, x) entries");
  for (std::size_t i = 1; i < y.s.size(); ++i) {
    if (y.points[i].size() != y.points.front().size())
      throw std::invalid_argument("rescale: ragged points");
    if (y.s[i] < y.s[i - 1]) throw std::invalid_argument("rescale: breakpoints decreasing");
    if (y.points[i][0] < y.points[i - 1][0])
      throw std::invalid_argument("rescale: time component decreasing");
  }
  if (!(c >= 1.0)) throw std::invalid_argument("rescale: need c >= 1");
  if (!(sub_step > 0.0)) throw std::invalid_argument("rescale: need sub_step > 0");

  auto rate_at = [&](const Vec& p) {
    const double r = theta(std::span<const double>(p));
    if (!(r >= 1.0 / c * (1.0 - 1e-12)) || !(r <= c * (1.0 + 1e-12)))
      throw std::domain_error("rescale: rate outside admissible band");
    return r;
  };

  LipCurve out;
  out.norm = y.norm;
  out.s.push_back(0.0);
  out.points.push_back(y.points.front());
  double acc = 0.0;
  double prev_rate = rate_at(y.points.front());
  Vec p(y.points.front().size());

  for (std::size_t i = 0; i + 1 < y.s.size(); ++i) {
    const double len = y.s[i + 1] - y.s[i];
    if (!(len > 0.0)) continue;
    const int pieces = std::max(1, int(std::ceil(len / sub_step)));
    for (int q = 1; q <= pieces; ++q) {
      const double f = double(q) / double(pieces);
      for (std::size_t cidx = 0; cidx < p.size(); ++cidx)
        p[cidx] = y.points[i][cidx] + f * (y.points[i + 1][cidx] - y.points[i][cidx]);
      const double r = rate_at(p);
      acc += len / double(pieces) * 0.5 * (1.0 / prev_rate + 1.0 / r);
      out.s.push_back(acc);
      out.points.push_back(p);
      prev_rate = r;
    }
  }
  return out;
}

}  // namespace ceflow
