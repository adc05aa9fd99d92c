#pragma once

// Shared numeric helpers: deterministic reductions and piecewise Gauss quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ceflow {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Deterministic pairwise (cascade) summation; order-independent across
/// chunked evaluation as long as the element order is fixed.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

/// Axis-aligned box in n coordinates (first axis is time unless noted).
struct Box {
  Vec lo, hi;

  std::size_t dims() const { return lo.size(); }

  bool contains(std::span<const double> p, double pad = 0.0) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (p[i] < lo[i] - pad || p[i] > hi[i] + pad) return false;
    return true;
  }

  void absorb(std::span<const double> p) {
    if (lo.empty()) {
      lo.assign(p.begin(), p.end());
      hi.assign(p.begin(), p.end());
      return;
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  }
};

namespace quad {

// 5-point Gauss-Legendre on [-1,1]; exact for polynomials up to degree 9.
inline constexpr std::array<double, 5> gl5_x = {
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> gl5_w = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891};

template <class F>
double gl5(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += gl5_w[i] * f(mid + half * gl5_x[i]);
  return s * half;
}

/// Integrate f over [a,b], cutting at the interior points of `cuts` so each
/// Gauss panel sees a single smooth (for our uses, polynomial) piece.
template <class F>
double piecewise_gl5(F&& f, double a, double b, std::span<const double> cuts) {
  if (!(b > a)) return 0.0;
  std::vector<double> pts;
  pts.reserve(cuts.size() + 2);
  pts.push_back(a);
  for (double c : cuts)
    if (c > a + 1e-14 && c < b - 1e-14) pts.push_back(c);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    if (pts[i + 1] > pts[i]) s += gl5(f, pts[i], pts[i + 1]);
  return s;
}

/// Parameters in (0,1) where the affine path p0 + u*(p1-p0) crosses any value
/// in axis_breaks[axis]; used to split integrands into polynomial pieces.
inline std::vector<double> path_cuts(std::span<const double> p0,
                                     std::span<const double> p1,
                                     std::span<const std::vector<double>> axis_breaks) {
  std::vector<double> cuts;
  const std::size_t n = std::min(p0.size(), axis_breaks.size());
  for (std::size_t ax = 0; ax < n; ++ax) {
    const double d = p1[ax] - p0[ax];
    if (std::abs(d) < 1e-300) continue;
    for (double brk : axis_breaks[ax]) {
      const double u = (brk - p0[ax]) / d;
      if (u > 1e-14 && u < 1.0 - 1e-14) cuts.push_back(u);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  return cuts;
}

}  // namespace quad
}  // namespace ceflow
