#pragma once

// Uniform tensor grids of scalar or vector samples with clamped multilinear
// interpolation. Axis 0 is time when the field lives over (t, x); purely
// spatial fields just use the axes they need.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "ceflow/common.hpp"

namespace ceflow {

struct GridAxis {
  double lo = 0.0;
  double h = 1.0;
  int n = 2;  // node count, >= 2

  double hi() const { return lo + h * (n - 1); }
  double coord(int i) const { return lo + h * i; }
};

struct GridField {
  std::vector<GridAxis> axes;
  int comps = 1;
  Vec values;  // node-major, last axis fastest, then component

  static constexpr std::size_t kMaxAxes = 8;

  std::size_t node_count() const {
    std::size_t n = 1;
    for (const GridAxis& a : axes) n *= static_cast<std::size_t>(a.n);
    return n;
  }

  void allocate() {
    if (axes.empty() || axes.size() > kMaxAxes)
      throw std::invalid_argument("grid: axis count out of range");
    for (const GridAxis& a : axes)
      if (a.n < 2 || !(a.h > 0.0)) throw std::invalid_argument("grid: bad axis");
    if (comps < 1) throw std::invalid_argument("grid: comps < 1");
    values.assign(node_count() * static_cast<std::size_t>(comps), 0.0);
  }

  std::size_t flat(std::span<const int> idx) const {
    std::size_t f = 0;
    for (std::size_t a = 0; a < axes.size(); ++a)
      f = f * static_cast<std::size_t>(axes[a].n) + static_cast<std::size_t>(idx[a]);
    return f;
  }

  Box cover() const {
    Box b;
    for (const GridAxis& a : axes) {
      b.lo.push_back(a.lo);
      b.hi.push_back(a.hi());
    }
    return b;
  }

  /// Multilinear interpolation at p (size = axes), coordinates clamped to the
  /// cover box; writes `comps` values.
  void eval(std::span<const double> p, std::span<double> out) const {
    const std::size_t m = axes.size();
    std::array<int, kMaxAxes> base{};
    std::array<double, kMaxAxes> fr{};
    for (std::size_t a = 0; a < m; ++a) {
      double z = (p[a] - axes[a].lo) / axes[a].h;
      if (!(z > 0.0)) z = 0.0;
      const double top = static_cast<double>(axes[a].n - 1);
      if (z > top) z = top;
      int i = static_cast<int>(z);
      if (i > axes[a].n - 2) i = axes[a].n - 2;
      base[a] = i;
      fr[a] = z - i;
    }
    for (int c = 0; c < comps; ++c) out[c] = 0.0;
    for (unsigned corner = 0; corner < (1u << m); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (std::size_t a = 0; a < m; ++a) {
        const unsigned bit = (corner >> a) & 1u;
        w *= bit ? fr[a] : 1.0 - fr[a];
        idx = idx * static_cast<std::size_t>(axes[a].n) + static_cast<std::size_t>(base[a]) + bit;
      }
      if (w == 0.0) continue;
      const std::size_t at = idx * static_cast<std::size_t>(comps);
      for (int c = 0; c < comps; ++c) out[c] += w * values[at + static_cast<std::size_t>(c)];
    }
  }

  double eval1(std::span<const double> p) const {
    double v = 0.0;
    eval(p, std::span<double>(&v, 1));
    return v;
  }

  /// Visits every node: f(idx span, coord span, flat node index).
  template <class F>
  void for_each_node(F&& f) const {
    const std::size_t m = axes.size();
    std::vector<int> idx(m, 0);
    Vec coord(m);
    for (std::size_t a = 0; a < m; ++a) coord[a] = axes[a].lo;
    std::size_t node = 0;
    while (true) {
      f(std::span<const int>(idx), std::span<const double>(coord), node);
      ++node;
      std::size_t a = m;
      while (a > 0) {
        --a;
        if (++idx[a] < axes[a].n) {
          coord[a] = axes[a].coord(idx[a]);
          break;
        }
        idx[a] = 0;
        coord[a] = axes[a].lo;
        if (a == 0) return;
      }
    }
  }
};

}  // namespace ceflow
