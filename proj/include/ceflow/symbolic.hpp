#pragma once

// Exact product-form measures: each component is scale * (time part x space
// part). Time parts are an interval with an affine density, or a Dirac
// instant. Space parts are finite atoms, an oriented polyline carrying
// tangent x length (a line flux), or a plain segment carrying scalar arc
// length. These cover every closed-form fixture in the toolkit; everything
// else is built atomically.
//
// Two consumers with different accuracy needs:
//   discretize      midpoint-rule atoms, first-order pairings, exact masses
//   pair_symbolic   piecewise Gauss-Legendre cut at integrand breakpoints,
//                   exact for piecewise-polynomial test functions

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "ceflow/common.hpp"
#include "ceflow/measure.hpp"
#include "ceflow/norms.hpp"

namespace ceflow {

struct TimeLebesgue {
  double a = 0.0, b = 1.0;
  // density c0 + c1 * t, must be >= 0 on [a, b]
  double c0 = 1.0, c1 = 0.0;

  double density(double t) const { return c0 + c1 * t; }
  double mass() const { return (c0 + 0.5 * c1 * (a + b)) * (b - a); }
};

struct TimeDirac {
  double t = 0.0;
};

using TimePart = std::variant<TimeLebesgue, TimeDirac>;

struct SpaceAtoms {
  std::vector<Vec> points;
  std::vector<Vec> weights;  // one vector weight per point, common dimension
};

/// Oriented polyline flux: vector density = orientation * unit tangent w.r.t.
/// Euclidean arc length H^1 on the polyline.
struct SpacePolyline {
  std::vector<Vec> points;
  double orientation = 1.0;
};

/// Scalar arc-length measure on a single segment.
struct SpaceSegment {
  Vec a, b;
};

using SpacePart = std::variant<SpaceAtoms, SpacePolyline, SpaceSegment>;

struct Component {
  TimePart time;
  SpacePart space;
  double scale = 1.0;
};

struct SymbolicMeasure {
  int dim = 1;
  NormSpec norm;
  std::vector<Component> components;
};

namespace detail {

inline double seg_len(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (b[i] - a[i]) * (b[i] - a[i]);
  return std::sqrt(s);
}

inline std::size_t space_weight_dim(const SpacePart& sp, int dim) {
  if (const auto* at = std::get_if<SpaceAtoms>(&sp))
    return at->weights.empty() ? 1 : at->weights.front().size();
  if (std::holds_alternative<SpacePolyline>(sp)) return static_cast<std::size_t>(dim);
  return 1;
}

}  // namespace detail

inline void validate(const SymbolicMeasure& m) {
  if (m.dim < 1) throw std::invalid_argument("symbolic: dim < 1");
  std::size_t wd = 0;
  for (const Component& c : m.components) {
    if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) {
      if (!(leb->a < leb->b)) throw std::invalid_argument("symbolic: interval needs a < b");
      if (leb->a < 0.0) throw std::invalid_argument("symbolic: interval starts before t = 0");
      if (leb->density(leb->a) < 0.0 || leb->density(leb->b) < 0.0)
        throw std::invalid_argument("symbolic: time density negative on interval");
    } else if (std::get<TimeDirac>(c.time).t < 0.0) {
      throw std::invalid_argument("symbolic: dirac at t < 0");
    }
    const std::size_t cwd = detail::space_weight_dim(c.space, m.dim);
    if (wd == 0) wd = cwd;
    if (cwd != wd) throw std::invalid_argument("symbolic: mixed weight dims across components");
    if (const auto* at = std::get_if<SpaceAtoms>(&c.space)) {
      if (at->points.empty() || at->points.size() != at->weights.size())
        throw std::invalid_argument("symbolic: atoms need matching points/weights");
      for (const Vec& p : at->points)
        if (static_cast<int>(p.size()) != m.dim)
          throw std::invalid_argument("symbolic: atom dim mismatch");
      for (const Vec& w : at->weights)
        if (w.size() != cwd) throw std::invalid_argument("symbolic: ragged atom weights");
    } else if (const auto* pl = std::get_if<SpacePolyline>(&c.space)) {
      if (pl->points.size() < 2) throw std::invalid_argument("symbolic: polyline needs >= 2 vertices");
      bool moved = false;
      for (std::size_t i = 0; i + 1 < pl->points.size(); ++i) {
        if (static_cast<int>(pl->points[i].size()) != m.dim)
          throw std::invalid_argument("symbolic: polyline dim mismatch");
        if (detail::seg_len(pl->points[i], pl->points[i + 1]) > 0.0) moved = true;
      }
      if (!moved) throw std::invalid_argument("symbolic: polyline vertices all coincide");
    } else {
      const auto& sg = std::get<SpaceSegment>(c.space);
      if (static_cast<int>(sg.a.size()) != m.dim || static_cast<int>(sg.b.size()) != m.dim)
        throw std::invalid_argument("symbolic: segment dim mismatch");
      if (detail::seg_len(sg.a, sg.b) == 0.0)
        throw std::invalid_argument("symbolic: degenerate segment");
    }
  }
}

namespace detail {

struct SpaceNode {
  Vec x;
  Vec w;
};

/// Midpoint nodes of a space part, `cells` cells for the continuous kinds.
/// Polyline cells are spread over its segments proportionally to length.
inline std::vector<SpaceNode> space_nodes(const SpacePart& sp, int cells) {
  std::vector<SpaceNode> out;
  if (const auto* at = std::get_if<SpaceAtoms>(&sp)) {
    for (std::size_t j = 0; j < at->points.size(); ++j)
      out.push_back({at->points[j], at->weights[j]});
    return out;
  }
  std::vector<std::pair<Vec, Vec>> segs;  // endpoint pairs
  double orient = 1.0;
  bool scalar = false;
  if (const auto* pl = std::get_if<SpacePolyline>(&sp)) {
    orient = pl->orientation;
    for (std::size_t i = 0; i + 1 < pl->points.size(); ++i)
      if (seg_len(pl->points[i], pl->points[i + 1]) > 0.0)
        segs.emplace_back(pl->points[i], pl->points[i + 1]);
  } else {
    const auto& sg = std::get<SpaceSegment>(sp);
    segs.emplace_back(sg.a, sg.b);
    scalar = true;
  }
  double total = 0.0;
  for (const auto& [a, b] : segs) total += seg_len(a, b);
  for (const auto& [a, b] : segs) {
    const double len = seg_len(a, b);
    const int n = std::max<int>(1, static_cast<int>(std::llround(cells * len / total)));
    for (int k = 0; k < n; ++k) {
      const double u0 = static_cast<double>(k) / n, u1 = static_cast<double>(k + 1) / n;
      SpaceNode node;
      node.x.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        node.x[i] = a[i] + 0.5 * (u0 + u1) * (b[i] - a[i]);
      if (scalar) {
        node.w.assign(1, len / n);
      } else {
        node.w.resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
          node.w[i] = orient * (b[i] - a[i]) / n;
      }
      out.push_back(std::move(node));
    }
  }
  return out;
}

}  // namespace detail

/// Midpoint-rule discretization. `res` is the cell budget per component;
/// product components split it evenly between the time and space factors, so
/// the atom count per component is about `res` and pairings against C^1 test
/// functions converge at first order in 1/res.
inline AtomicVectorMeasure discretize(const SymbolicMeasure& m, int res) {
  if (res < 1) throw std::invalid_argument("discretize: res < 1");
  validate(m);
  AtomicVectorMeasure out{m.dim, m.norm, {}};
  for (const Component& c : m.components) {
    const bool cont_space = !std::holds_alternative<SpaceAtoms>(c.space);
    const bool cont_time = std::holds_alternative<TimeLebesgue>(c.time);
    const int split = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(res)))));
    const int n_time = cont_time ? (cont_space ? split : res) : 1;
    const int n_space = cont_space ? (cont_time ? split : res) : 1;

    std::vector<std::pair<double, double>> tnodes;  // (t, weight)
    if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) {
      const double h = (leb->b - leb->a) / n_time;
      for (int k = 0; k < n_time; ++k) {
        const double tm = leb->a + (k + 0.5) * h;
        tnodes.emplace_back(tm, leb->density(tm) * h);
      }
    } else {
      tnodes.emplace_back(std::get<TimeDirac>(c.time).t, 1.0);
    }

    const auto snodes = detail::space_nodes(c.space, n_space);
    for (const auto& [t, tw] : tnodes)
      for (const auto& sn : snodes) {
        Atom a;
        a.t = t;
        a.x = sn.x;
        a.w = sn.w;
        for (double& w : a.w) w *= c.scale * tw;
        out.atoms.push_back(std::move(a));
      }
  }
  return out;
}

/// Sorted breakpoint values per axis at which the test function loses
/// smoothness; axis 0 is time, axes 1..d are space.
struct AxisBreaks {
  Vec t;
  std::vector<Vec> x;
};

/// Exact pairing <m, f> by piecewise Gauss-Legendre: every 1-D integral is
/// cut at the supplied breakpoints, so piecewise-polynomial f (degree <= 9
/// per variable between breaks) pairs to machine precision.
template <class F>
double pair_symbolic(const SymbolicMeasure& m, F&& f, const AxisBreaks& br) {
  validate(m);
  const std::size_t wd = m.components.empty()
                             ? 1
                             : detail::space_weight_dim(m.components.front().space, m.dim);
  Vec fval(wd);
  Vec pos(m.dim);

  auto eval_dot = [&](double t, std::span<const double> x, std::span<const double> w) {
    std::fill(fval.begin(), fval.end(), 0.0);
    f(t, x, std::span<double>(fval));
    return dot(fval, w);
  };

  Vec terms;
  for (const Component& c : m.components) {
    // spatial pairing at a fixed time
    auto inner = [&](double t) {
      if (const auto* at = std::get_if<SpaceAtoms>(&c.space)) {
        double s = 0.0;
        for (std::size_t j = 0; j < at->points.size(); ++j)
          s += eval_dot(t, at->points[j], at->weights[j]);
        return s;
      }
      std::vector<std::pair<const Vec*, const Vec*>> segs;
      double orient = 1.0;
      bool scalar = false;
      const SpaceSegment* sg = std::get_if<SpaceSegment>(&c.space);
      if (sg) {
        segs.emplace_back(&sg->a, &sg->b);
        scalar = true;
      } else {
        const auto& pl = std::get<SpacePolyline>(c.space);
        orient = pl.orientation;
        for (std::size_t i = 0; i + 1 < pl.points.size(); ++i)
          if (detail::seg_len(pl.points[i], pl.points[i + 1]) > 0.0)
            segs.emplace_back(&pl.points[i], &pl.points[i + 1]);
      }
      double s = 0.0;
      Vec w(scalar ? 1 : m.dim);
      for (const auto& [pa, pb] : segs) {
        if (scalar)
          w[0] = detail::seg_len(*pa, *pb);
        else
          for (int i = 0; i < m.dim; ++i) w[i] = orient * ((*pb)[i] - (*pa)[i]);
        const Vec cuts = quad::path_cuts(*pa, *pb, br.x);
        s += quad::piecewise_gl5(
            [&](double u) {
              for (int i = 0; i < m.dim; ++i) pos[i] = (*pa)[i] + u * ((*pb)[i] - (*pa)[i]);
              return eval_dot(t, pos, w);
            },
            0.0, 1.0, cuts);
      }
      return s;
    };

    double val;
    if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) {
      val = quad::piecewise_gl5([&](double t) { return inner(t) * leb->density(t); },
                                leb->a, leb->b, br.t);
    } else {
      val = inner(std::get<TimeDirac>(c.time).t);
    }
    terms.push_back(c.scale * val);
  }
  return pairwise_sum(terms);
}

/// Total variation mass, exact: product of the factor masses per component.
inline double symbolic_total_variation(const SymbolicMeasure& m) {
  validate(m);
  Vec terms;
  for (const Component& c : m.components) {
    double tm = 1.0;
    if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) tm = leb->mass();
    double sm = 0.0;
    if (const auto* at = std::get_if<SpaceAtoms>(&c.space)) {
      for (const Vec& w : at->weights) sm += m.norm(w);
    } else if (const auto* pl = std::get_if<SpacePolyline>(&c.space)) {
      // density is the Euclidean-unit tangent, so each straight piece
      // contributes its edge vector measured in the ambient norm
      Vec e(m.dim);
      for (std::size_t i = 0; i + 1 < pl->points.size(); ++i) {
        for (int k = 0; k < m.dim; ++k) e[k] = pl->points[i + 1][k] - pl->points[i][k];
        sm += m.norm(e);
      }
      sm *= std::abs(pl->orientation);
    } else {
      const auto& sg = std::get<SpaceSegment>(c.space);
      sm = detail::seg_len(sg.a, sg.b);
    }
    terms.push_back(std::abs(c.scale) * tm * sm);
  }
  return pairwise_sum(terms);
}

/// Bounding box over (t, x) of everything the measure touches.
inline Box symbolic_support_box(const SymbolicMeasure& m) {
  Box b;
  Vec p;
  auto add = [&](double t, const Vec& x) {
    p.assign(1, t);
    p.insert(p.end(), x.begin(), x.end());
    b.absorb(p);
  };
  for (const Component& c : m.components) {
    double t0, t1;
    if (const auto* leb = std::get_if<TimeLebesgue>(&c.time)) {
      t0 = leb->a;
      t1 = leb->b;
    } else {
      t0 = t1 = std::get<TimeDirac>(c.time).t;
    }
    auto each_point = [&](const Vec& x) {
      add(t0, x);
      add(t1, x);
    };
    if (const auto* at = std::get_if<SpaceAtoms>(&c.space))
      for (const Vec& x : at->points) each_point(x);
    else if (const auto* pl = std::get_if<SpacePolyline>(&c.space))
      for (const Vec& x : pl->points) each_point(x);
    else {
      each_point(std::get<SpaceSegment>(c.space).a);
      each_point(std::get<SpaceSegment>(c.space).b);
    }
  }
  return b;
}

}  // namespace ceflow
