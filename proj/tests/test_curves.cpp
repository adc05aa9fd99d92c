#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "ceflow/curves.hpp"

using namespace ceflow;

namespace {

// Unit-speed curve with exact flat-t runs: time increments are either
// bitwise zero (transition edges) or bounded away from zero, and each
// parameter increment is the norm of the step, so the normalized class is
// hit exactly up to accumulation rounding.
LipCurve random_normalized(std::mt19937& rng, int d, int nseg, double jump_prob = 0.35) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  LipCurve y;
  y.s = {0.0};
  Vec p(d + 1, 0.0);
  for (int k = 1; k <= d; ++k) p[k] = U(rng);
  y.points.push_back(p);
  Vec e(d + 1);
  for (int i = 0; i < nseg; ++i) {
    const bool jump = U(rng) < jump_prob;
    e[0] = jump ? 0.0 : 0.05 + 0.3 * U(rng);
    for (int k = 1; k <= d; ++k) e[k] = 0.6 * (U(rng) - 0.5);
    if (jump) e[1] += e[1] < 0.0 ? -0.1 : 0.1;  // transition edges never degenerate
    y.s.push_back(y.s.back() + y.norm(e));
    for (int k = 0; k <= d; ++k) p[k] += e[k];
    y.points.push_back(p);
  }
  return y;
}

// Waits at x = 0 until tbar, crosses to x = 1 instantaneously, then waits.
LipCurve departure_curve(double tbar) {
  LipCurve y;
  y.s = {0.0, tbar, tbar + 1.0, 2.0};
  y.points = {{0.0, 0.0}, {tbar, 0.0}, {tbar, 1.0}, {1.0, 1.0}};
  return y;
}

ABVCurve handmade_abv() {
  ABVCurve u;
  u.times = {0.0, 0.5, 1.25};
  u.values = {{0.0, 0.0}, {0.25, 1.0}, {1.0, 1.0}};
  JumpTransition j0;
  j0.t = 0.0;
  j0.path = {{0.0, 0.0}, {0.5, 0.0}, {0.5, 0.25}};
  j0.length = 0.75;
  JumpTransition j1;
  j1.t = 0.5;
  j1.path = {{0.25, 1.0}, {0.25, 0.5}};
  j1.length = 0.5;
  u.jumps = {j0, j1};
  return u;
}

AxisBreaks breaks_for(int d) {
  AxisBreaks br;
  br.t = {0.2, 0.9};
  br.x.assign(d, Vec{0.1});
  return br;
}

// Globally polynomial test value, so both pairing routes integrate exactly.
void poly_field(double t, std::span<const double> x, std::span<double> out) {
  out[0] = 0.3 - t * t + 0.7 * x[0];
  for (std::size_t k = 0; k < x.size(); ++k)
    out[k + 1] = 1.0 + t * x[k] - 0.5 * x[k] * x[k];
}

}  // namespace

TEST(CurveValidate, RejectsMalformedCurves) {
  LipCurve ok = departure_curve(0.25);
  EXPECT_NO_THROW(validate(ok));
  EXPECT_TRUE(is_normalized(ok));

  LipCurve fast = ok;
  fast.points[1][0] = 0.5;  // segment speed 2 on [0, 0.25]
  EXPECT_THROW(validate(fast), std::invalid_argument);

  LipCurve back = ok;
  back.points[3][0] = 0.1;  // time decreases on the last segment
  EXPECT_THROW(validate(back), std::invalid_argument);

  LipCurve shifted = ok;
  shifted.s[0] = 0.5;
  EXPECT_THROW(validate(shifted), std::invalid_argument);

  LipCurve ragged = ok;
  ragged.points[2] = {0.25};
  EXPECT_THROW(validate(ragged), std::invalid_argument);
}

TEST(CurveValidate, RejectsMalformedTransitions) {
  ABVCurve u = handmade_abv();
  EXPECT_NO_THROW(validate(u));

  ABVCurve off_grid = u;
  off_grid.jumps[1].t = 0.3;
  EXPECT_THROW(validate(off_grid), std::invalid_argument);

  ABVCurve bad_len = u;
  bad_len.jumps[0].length = 0.9;
  EXPECT_THROW(validate(bad_len), std::invalid_argument);

  ABVCurve detached = u;
  detached.jumps[1].path[0] = {0.5, 1.0};
  EXPECT_THROW(validate(detached), std::invalid_argument);

  ABVCurve stub = u;
  stub.jumps[0].path.resize(1);
  EXPECT_THROW(validate(stub), std::invalid_argument);
}

TEST(CurveTransforms, RoundTripFromLip) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 3;
    const LipCurve y = random_normalized(rng, d, 8 + trial % 17);
    const LipCurve back = to_lip(to_abv(y));
    ASSERT_EQ(back.s.size(), y.s.size());
    EXPECT_TRUE(is_normalized(back));
    for (std::size_t i = 0; i < y.s.size(); ++i) {
      EXPECT_NEAR(back.s[i], y.s[i], 1e-12 * (1.0 + y.s_end()));
      for (std::size_t k = 0; k < y.points[i].size(); ++k)
        EXPECT_EQ(back.points[i][k], y.points[i][k]);  // values are copied, not recomputed
    }
  }
}

TEST(CurveTransforms, RoundTripFromAbv) {
  const ABVCurve u = handmade_abv();
  const ABVCurve back = to_abv(to_lip(u));
  ASSERT_EQ(back.times.size(), u.times.size());
  ASSERT_EQ(back.jumps.size(), u.jumps.size());
  for (std::size_t i = 0; i < u.times.size(); ++i) {
    EXPECT_EQ(back.times[i], u.times[i]);
    EXPECT_EQ(back.values[i], u.values[i]);
  }
  for (std::size_t j = 0; j < u.jumps.size(); ++j) {
    EXPECT_EQ(back.jumps[j].t, u.jumps[j].t);
    EXPECT_EQ(back.jumps[j].path, u.jumps[j].path);
    EXPECT_NEAR(back.jumps[j].length, u.jumps[j].length, 1e-12);
  }
}

TEST(CurveTransforms, TransitionsMatchFlatRuns) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const LipCurve y = random_normalized(rng, 2, 12, 0.5);
    const ABVCurve u = to_abv(y);
    // count maximal flat runs directly on the parametrized curve
    std::size_t runs = 0;
    for (std::size_t i = 0; i + 1 < y.s.size();) {
      std::size_t k = i;
      while (k + 1 < y.s.size() && y.points[k + 1][0] == y.points[i][0]) ++k;
      if (k > i) ++runs;
      i = k > i ? k : i + 1;
    }
    EXPECT_EQ(u.jumps.size(), runs);
    for (const JumpTransition& j : u.jumps) {
      const SBounds b = s_bounds(y, j.t);
      EXPECT_NEAR(b.s_plus - b.s_minus, j.length, 1e-12 * (1.0 + y.s_end()));
    }
  }
}

TEST(CurveTransforms, RejectsNonUnitSpeed) {
  LipCurve slow;
  slow.s = {0.0, 2.0};
  slow.points = {{0.0, 0.0}, {1.0, 0.0}};
  EXPECT_NO_THROW(validate(slow));
  EXPECT_FALSE(is_normalized(slow));
  EXPECT_THROW(to_abv(slow), std::invalid_argument);
}

TEST(SBounds, DepartureCurveConventions) {
  const LipCurve y = departure_curve(0.25);
  const SBounds mid = s_bounds(y, 0.25);
  EXPECT_NEAR(mid.s_minus, 0.25, 1e-15);
  EXPECT_NEAR(mid.s_plus, 1.25, 1e-15);

  // nothing earlier than t = 0: sup over the empty set is 0, and the first
  // strictly later level starts immediately
  const SBounds zero = s_bounds(y, 0.0);
  EXPECT_EQ(zero.s_minus, 0.0);
  EXPECT_NEAR(zero.s_plus, 0.0, 1e-15);

  // nothing later than the final time: inf over the empty set is s_end
  const SBounds one = s_bounds(y, 1.0);
  EXPECT_NEAR(one.s_minus, 2.0, 1e-15);
  EXPECT_EQ(one.s_plus, 2.0);

  EXPECT_THROW(s_bounds(y, -0.1), std::out_of_range);
  EXPECT_THROW(s_bounds(y, 1.1), std::out_of_range);
}

TEST(SBounds, FlatRunAtTimeZero) {
  LipCurve y;
  y.s = {0.0, 1.0, 2.0};
  y.points = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  const SBounds b = s_bounds(y, 0.0);
  EXPECT_EQ(b.s_minus, 0.0);
  EXPECT_NEAR(b.s_plus, 1.0, 1e-15);
}

TEST(SBounds, MatchArcWindowsAfterTransform) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int d = 1 + trial % 3;
    const LipCurve y = random_normalized(rng, d, 10);
    const ABVCurve u = to_abv(y);
    Vec probes = {u.times.front(), u.times.back()};
    for (std::size_t i = 1; i < u.times.size(); ++i)
      probes.push_back(0.5 * (u.times[i - 1] + u.times[i]));
    for (const JumpTransition& j : u.jumps) probes.push_back(j.t);
    for (double t : probes) {
      const SBounds a = s_bounds(y, t);
      const SBounds b = l_bounds(u, t);
      EXPECT_NEAR(a.s_minus, b.s_minus, 1e-10);
      EXPECT_NEAR(a.s_plus, b.s_plus, 1e-10);
    }
  }
}

TEST(SkeletonLimits, DepartureCurve) {
  const ABVCurve u = to_abv(departure_curve(0.25));
  const auto [l0, r0] = skeleton_limits(u, 0.25);
  EXPECT_NEAR(l0[0], 0.0, 1e-15);
  EXPECT_NEAR(r0[0], 1.0, 1e-15);

  const auto [l1, r1] = skeleton_limits(u, 0.6);  // inside the trailing wait
  EXPECT_NEAR(l1[0], 1.0, 1e-15);
  EXPECT_EQ(l1, r1);

  const auto [l2, r2] = skeleton_limits(u, 0.1);  // before the transition
  EXPECT_NEAR(l2[0], 0.0, 1e-15);
  EXPECT_EQ(l2, r2);
  EXPECT_THROW(skeleton_limits(u, 1.5), std::out_of_range);
}

TEST(DerivativeDecomposition, ReassemblesSkeleton) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 1 + trial % 3;
    const LipCurve y = random_normalized(rng, d, 12, 0.45);
    const ABVCurve u = to_abv(y);
    const DerivativeDecomposition dd = derivative_decomposition(u);
    ASSERT_EQ(dd.ac_slope.size() + 1, u.times.size());
    ASSERT_EQ(dd.jump_disp.size(), u.jumps.size());

    Vec cur = u.values.front();
    std::size_t jn = 0;
    double arc = 0.0;
    Vec step(d + 1);
    for (std::size_t i = 1; i < u.times.size(); ++i) {
      EXPECT_EQ(dd.cantor[i - 1], Vec(d, 0.0));
      if (jn < dd.jump_times.size() && dd.jump_times[jn] == u.times[i - 1]) {
        for (int k = 0; k < d; ++k) cur[k] += dd.jump_disp[jn][k];
        arc += u.jumps[jn].length;
        ++jn;
      }
      const double dt = u.times[i] - u.times[i - 1];
      step[0] = dt;
      for (int k = 0; k < d; ++k) {
        cur[k] += dd.ac_slope[i - 1][k] * dt;
        step[k + 1] = dd.ac_slope[i - 1][k] * dt;
        EXPECT_NEAR(cur[k], u.values[i][k], 1e-10);
      }
      arc += u.norm(step);
    }
    if (jn < dd.jump_times.size()) arc += u.jumps[jn].length;  // trailing transition
    EXPECT_NEAR(arc, y.s_end(), 1e-10 * (1.0 + y.s_end()));
  }
}

TEST(CurvePairings, TwoRoutesAgree) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 3;
    const LipCurve y = random_normalized(rng, d, 10);
    const AxisBreaks br = breaks_for(d);
    const double via_s = omega_curve(y, poly_field, br);
    const double via_t = theta_u(to_abv(y), poly_field, br);
    EXPECT_NEAR(via_s, via_t, 1e-9 * (1.0 + std::abs(via_s)));
  }
}

TEST(CurvePairings, EndpointIdentities) {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 3;
    const LipCurve y = random_normalized(rng, d, 9);
    const AxisBreaks br = breaks_for(d);
    auto dt_only = [](double, std::span<const double>, std::span<double> out) {
      out[0] = 1.0;
    };
    auto dx0_only = [](double, std::span<const double>, std::span<double> out) {
      out[1] = 1.0;
    };
    const double t_span = y.points.back()[0] - y.points.front()[0];
    const double x_span = y.points.back()[1] - y.points.front()[1];
    EXPECT_NEAR(omega_curve(y, dt_only, br), t_span, 1e-12 * (1.0 + std::abs(t_span)));
    EXPECT_NEAR(theta_u(to_abv(y), dt_only, br), t_span, 1e-12 * (1.0 + std::abs(t_span)));
    EXPECT_NEAR(omega_curve(y, dx0_only, br), x_span, 1e-12 * (1.0 + std::abs(x_span)));
    EXPECT_NEAR(theta_u(to_abv(y), dx0_only, br), x_span, 1e-12 * (1.0 + std::abs(x_span)));
  }
}

TEST(CurvePairings, TimeIntegralOnStaticSkeleton) {
  ABVCurve u;
  u.times = {0.0, 1.0};
  u.values = {{0.7}, {0.7}};
  auto f = [](double t, std::span<const double>, std::span<double> out) { out[0] = t * t; };
  AxisBreaks br;
  br.x.assign(1, Vec{});
  EXPECT_NEAR(theta_u(u, f, br), 1.0 / 3.0, 1e-14);
}

TEST(CurvePairings, TransitionGradientTelescopes) {
  // pairing a gradient field over a transition sees only the endpoints:
  // psi(x) = x0^2 x1 gives psi(b) - psi(a) = 2 for a = (0,0), b = (1,2)
  ABVCurve u;
  u.times = {0.5};
  u.values = {{0.0, 0.0}};
  JumpTransition j;
  j.t = 0.5;
  j.path = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 2.0}};
  j.length = 3.0;
  u.jumps = {j};
  auto grad_psi = [](double, std::span<const double> x, std::span<double> out) {
    out[1] = 2.0 * x[0] * x[1];
    out[2] = x[0] * x[0];
  };
  AxisBreaks br;
  br.x.assign(2, Vec{});
  EXPECT_NEAR(theta_u(u, grad_psi, br), 2.0, 1e-13);
}

TEST(CurvePairings, ClipStopsAtSMax) {
  LipCurve y;
  const double r2 = std::sqrt(2.0);
  y.s = {0.0, r2};
  y.points = {{0.0, 0.0}, {1.0, 1.0}};
  auto f = [](double t, std::span<const double>, std::span<double> out) { out[0] = t; };
  AxisBreaks br;
  br.x.assign(1, Vec{});
  // integral of t dt up to t(s_max) = 1/2: gives t^2/2 = 1/8
  EXPECT_NEAR(omega_curve(y, f, br, 0.5 * r2), 0.125, 1e-14);
  EXPECT_NEAR(omega_curve(y, f, br), 0.5, 1e-14);
}

TEST(CurveMetric, ConstantOffsets) {
  const LipCurve y = departure_curve(0.25);
  EXPECT_EQ(d_metric(y, y), 0.0);

  const double full = 1.0 - std::ldexp(1.0, -20);  // sum of 2^-n over 20 windows
  LipCurve unit = y;
  for (Vec& p : unit.points) p[1] += 1.0;
  EXPECT_NEAR(d_metric(y, unit), full, 1e-14);

  LipCurve half = y;
  for (Vec& p : half.points) p[1] += 0.5;
  EXPECT_NEAR(d_metric(y, half), 0.5 * full, 1e-14);
}

TEST(CurveMetric, LateDivergenceIsDiscounted) {
  LipCurve a;
  a.s = {0.0, 3.0};
  a.points = {{0.0, 0.0}, {3.0, 0.0}};
  LipCurve b;
  b.s = {0.0, 2.0, 3.0, 4.0};
  b.points = {{0.0, 0.0}, {2.0, 0.0}, {2.0, 1.0}, {3.0, 1.0}};
  // identical through the first two windows, separation capped at 1 after
  EXPECT_NEAR(d_metric(a, b), 0.25 - std::ldexp(1.0, -20), 1e-14);
}

TEST(CurveMetric, SymmetryAndTriangle) {
  std::mt19937 rng(29);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 1 + trial % 2;
    const LipCurve a = random_normalized(rng, d, 7);
    const LipCurve b = random_normalized(rng, d, 9);
    const LipCurve c = random_normalized(rng, d, 5);
    const double ab = d_metric(a, b), ba = d_metric(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(d_metric(a, c), ab + d_metric(b, c) + 1e-12);
    EXPECT_GE(ab, 0.0);
  }
}

TEST(CurvePoint, ConstantExtension) {
  const LipCurve y = departure_curve(0.25);
  EXPECT_EQ(curve_point(y, -1.0), y.points.front());
  EXPECT_EQ(curve_point(y, 10.0), y.points.back());
  const Vec mid = curve_point(y, 0.75);  // halfway through the transition
  EXPECT_NEAR(mid[0], 0.25, 1e-15);
  EXPECT_NEAR(mid[1], 0.5, 1e-15);
}

TEST(CurvePredicates, MonotoneCurvesAreInjective) {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const LipCurve y = random_normalized(rng, 1 + trial % 3, 10, 0.0);
    EXPECT_TRUE(injectivity_check(y));
  }
  EXPECT_TRUE(injectivity_check(departure_curve(0.25)));
}

TEST(CurvePredicates, ClosedLoopFailsInjectivity) {
  LipCurve loop;
  loop.s = {0.0, 0.5, 1.5, 2.5, 3.5, 4.5, 5.0};
  loop.points = {{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}, {0.5, 1.0, 0.0}, {0.5, 1.0, 1.0},
                 {0.5, 0.0, 1.0}, {0.5, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  EXPECT_FALSE(injectivity_check(loop));

  LipCurve open_l;  // same corner structure without the closure
  open_l.s = {0.0, 0.5, 1.5, 2.5, 3.0};
  open_l.points = {
      {0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}, {0.5, 1.0, 0.0}, {0.5, 1.0, 1.0}, {1.0, 1.0, 1.0}};
  EXPECT_TRUE(injectivity_check(open_l));
}

TEST(CurvePredicates, BacktrackFailsInjectivity) {
  LipCurve y;
  y.s = {0.0, 0.3, 1.3, 1.8, 2.5};
  y.points = {{0.0, 0.0}, {0.3, 0.0}, {0.3, 1.0}, {0.3, 0.5}, {1.0, 0.5}};
  EXPECT_FALSE(injectivity_check(y));
}

TEST(CurvePredicates, SegmentCheckSeparatesStraightTransitions) {
  EXPECT_TRUE(segment_check(departure_curve(0.25)));

  LipCurve collinear;  // interior vertex on the chord keeps the run straight
  collinear.s = {0.0, 0.5, 1.0, 1.5, 2.0};
  collinear.points = {{0.0, 0.0}, {0.5, 0.0}, {0.5, 0.5}, {0.5, 1.0}, {1.0, 1.0}};
  EXPECT_TRUE(segment_check(collinear));

  LipCurve corner;  // right-angle transition: arc 2, chord sqrt(2)
  corner.s = {0.0, 0.5, 1.5, 2.5, 3.0};
  corner.points = {
      {0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}, {0.5, 1.0, 0.0}, {0.5, 1.0, 1.0}, {1.0, 1.0, 1.0}};
  EXPECT_FALSE(segment_check(corner));

  LipCurve slow;
  slow.s = {0.0, 2.0};
  slow.points = {{0.0, 0.0}, {1.0, 0.0}};
  EXPECT_THROW(segment_check(slow), std::invalid_argument);
}
