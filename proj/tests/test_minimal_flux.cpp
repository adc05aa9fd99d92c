#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "ceflow/measure.hpp"
#include "ceflow/minimal_flux.hpp"
#include "ceflow/simplex.hpp"
#include "ceflow/symbolic.hpp"
#include "oracles.hpp"

using namespace ceflow;

namespace {

std::mt19937_64 rng(42);

std::vector<Vec> circle_polygon(int sides) {
  std::vector<Vec> pts;
  for (int i = 0; i <= sides; ++i) {
    const double th = 2.0 * M_PI * i / sides;
    pts.push_back({std::cos(th), std::sin(th)});
  }
  pts.back() = pts.front();
  return pts;
}

// injective open arc: three quarters of a circle, 12 edges
std::vector<Vec> open_arc() {
  std::vector<Vec> pts;
  for (int i = 0; i <= 12; ++i) {
    const double th = 1.5 * M_PI * i / 12;
    pts.push_back({std::cos(th), std::sin(th)});
  }
  return pts;
}

TestBasis planar_basis(double t_end, int knots = 16) {
  return make_test_basis(Box{{0.0, -1.0, -1.0}, {t_end, 1.0, 1.0}}, t_end, knots);
}

}  // namespace

TEST(SolveLp, UnconstrainedSitsAtLowerBound) {
  LinearProgram lp;
  lp.n = 3;
  lp.c = {1.0, 2.0, 0.5};
  lp.lo.assign(3, 0.0);
  lp.up.assign(3, 1.0);
  const LpResult r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_DOUBLE_EQ(r.objective, 0.0);
  for (double x : r.x) EXPECT_DOUBLE_EQ(x, 0.0);
}

TEST(SolveLp, SingleBindingConstraintForcesOne) {
  // (1 - x) c = 0 with c != 0, i.e. c x = c
  LinearProgram lp;
  lp.n = 1;
  lp.c = {1.0};
  lp.lo = {0.0};
  lp.up = {1.0};
  lp.rows.push_back({{2.5}, Rel::Eq, 2.5});
  const LpResult r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.x[0], 1.0, 1e-12);
}

TEST(SolveLp, MatchesVertexEnumerationOnRandomBoxedPrograms) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> nv(2, 8), nr(1, 3);
  for (int rep = 0; rep < 60; ++rep) {
    const int n = nv(rng), m = nr(rng);
    LinearProgram lp;
    lp.n = n;
    lp.c.resize(n);
    lp.lo.assign(n, 0.0);
    lp.up.assign(n, 1.0);
    for (double& v : lp.c) v = U(rng);
    Vec interior(n);
    for (double& v : interior) v = 0.5 + 0.4 * U(rng);
    std::vector<oracle::OracleRow> orows;
    for (int k = 0; k < m; ++k) {
      LpRow row;
      row.a.resize(n);
      for (double& v : row.a) v = U(rng);
      double mid = 0.0;
      for (int j = 0; j < n; ++j) mid += row.a[j] * interior[j];
      switch (rep % 3) {
        case 0:
          row.rel = Rel::Le;
          row.b = mid + 0.1;
          orows.push_back({row.a, -1e30, row.b});
          break;
        case 1:
          row.rel = Rel::Ge;
          row.b = mid - 0.1;
          orows.push_back({row.a, row.b, 1e30});
          break;
        default:
          row.rel = Rel::Range;
          row.b = mid - 0.05;
          row.b2 = mid + 0.05;
          orows.push_back({row.a, row.b, row.b2});
          break;
      }
      lp.rows.push_back(std::move(row));
    }
    const LpResult r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal) << "rep " << rep;
    const double expect = oracle::lp_vertex_enum(lp.c, lp.lo, lp.up, orows);
    EXPECT_NEAR(r.objective, expect, 1e-9) << "rep " << rep;
  }
}

TEST(SolveLp, DetectsInfeasibleAndUnbounded) {
  LinearProgram lp;
  lp.n = 1;
  lp.c = {0.0};
  lp.lo = {0.0};
  lp.up = {1.0};
  lp.rows.push_back({{1.0}, Rel::Ge, 2.0});
  EXPECT_EQ(solve_lp(lp).status, LpStatus::Infeasible);

  LinearProgram lp2;
  lp2.n = 1;
  lp2.c = {-1.0};
  lp2.lo = {0.0};
  lp2.up = {std::numeric_limits<double>::infinity()};
  EXPECT_EQ(solve_lp(lp2).status, LpStatus::Unbounded);
}

TEST(SolveLp, EqualityWithFreeVariable) {
  LinearProgram lp;
  lp.n = 2;
  lp.c = {1.0, 1.0};
  lp.lo = {-std::numeric_limits<double>::infinity(), 0.0};
  lp.up = {std::numeric_limits<double>::infinity(), 10.0};
  lp.rows.push_back({{1.0, 1.0}, Rel::Eq, 3.0});
  const LpResult r = solve_lp(lp);
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.x[0] + r.x[1], 3.0, 1e-9);
  EXPECT_NEAR(r.objective, 3.0, 1e-9);
}

TEST(MinimalSubmeasure, EmptyFluxIsTrivial) {
  AtomicVectorMeasure zero{2, {}, {}};
  const auto res = minimal_submeasure(zero, planar_basis(1.0));
  EXPECT_DOUBLE_EQ(res.objective, 0.0);
  EXPECT_TRUE(res.zeta.atoms.empty());
}

TEST(MinimalSubmeasure, ClosedLoopCollapsesToZero) {
  SymbolicMeasure loop{2, {}, {}};
  loop.components.push_back({TimeDirac{0.5}, SpacePolyline{circle_polygon(128), 1.0}, 1.0});
  const auto res = minimal_submeasure_symbolic(loop, planar_basis(1.0), 1e-8);
  EXPECT_LE(res.objective, 1e-6);
  EXPECT_LE(total_variation(res.zeta), 1e-6);
  EXPECT_GT(res.n_rows, 0u);
}

TEST(MinimalSubmeasure, InjectiveOpenArcIsAlreadyMinimal) {
  SymbolicMeasure arc{2, {}, {}};
  arc.components.push_back(
      {TimeLebesgue{0.0, 1.0, 1.0, 0.0}, SpacePolyline{open_arc(), 1.0}, 1.0});
  const auto res = minimal_submeasure_symbolic(arc, planar_basis(1.0), 1e-8);
  for (double l : res.lambda) EXPECT_GE(l, 1.0 - 1e-6);
  EXPECT_NEAR(res.objective, symbolic_total_variation(arc), 1e-5);
  EXPECT_NEAR(total_variation(res.zeta), symbolic_total_variation(arc), 1e-5);
}

TEST(MinimalSubmeasure, ObjectiveNeverExceedsTotalVariation) {
  SymbolicMeasure arc{2, {}, {}};
  arc.components.push_back({TimeDirac{0.2}, SpacePolyline{open_arc(), -1.0}, 0.7});
  const auto res = minimal_submeasure_symbolic(arc, planar_basis(1.0), 1e-8);
  EXPECT_LE(res.objective, symbolic_total_variation(arc) + 1e-9);
  // identity is always feasible, so the demonstrated optimum is a bound
  const SubmeasureWitness w = submeasure_check(res.zeta, res.zeta);
  EXPECT_TRUE(w.ok);
}

TEST(MinimalSubmeasure, EqualityOfMassesForcesDensityOne) {
  SymbolicMeasure arc{2, {}, {}};
  arc.components.push_back(
      {TimeLebesgue{0.0, 1.0, 1.0, 0.0}, SpacePolyline{open_arc(), 1.0}, 1.0});
  const auto res = minimal_submeasure_symbolic(arc, planar_basis(1.0), 1e-8);
  if (res.objective >= symbolic_total_variation(arc) - 1e-9)
    for (double l : res.lambda) EXPECT_GE(l, 1.0 - 1e-6);
}

TEST(MinimalPair, LineTransportFluxSurvivesWhole) {
  SymbolicMeasure mu{1, {}, {}};
  mu.components.push_back({TimeLebesgue{0.0, 1.0, 1.0, -1.0}, SpaceAtoms{{{0.0}}, {{1.0}}}, 1.0});
  mu.components.push_back({TimeLebesgue{0.0, 1.0, 0.0, 1.0}, SpaceAtoms{{{1.0}}, {{1.0}}}, 1.0});
  SymbolicMeasure nu{1, {}, {}};
  nu.components.push_back(
      {TimeLebesgue{0.0, 1.0, 1.0, 0.0}, SpacePolyline{{{0.0}, {1.0}}, 1.0}, 1.0});
  const AtomicVectorMeasure mu_a = discretize(mu, 36);
  const AtomicVectorMeasure nu_a = discretize(nu, 36);
  const TestBasis basis = make_test_basis(Box{{0.0, 0.0}, {1.0, 1.0}}, 1.0);
  const MinimalPair mp = minimal_pair(mu_a, nu_a, basis, default_eps_loc(nu_a));
  EXPECT_EQ(mp.nu_perp.atoms.size() + mp.nu_ac.atoms.size(), nu_a.atoms.size());
  for (double l : mp.lambda) EXPECT_GE(l, 1.0 - 1e-6);
  EXPECT_NEAR(total_variation(mp.nu_bar), total_variation(nu_a), 1e-6);
  // submeasure order: nu_bar = lambda nu atomwise on the perp part
  AtomicVectorMeasure bar_perp{1, {}, {}};
  bar_perp.atoms.assign(mp.nu_bar.atoms.begin() + mp.nu_ac.atoms.size(),
                        mp.nu_bar.atoms.end());
  const SubmeasureWitness w = submeasure_check(bar_perp, mp.nu_perp);
  EXPECT_TRUE(w.ok);
}

TEST(MinimalPair, StaticPointDropsClosedLoopFlux) {
  // stationary mass at a point plus an instantaneous circular stir: the
  // reduced pair keeps nothing of the loop
  AtomicVectorMeasure mu{2, {}, {}};
  for (int k = 0; k < 20; ++k) mu.atoms.push_back({(k + 0.5) / 20.0, {1.0, 0.0}, {0.05}});
  SymbolicMeasure loop{2, {}, {}};
  loop.components.push_back({TimeDirac{0.5}, SpacePolyline{circle_polygon(128), 1.0}, 1.0});
  const AtomicVectorMeasure nu_a = discretize(loop, 512);
  const TestBasis basis = planar_basis(1.0);
  // colocation radius below the gon chord so nothing sticks to mu; pointwise
  // constraint rows see loop integrals only up to the midpoint-rule error of
  // the discretization, so the relaxation must be sized to that slop (the
  // exact-entry symbolic route needs none of this)
  const MinimalPair mp = minimal_pair(mu, nu_a, basis, 1e-3, 1e-2);
  EXPECT_LE(total_variation(mp.nu_bar), total_variation(mp.nu_ac) + 1e-6);
}

TEST(MinimalPair, IdempotentOnItsOutput) {
  SymbolicMeasure mu{1, {}, {}};
  mu.components.push_back({TimeLebesgue{0.0, 1.0, 1.0, -1.0}, SpaceAtoms{{{0.0}}, {{1.0}}}, 1.0});
  mu.components.push_back({TimeLebesgue{0.0, 1.0, 0.0, 1.0}, SpaceAtoms{{{1.0}}, {{1.0}}}, 1.0});
  SymbolicMeasure nu{1, {}, {}};
  nu.components.push_back(
      {TimeLebesgue{0.0, 1.0, 1.0, 0.0}, SpacePolyline{{{0.0}, {1.0}}, 1.0}, 1.0});
  const AtomicVectorMeasure mu_a = discretize(mu, 36);
  const AtomicVectorMeasure nu_a = discretize(nu, 36);
  const TestBasis basis = make_test_basis(Box{{0.0, 0.0}, {1.0, 1.0}}, 1.0);
  const MinimalPair first = minimal_pair(mu_a, nu_a, basis, default_eps_loc(nu_a));
  const MinimalPair second = minimal_pair(mu_a, first.nu_bar, basis, default_eps_loc(nu_a));
  for (double l : second.lambda) EXPECT_GE(l, 1.0 - 1e-6);
}
