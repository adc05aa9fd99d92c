#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "ceflow/measure.hpp"
#include "ceflow/symbolic.hpp"
#include "ceflow/weak_form.hpp"
#include "oracles.hpp"

using namespace ceflow;

namespace {

SymbolicMeasure line_transport_mu() {
  SymbolicMeasure mu{1, {}, {}};
  mu.components.push_back({TimeLebesgue{0.0, 1.0, 1.0, -1.0}, SpaceAtoms{{{0.0}}, {{1.0}}}, 1.0});
  mu.components.push_back({TimeLebesgue{0.0, 1.0, 0.0, 1.0}, SpaceAtoms{{{1.0}}, {{1.0}}}, 1.0});
  mu.components.push_back({TimeLebesgue{1.0, 2.0, 1.0, 0.0}, SpaceAtoms{{{1.0}}, {{1.0}}}, 1.0});
  return mu;
}

SymbolicMeasure line_transport_nu() {
  SymbolicMeasure nu{1, {}, {}};
  nu.components.push_back(
      {TimeLebesgue{0.0, 1.0, 1.0, 0.0}, SpacePolyline{{{0.0}, {1.0}}, 1.0}, 1.0});
  return nu;
}

SymbolicMeasure point_datum(Vec x) {
  SymbolicMeasure m{static_cast<int>(x.size()), {}, {}};
  m.components.push_back({TimeDirac{0.0}, SpaceAtoms{{std::move(x)}, {{1.0}}}, 1.0});
  return m;
}

std::vector<Vec> circle_polygon(int sides) {
  std::vector<Vec> pts;
  for (int i = 0; i <= sides; ++i) {
    const double th = 2.0 * M_PI * i / sides;
    pts.push_back({std::cos(th), std::sin(th)});
  }
  pts.back() = pts.front();  // bitwise closure
  return pts;
}

TestBasis basis_for(const SymbolicMeasure& mu, const SymbolicMeasure& nu,
                    const SymbolicMeasure& mu0, double t_end, int knots = 16) {
  Box window = symbolic_support_box(mu);
  const Box bn = symbolic_support_box(nu);
  const Box b0 = symbolic_support_box(mu0);
  for (const Box* b : {&bn, &b0}) {
    if (b->dims() == 0) continue;
    window.absorb(b->lo);
    window.absorb(b->hi);
  }
  return make_test_basis(window, t_end, knots);
}

}  // namespace

TEST(CeResidual, StationaryPointIsExactlyZero) {
  SymbolicMeasure mu{1, {}, {}};
  mu.components.push_back({TimeLebesgue{0.0, 2.0}, SpaceAtoms{{{0.0}}, {{1.0}}}, 1.0});
  SymbolicMeasure nu{1, {}, {}};
  const SymbolicMeasure mu0 = point_datum({0.0});
  const TestBasis basis = basis_for(mu, mu, mu0, 2.0);
  const ResidualReport rep = ce_residual_symbolic(mu, nu, mu0, basis);
  EXPECT_FALSE(rep.cover_warning);
  EXPECT_LE(rep.max_abs, 1e-14);
  EXPECT_TRUE(rep.pass(1e-10));
}

TEST(CeResidual, LineTransportSymbolicallyExact) {
  const SymbolicMeasure mu = line_transport_mu(), nu = line_transport_nu();
  const SymbolicMeasure mu0 = point_datum({0.0});
  const TestBasis basis = basis_for(mu, nu, mu0, 2.0);
  const ResidualReport rep = ce_residual_symbolic(mu, nu, mu0, basis);
  EXPECT_FALSE(rep.cover_warning);
  EXPECT_LE(rep.max_abs, 1e-10);
  EXPECT_EQ(rep.n_basis, basis.total());
  EXPECT_EQ(static_cast<int>(rep.per_fn.size()), rep.n_basis);
}

TEST(CeResidual, StaticPointWithClosedLoopFluxIsExact) {
  // the flux is an instantaneous closed loop: its divergence pairings
  // telescope to zero, so the static point still solves the equation
  SymbolicMeasure mu{2, {}, {}};
  mu.components.push_back({TimeLebesgue{0.0, 1.0}, SpaceAtoms{{{1.0, 0.0}}, {{1.0}}}, 1.0});
  SymbolicMeasure nu{2, {}, {}};
  nu.components.push_back({TimeDirac{0.5}, SpacePolyline{circle_polygon(128), 1.0}, 1.0});
  const SymbolicMeasure mu0 = point_datum({1.0, 0.0});
  const TestBasis basis = basis_for(mu, nu, mu0, 1.0);
  const ResidualReport rep = ce_residual_symbolic(mu, nu, mu0, basis);
  EXPECT_FALSE(rep.cover_warning);
  EXPECT_LE(rep.max_abs, 1e-10);
}

TEST(CeResidual, DiscretizedLineTransportFirstOrder) {
  const SymbolicMeasure mu = line_transport_mu(), nu = line_transport_nu();
  const SymbolicMeasure mu0 = point_datum({0.0});
  const TestBasis basis = basis_for(mu, nu, mu0, 2.0);
  AtomicVectorMeasure mu0a{1, {}, {}};
  mu0a.atoms.push_back({0.0, {0.0}, {1.0}});
  double prev = 1e9;
  for (int res : {100, 400, 10000}) {
    const ResidualReport rep =
        ce_residual(discretize(mu, res), discretize(nu, res), mu0a, basis);
    EXPECT_LT(rep.max_abs, prev);
    prev = rep.max_abs;
  }
  EXPECT_LE(prev, 1e-3);  // res = 10^4 pinned working tolerance
}

TEST(CeResidual, LinearInThePair) {
  const SymbolicMeasure mu = line_transport_mu(), nu = line_transport_nu();
  const TestBasis basis = basis_for(mu, nu, point_datum({0.0}), 2.0);
  const AtomicVectorMeasure mu_a = discretize(mu, 100), nu_a = discretize(nu, 100);
  // a second, different pair on the same window: frozen point at x = 1
  AtomicVectorMeasure mu_b{1, {}, {}};
  for (int k = 0; k < 50; ++k)
    mu_b.atoms.push_back({2.0 * (k + 0.5) / 50.0, {1.0}, {2.0 / 50.0}});
  AtomicVectorMeasure nu_b{1, {}, {}}, zero{1, {}, {}};
  AtomicVectorMeasure mu0_a{1, {}, {}}, mu0_b{1, {}, {}};
  mu0_a.atoms.push_back({0.0, {0.0}, {1.0}});
  mu0_b.atoms.push_back({0.0, {1.0}, {1.0}});

  const ResidualReport ra = ce_residual(mu_a, nu_a, mu0_a, basis);
  const ResidualReport rb = ce_residual(mu_b, nu_b, mu0_b, basis);
  const double al = 0.37;
  const ResidualReport rc = ce_residual(concat(scaled(mu_a, al), scaled(mu_b, 1.0 - al)),
                                        concat(scaled(nu_a, al), scaled(nu_b, 1.0 - al)),
                                        concat(scaled(mu0_a, al), scaled(mu0_b, 1.0 - al)),
                                        basis);
  for (int k = 0; k < basis.total(); ++k)
    EXPECT_NEAR(rc.per_fn[k], al * ra.per_fn[k] + (1.0 - al) * rb.per_fn[k], 1e-12);
}

TEST(CeResidual, ZeroEverythingIsZero) {
  AtomicVectorMeasure z1{1, {}, {}};
  const TestBasis basis = make_test_basis(Box{{0.0, -1.0}, {1.0, 1.0}}, 1.0);
  const ResidualReport rep = ce_residual(z1, z1, z1, basis);
  EXPECT_DOUBLE_EQ(rep.max_abs, 0.0);
}

TEST(CeResidual, ExtensionBeyondFinalTimePasses) {
  const SymbolicMeasure mu = line_transport_mu(), nu = line_transport_nu();
  const SymbolicMeasure mu0 = point_datum({0.0});
  const SymbolicMeasure mu_ext = extend_time(mu, 2.0, 3.0, SpaceAtoms{{{1.0}}, {{1.0}}});
  const TestBasis basis = basis_for(mu_ext, nu, mu0, 3.0);
  const ResidualReport rep = ce_residual_symbolic(mu_ext, nu, mu0, basis);
  EXPECT_LE(rep.max_abs, 1e-10);
  EXPECT_THROW(extend_time(mu, 2.0, 2.0, SpaceAtoms{{{1.0}}, {{1.0}}}),
               std::invalid_argument);
}

TEST(CeResidual, CoverWarningWhenSupportEscapes) {
  AtomicVectorMeasure mu{1, {}, {}}, zero{1, {}, {}};
  mu.atoms.push_back({0.5, {0.0}, {1.0}});
  mu.atoms.push_back({0.5, {50.0}, {1.0}});  // far outside the window below
  const TestBasis basis = make_test_basis(Box{{0.0, -1.0}, {1.0, 1.0}}, 1.0);
  const ResidualReport rep = ce_residual(mu, zero, zero, basis);
  EXPECT_TRUE(rep.cover_warning);
}

TEST(CeResidual, InitialDatumTermIsExercised) {
  // dropping the datum must break the stationary solution
  SymbolicMeasure mu{1, {}, {}};
  mu.components.push_back({TimeLebesgue{0.0, 2.0}, SpaceAtoms{{{0.0}}, {{1.0}}}, 1.0});
  SymbolicMeasure zero{1, {}, {}};
  const SymbolicMeasure mu0 = point_datum({0.0});
  const TestBasis basis = basis_for(mu, mu, mu0, 2.0);
  const ResidualReport with = ce_residual_symbolic(mu, zero, mu0, basis);
  const ResidualReport without = ce_residual_symbolic(mu, zero, zero, basis);
  EXPECT_LE(with.max_abs, 1e-14);
  EXPECT_GT(without.max_abs, 1e-3);
}

TEST(AugmentedResidual, SingleConstantSpeedTrajectory) {
  // (T(s), Y(s)) = (tau s, x0 + v s) with ||(tau, v)|| = 1; the chain rule
  // telescopes, so the residual is pure quadrature error in ds
  const double tau = 1.0 / std::sqrt(2.0), vel = 1.0 / std::sqrt(2.0);
  const double s_max = std::sqrt(2.0);
  auto build = [&](double ds) {
    AtomicVectorMeasure sg{2, {}, {}}, s0{2, {}, {}}, sv{2, {}, {}};
    const int n = static_cast<int>(std::lround(s_max / ds));
    for (int k = 0; k < n; ++k) {
      const double s = (k + 0.5) * (s_max / n), w = s_max / n;
      const Vec tx{tau * s, vel * s};
      sg.atoms.push_back({s, tx, {w}});
      s0.atoms.push_back({s, tx, {tau * w}});
      sv.atoms.push_back({s, tx, {vel * w}});
    }
    return std::tuple{sg, s0, sv};
  };
  AtomicVectorMeasure mu0{1, {}, {}};
  mu0.atoms.push_back({0.0, {0.0}, {1.0}});
  const TestBasis basis =
      make_test_basis(Box{{0.0, 0.0, 0.0}, {s_max, 1.0, 1.0}}, s_max, 12);
  double prev = 1e9;
  for (double ds : {1e-2, 5e-3, 1e-3}) {
    auto [sg, s0, sv] = build(ds);
    const ResidualReport rep = augmented_residual(sg, s0, sv, mu0, basis);
    EXPECT_LT(rep.max_abs, prev);
    EXPECT_LE(rep.max_abs, 10.0 * ds);
    prev = rep.max_abs;
  }
}

TEST(AugmentedResidual, AllZeroIsZero) {
  AtomicVectorMeasure z2{2, {}, {}}, z1{1, {}, {}};
  const TestBasis basis = make_test_basis(Box{{0.0, 0.0, -1.0}, {1.0, 1.0, 1.0}}, 1.0, 8);
  const ResidualReport rep = augmented_residual(z2, z2, z2, z1, basis);
  EXPECT_DOUBLE_EQ(rep.max_abs, 0.0);
}

TEST(AugmentedResidual, RejectsSignedOrMisshapenInputs) {
  AtomicVectorMeasure sg{2, {}, {}}, z1{1, {}, {}};
  sg.atoms.push_back({0.1, {0.1, 0.1}, {-0.5}});
  const TestBasis basis = make_test_basis(Box{{0.0, 0.0, -1.0}, {1.0, 1.0, 1.0}}, 1.0, 8);
  EXPECT_THROW(augmented_residual(sg, {}, {}, z1, basis), std::invalid_argument);
}

TEST(DivergencePairing, ClosedLoopOpenPathAndZero) {
  auto grad_phi = [](std::span<const double> x, std::span<double> out) {
    // D of phi = x^2 y + cos(x + 2 y)
    out[0] = 2.0 * x[0] * x[1] - std::sin(x[0] + 2.0 * x[1]);
    out[1] = x[0] * x[0] - 2.0 * std::sin(x[0] + 2.0 * x[1]);
  };
  auto phi = [](const Vec& x) { return x[0] * x[0] * x[1] + std::cos(x[0] + 2.0 * x[1]); };

  SymbolicMeasure loop{2, {}, {}};
  loop.components.push_back({TimeDirac{0.0}, SpacePolyline{circle_polygon(128), 1.0}, 1.0});
  EXPECT_NEAR(divergence_pairing_symbolic(loop, grad_phi, {}), 0.0, 1e-10);

  SymbolicMeasure path{2, {}, {}};
  std::vector<Vec> pts{{0.0, 0.0}, {0.5, 0.2}, {0.7, 0.9}, {1.0, 1.0}};
  path.components.push_back({TimeDirac{0.0}, SpacePolyline{pts, 1.0}, 1.0});
  EXPECT_NEAR(divergence_pairing_symbolic(path, grad_phi, {}),
              phi(pts.back()) - phi(pts.front()), 1e-10);

  AtomicVectorMeasure zero{2, {}, {}};
  EXPECT_DOUBLE_EQ(divergence_pairing(zero, grad_phi), 0.0);
}
