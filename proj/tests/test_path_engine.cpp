#include <gtest/gtest.h>

#include <cmath>

#include "esscher/bsde.hpp"
#include "esscher/path_engine.hpp"
#include "fixtures.hpp"

using namespace esscher;

namespace {
constexpr EsscherClass kClasses[] = {EsscherClass::Linear, EsscherClass::Exponential};
}

TEST(Simulate, DiffusionOnlyVariance) {
  const auto m = fixtures::baseline();
  const auto b = simulate(m, make_grid(m, 10), 100000, 11, {true, false, 1});
  std::vector<double> xt(b.n_paths), sq(b.n_paths);
  for (std::size_t p = 0; p < b.n_paths; ++p) xt[p] = b.x(p, b.steps());
  const auto mx = mean_stderr(xt);
  for (std::size_t p = 0; p < b.n_paths; ++p) sq[p] = (xt[p] - mx.mean) * (xt[p] - mx.mean);
  const auto v = mean_stderr(sq);
  EXPECT_LE(std::abs(v.mean / m.horizon - 0.04), 3.0 * v.se);
  for (std::size_t p = 0; p < 100; ++p)
    for (std::size_t i = 0; i < b.steps(); ++i) EXPECT_EQ(b.dn(p, i), 0);
}

TEST(Simulate, MeanIsDriftTimesT) {
  const auto m = fixtures::baseline();
  const auto b = simulate(m, make_grid(m, 20), 50000, 3);
  std::vector<double> xt(b.n_paths);
  for (std::size_t p = 0; p < b.n_paths; ++p) xt[p] = b.x(p, b.steps());
  const auto mx = mean_stderr(xt);
  EXPECT_LE(std::abs(mx.mean - m.segments[0].b * m.horizon), 3.0 * mx.se);
}

TEST(Simulate, DeterministicAcrossRunsAndThreads) {
  const auto m = fixtures::two_segment();
  const auto a = simulate(m, make_grid(m, 50), 257, 42, {false, false, 1});
  const auto b = simulate(m, make_grid(m, 50), 257, 42, {false, false, 4});
  EXPECT_EQ(a.dW, b.dW);
  EXPECT_EQ(a.dN, b.dN);
  EXPECT_EQ(a.X, b.X);
  const auto c = simulate(m, make_grid(m, 50), 257, 43);
  EXPECT_NE(a.dW, c.dW);
  // path p does not depend on how many paths were drawn
  const auto d = simulate(m, make_grid(m, 50), 10, 42);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(a.dw(7, i), d.dw(7, i));
}

TEST(Simulate, InvariantsOfBundle) {
  const auto m = fixtures::two_segment();
  const auto b = simulate(m, make_grid(m, 40), 200, 5);
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    EXPECT_EQ(b.x(p, 0), 0.0);
    for (std::size_t i = 0; i <= b.steps(); ++i) EXPECT_GT(b.s(p, i), 0.0);
    for (std::size_t i = 0; i < b.steps(); ++i) EXPECT_GE(b.dn(p, i), 0);
  }
}

TEST(Simulate, MisalignedGridSuggestsStep) {
  const auto m = fixtures::two_segment();
  try {
    make_grid(m, 3);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("steps"), std::string::npos) << e.what();
  }
  try {
    grid_with_step(m, 0.3);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("h"), std::string::npos) << e.what();
  }
  EXPECT_EQ(grid_with_step(m, 0.25).steps, 4u);
}

TEST(StochExp, ZeroAndSingleJumpPaths) {
  const auto m = fixtures::two_segment();
  const auto g = make_grid(m, 4);
  const auto zero = from_increments(m, g, std::vector<double>(4, 0.0), std::vector<int>(4, 0));
  EXPECT_LE(stoch_exp_identity(m, zero), 1e-15);
  const auto one = from_increments(m, g, std::vector<double>(4, 0.0), {0, 1, 0, 0});
  EXPECT_LE(stoch_exp_identity(m, one), 1e-15);
  EXPECT_NEAR(one.x(0, 2) - zero.x(0, 2), 0.1, 1e-15);
}

TEST(StochExp, RandomPaths) {
  const auto m = fixtures::two_segment();
  EXPECT_LE(stoch_exp_identity(m, simulate(m, make_grid(m, 250), 1000, 1)), 1e-10);
}

TEST(Density, TrivialAndSingleJump) {
  const auto m = fixtures::baseline();
  const auto g = make_grid(m, 5);
  const auto b = simulate(m, g, 20, 9);
  const auto d0 = density_path(m, b, {0.0}, 0.0, EsscherClass::Linear, {false});
  for (double z : d0.Z) EXPECT_NEAR(z, 1.0, 1e-15);

  const auto one = from_increments(m, g, std::vector<double>(5, 0.0), {0, 0, 1, 0, 0});
  for (auto c : kClasses) {
    const double th = 1.3, psi = 0.7;
    const auto d = density_path(m, one, {th}, psi, c, {false});
    const double z = zeta(m.segments[0], c);
    const double jf = std::exp(th * z + psi * z * z);
    const double expect = jf * std::exp(-0.5 * th * th * 0.04 - (jf - 1.0) * 1.0);
    EXPECT_NEAR(d.z(0, 5), expect, 1e-14 * expect);
  }
}

TEST(Density, RefusesNonRootTheta) {
  const auto m = fixtures::baseline();
  const auto b = simulate(m, make_grid(m, 5), 4, 1);
  EXPECT_THROW(density_path(m, b, {0.5}, 0.0, EsscherClass::Linear), ValidationError);
  const auto d = density_for_psi(m, b, 2.0, EsscherClass::Exponential);
  for (double z : d.Z) EXPECT_GT(z, 0.0);
}

TEST(Yor, Factorization) {
  const auto m = fixtures::two_segment();
  const auto b = simulate(m, make_grid(m, 250), 1000, 2);
  for (auto c : kClasses) {
    EXPECT_LE(yor_factorization_check(m, b, 1.5, 0.0, c), 1e-10);
    EXPECT_LE(yor_factorization_check(m, b, 0.0, 3.0, c), 1e-10);
    for (double th : {-3.0, 0.4, 2.0})
      for (double psi : {-4.0, 1.0, 6.0}) EXPECT_LE(yor_factorization_check(m, b, th, psi, c), 1e-10);
  }
}

TEST(Bridge, CorrectedFactorExactLiteralNot) {
  const auto m = fixtures::two_segment();
  const auto b = simulate(m, make_grid(m, 250), 1000, 3);
  for (double th : {-2.0, 0.0, 1.5}) {
    for (double psi : {-3.0, 0.0, 2.0}) {
      const auto r = exp_lin_bridge_check(m, b, th, psi);
      EXPECT_LE(r.max_rel_error, 1e-10);
      EXPECT_LE(r.drift_gap, 1e-12);
      EXPECT_LE(r.root_residual, 1e-10);
      EXPECT_GT(r.literal_max_rel_error, 1e-6);
    }
  }
}

TEST(CompoundPoissonDensity, ClosedForm) {
  const CompoundPoissonModel cp{1.5, JumpLaw::normal(-0.02, 0.15, 64), 100.0, 1.0};
  const auto paths = simulate_cp(cp, 1000, 4);
  for (auto c : kClasses) {
    for (double psi : {-1.0, 0.0, 1.5}) {
      const double th = c == EsscherClass::Linear ? theta_root_cp_linear(psi, cp.law)
                                                  : theta_root_cp_exponential(psi, cp.law);
      const auto r = cp_density_check(cp, paths, th, psi, c);
      EXPECT_LE(r.closed_vs_stoch_exp, 1e-12);
      EXPECT_LE(r.dh_vs_closed, 1e-12);
    }
  }
}

TEST(Martingale, TrivialDensityIsExactlyOne) {
  const auto m = fixtures::baseline();
  const auto g = make_grid(m, 10);
  const auto b = simulate(m, g, 500, 1);
  const auto chk = martingale_check(m, b, density_path(m, b, {0.0}, 0.0, EsscherClass::Linear));
  EXPECT_DOUBLE_EQ(chk.density.mean, 1.0);
}

TEST(Martingale, CalibratedAndNegativeControl) {
  const auto m = fixtures::two_segment();
  const auto g = make_grid(m, 20);
  for (auto c : kClasses) {
    const auto th = theta_for_psi(m, 0.5, c);
    const auto ok = martingale_mc(m, g, th, 0.5, c, 100000, 7);
    EXPECT_TRUE(ok.density_ok());
    EXPECT_TRUE(ok.discounted_ok());
    auto bad = th;
    for (auto& t : bad) t += 0.1;
    EXPECT_FALSE(martingale_mc(m, g, bad, 0.5, c, 100000, 7).discounted_ok());
  }
}

TEST(PriceMc, ConstantAndForward) {
  const auto m = fixtures::two_segment();
  const auto g = make_grid(m, 20);
  const double disc = std::exp(-m.integrated_rate(1.0));
  const auto cst = price_mc(m, 2.0, Claim::constant(5.0), EsscherClass::Linear, g, 40000, 5);
  EXPECT_LE(std::abs(cst.mean - 5.0 * disc), 3.0 * cst.se);
  const auto base = fixtures::baseline();
  for (double psi : {-5.0, 0.0, 5.0}) {
    const auto f = price_mc(base, psi, Claim::forward(), EsscherClass::Exponential, make_grid(base, 20), 40000, 6);
    EXPECT_LE(std::abs(f.mean - 100.0), 3.0 * f.se) << psi;
  }
}

TEST(PriceMc, CallAgainstLattice) {
  const auto m = fixtures::baseline();
  const auto L = Lattice::build(m, EsscherClass::Linear, 120);
  for (double psi : {-5.0, 0.0, 5.0}) {
    const auto mc = price_mc(m, psi, Claim::call(100.0), EsscherClass::Linear, make_grid(m, 50), 100000, 8);
    const double lat = solve_psi(L, Claim::call(100.0), psi).y0();
    // O(h) allowance for the M = 120 lattice
    EXPECT_LE(std::abs(mc.mean - lat), 3.0 * mc.se + 0.05) << psi;
  }
}
