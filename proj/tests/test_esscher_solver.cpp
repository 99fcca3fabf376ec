#include <gtest/gtest.h>

#include <cmath>

#include "esscher/esscher_solver.hpp"
#include "fixtures.hpp"

using namespace esscher;

namespace {

const Segment kBase = fixtures::baseline_segment();
const double kGt = std::expm1(0.1);

std::vector<double> log_grid() {
  std::vector<double> g;
  for (int k = 19; k >= 0; --k) g.push_back(-std::pow(10.0, -2.0 + 6.0 * k / 19.0));
  g.push_back(0.0);
  for (int k = 0; k < 20; ++k) g.push_back(std::pow(10.0, -2.0 + 6.0 * k / 19.0));
  return g;
}

constexpr EsscherClass kClasses[] = {EsscherClass::Linear, EsscherClass::Exponential};

}  // namespace

TEST(Phi, Values) {
  EXPECT_DOUBLE_EQ(phi(0.0, kBase, EsscherClass::Linear), kGt * kGt);
  EXPECT_DOUBLE_EQ(phi(0.0, kBase, EsscherClass::Exponential), kGt * 0.1);
  EXPECT_NEAR(phi(1.0, kBase, EsscherClass::Linear), 0.04 + kGt * kGt * std::exp(1.0), 1e-16);
  const Segment unit{0.0, 0.0, 0.0, 1.0, 0.1, 1.0};
  EXPECT_NEAR(phi(-60.0, unit, EsscherClass::Linear), -60.0, 1e-20);
}

TEST(PhiInverse, RoundTripAndZero) {
  for (auto c : kClasses) {
    EXPECT_NEAR(phi_inverse(phi(0.0, kBase, c), kBase, c), 0.0, 1e-12);
    EXPECT_NEAR(phi_inverse(phi(5.0, kBase, c), kBase, c), 5.0, 1e-12);
    EXPECT_NEAR(phi_inverse(phi(-40.0, kBase, c), kBase, c), -40.0, 1e-12);
  }
}

TEST(PhiInverse, LargeArgumentAgainstBisection) {
  const double y = 1e6;
  for (auto c : kClasses) {
    const double x = phi_inverse(y, kBase, c);
    const double ref = oracle::bisect([&](double t) { return phi(t, kBase, c) - y; });
    EXPECT_NEAR(x, ref, 1e-10);
    EXPECT_LE(std::abs(phi(x, kBase, c) - y), 1e-12 * y);
  }
}

TEST(PhiInverse, Monotone) {
  double prev = -INFINITY;
  for (double y = -1e5; y <= 1e5; y += 997.0) {
    const double x = phi_inverse(y, kBase, EsscherClass::Linear);
    EXPECT_GT(x, prev);
    prev = x;
  }
}

TEST(PhiInverse, IterationCapRaisesWithBracket) {
  RootConfig cfg;
  cfg.max_iter = 2;
  try {
    phi_inverse(123.456, kBase, EsscherClass::Linear, cfg);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_LT(e.bracket_lo(), e.bracket_hi());
  }
}

TEST(Eta, ZeroAtPsiZeroWhenRateEqualsDriftTilde) {
  for (auto c : kClasses) EXPECT_NEAR(eta(0.0, kBase, c), 0.0, 1e-15);
}

TEST(Eta, ResidualOnLogGrid) {
  for (auto c : kClasses) {
    for (double psi : log_grid()) {
      const double e = eta(psi, kBase, c);
      EXPECT_LE(std::abs(eta_residual(e, psi, kBase, c)), 1e-10) << psi;
    }
  }
}

TEST(Eta, MatchesBisectionOracle) {
  const auto os = fixtures::as_oracle(kBase);
  for (auto c : kClasses) {
    for (double psi : {-300.0, -10.0, -1.0, 0.0, 0.5, 3.0, 50.0, 700.0}) {
      const double ref = oracle::eta(psi, os, c == EsscherClass::Linear);
      EXPECT_NEAR(eta(psi, kBase, c), ref, 1e-12 * std::max(1.0, std::abs(ref))) << psi;
    }
  }
}

TEST(Eta, DiscountFlag) {
  Segment s = kBase;
  s.r = 0.05;
  const auto os = fixtures::as_oracle(s);
  for (auto c : kClasses) {
    const bool lin = c == EsscherClass::Linear;
    EXPECT_NEAR(eta(1.0, s, c, Discount::On), oracle::eta(1.0, os, lin, true), 1e-12);
    EXPECT_NEAR(eta(1.0, s, c, Discount::Off), oracle::eta(1.0, os, lin, false), 1e-12);
    EXPECT_NEAR(eta(1.0, s, c, Discount::Off), eta(1.0, kBase, c), 1e-14);
  }
}

TEST(Eta, StrictlyDecreasingViaGap) {
  for (auto c : kClasses) {
    double prev = INFINITY;
    double prev_eta = INFINITY;
    for (double psi : log_grid()) {
      const double g = eta_gap(psi, kBase, c) / kGt;
      EXPECT_LT(g, prev) << psi;
      EXPECT_LE(eta(psi, kBase, c) / kGt, prev_eta) << psi;
      prev = g;
      prev_eta = eta(psi, kBase, c) / kGt;
    }
  }
}

TEST(Eta, GapAgreesWithEta) {
  for (auto c : kClasses) {
    for (double psi : {-50.0, -1.0, 0.0, 2.0, 40.0}) {
      EXPECT_NEAR(eta(psi, kBase, c) - eta_star(kBase), eta_gap(psi, kBase, c), 1e-13);
    }
  }
}

TEST(Eta, LimitAtMinusInfinity) {
  for (auto c : kClasses) {
    EXPECT_NEAR(eta(-1e6, kBase, c) / kGt, eta_star(kBase) / kGt, 1e-3);
    EXPECT_LT(std::abs(eta_gap(-1e6, kBase, c)), 1e-300);
  }
}

TEST(Eta, SlopeLimit) {
  for (auto c : kClasses) {
    const double target = zeta(kBase, c) / kGt;
    const double at1e6 = -eta(1e6, kBase, c) / (1e6 * kGt);
    EXPECT_LE(std::abs(at1e6 - target) / target, 0.01);
    // the gap decays like log(n)/n; 1e4 is still several percent away
    const double at1e4 = -eta(1e4, kBase, c) / (1e4 * kGt);
    EXPECT_GT(std::abs(at1e4 - target), std::abs(at1e6 - target));
  }
}

TEST(Eta, GrowthBound) {
  for (auto c : kClasses) {
    const double e0 = eta(0.0, kBase, c);
    for (double psi : {0.1, 1.0, 10.0, 100.0, 1e4}) {
      EXPECT_LE((e0 - eta(psi, kBase, c)) / kGt, zeta(kBase, c) / kGt * psi + 1e-12);
    }
  }
}

TEST(EtaStar, Values) {
  EXPECT_NEAR(eta_star(kBase), kGt / 0.04, 1e-14);
  Segment s = kBase;
  s.b = recover_b(s.lambda * kGt, s);
  EXPECT_NEAR(eta_star(s), 0.0, 1e-14);
}

TEST(CompoundPoisson, TwoPointExponentialRootIsMinusHalf) {
  for (double a : {0.1, 0.3, 1.0}) {
    for (double psi : {-2.0, 0.0, 2.0}) {
      EXPECT_NEAR(theta_root_cp_exponential(psi, JumpLaw::two_point(a)), -0.5, 1e-12) << a << ' ' << psi;
    }
  }
}

TEST(CompoundPoisson, LinearRootAgainstBisection) {
  const auto law = JumpLaw::two_point(0.3);
  for (double psi : {0.0, 1.0, -1.0}) {
    const double th = theta_root_cp_linear(psi, law);
    const double ref = oracle::bisect([&](double t) {
      double s = 0.0;
      for (double j : {0.3, -0.3}) {
        const double x = std::exp(j) - 1.0;
        s += 0.5 * x * std::exp(t * x + psi * x * x);
      }
      return s;
    });
    EXPECT_NEAR(th, ref, 1e-12);
    EXPECT_LE(std::abs(cp_linear_residual(th, psi, law)), 1e-12);
  }
  EXPECT_NE(theta_root_cp_linear(0.0, law), theta_root_cp_linear(1.0, law));
}

TEST(CompoundPoisson, RiskNeutralLawHasZeroRoot) {
  // p e^{0.2} + (1 - p) e^{-0.1} = 1
  const double p = (1.0 - std::exp(-0.1)) / (std::exp(0.2) - std::exp(-0.1));
  const auto law = JumpLaw::atoms({0.2, -0.1}, {p, 1.0 - p});
  EXPECT_NEAR(theta_root_cp_linear(0.0, law), 0.0, 1e-12);
  EXPECT_NEAR(theta_root_cp_exponential(0.0, law), 0.0, 1e-12);
  EXPECT_GT(std::abs(theta_root_cp_linear(1.0, law)), 1e-6);
  EXPECT_LE(std::abs(cp_linear_residual(theta_root_cp_linear(1.0, law), 1.0, law)), 1e-12);
}

TEST(CompoundPoisson, GerberShiuReduction) {
  const auto law = JumpLaw::normal(-0.05, 0.1, 128);
  std::vector<double> x(law.nodes().begin(), law.nodes().end());
  std::vector<double> w(law.weights().begin(), law.weights().end());
  EXPECT_NEAR(theta_root_cp_exponential(0.0, law), oracle::gerber_shiu(x, w), 1e-10);
}

TEST(CompoundPoisson, OneSidedLawRejected) {
  const auto up = JumpLaw::atoms({0.1, 0.2}, {0.5, 0.5});
  EXPECT_THROW(theta_root_cp_linear(0.0, up), OneSidedJumpsError);
  EXPECT_THROW(theta_root_cp_exponential(0.0, up), OneSidedJumpsError);
  EXPECT_THROW(minimize_f_cp(0.0, up, EsscherClass::Linear), OneSidedJumpsError);
}

TEST(Kappa, Values) {
  const auto law = JumpLaw::two_point(0.3);
  EXPECT_NEAR(kappa_exponential(0.0, 0.0, law), 0.0, 1e-16);
  EXPECT_NEAR(kappa_linear(0.0, 0.0, law), 0.0, 1e-16);
  EXPECT_NEAR(kappa_exponential(1.0, 0.0, law), std::cosh(0.3) - 1.0, 1e-15);
  EXPECT_GT(kappa_linear(theta_root_cp_linear(0.0, law), 0.0, law), -1.0);
  for (double psi : {-0.5, -3.0, -100.0}) {
    const double k = kappa_exponential(0.0, psi, law);
    EXPECT_GT(k, -1.0);
    EXPECT_LE(k, 0.0);
  }
}

TEST(Kappa, LinearIdentityOnGrid) {
  // e^{-theta + psi} E[exp(theta e^J + psi e^{2J} - 2 psi e^J)] - 1, written out literally
  for (const auto& law : {JumpLaw::two_point(0.3), JumpLaw::normal(-0.05, 0.1, 32)}) {
    for (double th : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      for (double psi : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        const double lit = std::exp(-th + psi) * law.expect([&](double j) {
          const double e = std::exp(j);
          return std::exp(th * e + psi * e * e - 2.0 * psi * e);
        }) - 1.0;
        EXPECT_NEAR(kappa_linear(th, psi, law), lit, 1e-13) << th << ' ' << psi;
      }
    }
  }
}

TEST(Kappa, LargeNegativePsiStaysFinite) {
  const auto law = JumpLaw::normal(0.0, 0.1, 64);
  const double k = kappa_linear(3.0, -1e4, law);
  EXPECT_TRUE(std::isfinite(k));
  EXPECT_GT(k, -1.0);
}

TEST(Kappa, OverflowFlagged) {
  EXPECT_THROW(kappa_exponential(0.0, 1e5, JumpLaw::two_point(1.0)), OverflowError);
}

TEST(MinimizeF, JumpDiffusionMatchesRoot) {
  for (auto c : kClasses) {
    const auto r0 = minimize_f(0.0, kBase, c);
    EXPECT_NEAR(r0.theta, 0.0, 1e-11);
    EXPECT_NEAR(r0.value, 0.0, 1e-14);
    for (double psi : {-20.0, -1.0, 0.7, 15.0}) {
      EXPECT_NEAR(minimize_f(psi, kBase, c).theta, eta(psi, kBase, c, Discount::Off), 1e-11) << psi;
    }
  }
}

TEST(MinimizeF, CompoundPoissonMatchesRoots) {
  const auto law = JumpLaw::two_point(0.3);
  EXPECT_NEAR(minimize_f_cp(0.0, law, EsscherClass::Exponential).theta, -0.5, 1e-11);
  EXPECT_NEAR(minimize_f_cp(2.0, law, EsscherClass::Exponential).theta, -0.5, 1e-11);
  for (double psi : {-1.0, 0.0, 1.0}) {
    EXPECT_NEAR(minimize_f_cp(psi, law, EsscherClass::Linear).theta, theta_root_cp_linear(psi, law), 1e-11);
  }
}

TEST(MinimizeF, Convexity) {
  const auto law = JumpLaw::normal(-0.05, 0.1, 32);
  for (double t1 : {-3.0, -0.5, 1.0}) {
    for (double t2 : {-2.0, 0.2, 4.0}) {
      for (auto c : kClasses) {
        const double mid = objective_f(0.5 * (t1 + t2), 1.0, kBase, c);
        EXPECT_LE(mid, 0.5 * (objective_f(t1, 1.0, kBase, c) + objective_f(t2, 1.0, kBase, c)) + 1e-15);
        const double midc = objective_f_cp(0.5 * (t1 + t2), 1.0, law, c);
        EXPECT_LE(midc, 0.5 * (objective_f_cp(t1, 1.0, law, c) + objective_f_cp(t2, 1.0, law, c)) + 1e-15);
      }
    }
  }
}
