#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include "esscher/error.hpp"
#include "esscher/market_model.hpp"
#include "esscher/root_finding.hpp"

namespace esscher {

/// Which shock drives the tilt: X~ (jump size e^gamma - 1) or X (jump size gamma).
enum class EsscherClass { Linear, Exponential };

/// Whether the martingale condition is posed for the discounted price.
enum class Discount { On, Off };

inline std::string_view to_string(EsscherClass c) {
  return c == EsscherClass::Linear ? "linear" : "exponential";
}

inline EsscherClass parse_class(std::string_view s) {
  if (s == "linear") return EsscherClass::Linear;
  if (s == "exponential") return EsscherClass::Exponential;
  throw ValidationError("unknown Esscher class '" + std::string(s) + "' (linear|exponential)");
}

/// Tilted jump size: gamma~ for the linear class, gamma for the exponential one.
inline double zeta(const Segment& s, EsscherClass c) {
  return c == EsscherClass::Linear ? std::expm1(s.gamma) : s.gamma;
}

/// Phi(x) = sigma^2 x + lambda gamma~ zeta e^x. Strictly increasing because
/// gamma~ and zeta share the sign of gamma.
inline double phi(double x, const Segment& s, EsscherClass c) {
  return s.sigma * s.sigma * x + s.lambda * std::expm1(s.gamma) * zeta(s, c) * std::exp(x);
}

inline double phi_inverse(double y, const Segment& s, EsscherClass c, const RootConfig& cfg = {}) {
  return solve_increasing([&](double x) { return phi(x, s, c) - y; }, cfg, "phi_inverse");
}

inline double rate_for(const Segment& s, Discount d) { return d == Discount::On ? s.r : 0.0; }

/// Left side of the martingale equation
///   b~ - r + eta sigma^2 + lambda gamma~ (exp(eta zeta + psi zeta^2) - 1) = 0.
inline double eta_residual(double eta_value, double psi, const Segment& s, EsscherClass c,
                           Discount d = Discount::On) {
  const auto tp = derive_tilde(s);
  const double z = zeta(s, c);
  return tp.b_tilde - rate_for(s, d) + eta_value * s.sigma * s.sigma +
         s.lambda * tp.gamma_tilde * std::expm1(eta_value * z + psi * z * z);
}

/// The unique root eta(psi) of the martingale equation, obtained through
/// eta = Phi^{-1}(zeta (r - b~ + lambda gamma~) + sigma^2 zeta^2 psi) / zeta - zeta psi.
namespace detail {
inline double eta_root_x(double psi, const Segment& s, EsscherClass c, Discount d,
                         const RootConfig& cfg) {
  const auto tp = derive_tilde(s);
  const double z = zeta(s, c);
  const double y = z * (rate_for(s, d) - tp.b_tilde + s.lambda * tp.gamma_tilde) +
                   s.sigma * s.sigma * z * z * psi;
  return phi_inverse(y, s, c, cfg);
}
}  // namespace detail

/// Limit of eta(psi) as psi -> -infinity: (lambda gamma~ + r - b~) / sigma^2.
inline double eta_star(const Segment& s, Discount d = Discount::On) {
  const auto tp = derive_tilde(s);
  return (s.lambda * tp.gamma_tilde + rate_for(s, d) - tp.b_tilde) / (s.sigma * s.sigma);
}

/// eta(psi) - eta_star = -lambda gamma~ e^x / sigma^2 with x = Phi^{-1}(y),
/// free of the cancellation in x / zeta - zeta psi.
inline double eta_gap(double psi, const Segment& s, EsscherClass c, Discount d = Discount::On,
                      const RootConfig& cfg = {}) {
  const double x = detail::eta_root_x(psi, s, c, d, cfg);
  return -s.lambda * std::expm1(s.gamma) * std::exp(x) / (s.sigma * s.sigma);
}

/// Both forms are algebraically equal; the one with the smaller rounding
/// scale is returned for psi < 0 (eta_star + gap once zeta psi dominates);
/// psi >= 0 always uses x / zeta - zeta psi.
inline double eta(double psi, const Segment& s, EsscherClass c, Discount d = Discount::On,
                  const RootConfig& cfg = {}) {
  const double z = zeta(s, c);
  const double x = detail::eta_root_x(psi, s, c, d, cfg);
  const double star = eta_star(s, d);
  const double gap = -s.lambda * std::expm1(s.gamma) * std::exp(x) / (s.sigma * s.sigma);
  const double scale_direct = std::max(std::abs(x / z), std::abs(z * psi));
  const double scale_gap = std::max(std::abs(star), std::abs(gap));
  return psi >= 0.0 || scale_direct <= scale_gap ? x / z - z * psi : star + gap;
}

// ---------------------------------------------------------------------------
// Compound Poisson

namespace detail {

inline double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << what << ": expectation overflowed (value " << v << ")";
    throw OverflowError(msg.str());
  }
  return v;
}

template <class Residual>
double cp_root(Residual&& residual, const JumpLaw& law, const RootConfig& cfg, const char* what) {
  if (!law.has_mass_above_zero() || !law.has_mass_below_zero()) {
    throw OneSidedJumpsError(std::string(what) + ": jump law is one-sided, no root exists",
                             -1.0, 1.0);
  }
  check(cfg);
  Bracket br{};
  if (!expand_bracket(residual, cfg, br)) {
    if (std::isnan(br.f_lo) || std::isnan(br.f_hi)) {
      throw OverflowError(std::string(what) + ": residual overflowed during bracketing");
    }
    throw OneSidedJumpsError(std::string(what) + ": no sign change after bracket expansion",
                             br.lo, br.hi);
  }
  return brent_root(residual, br, cfg);
}

}  // namespace detail

/// E[(e^J - 1) exp(theta (e^J - 1) + psi (e^J - 1)^2)]
inline double cp_linear_residual(double theta, double psi, const JumpLaw& law) {
  return law.expect([&](double j) {
    const double x = std::expm1(j);
    return x * std::exp(theta * x + psi * x * x);
  });
}

/// E[(e^J - 1) exp(theta J + psi J^2)]
inline double cp_exponential_residual(double theta, double psi, const JumpLaw& law) {
  return law.expect([&](double j) { return std::expm1(j) * std::exp(theta * j + psi * j * j); });
}

inline double theta_root_cp_linear(double psi, const JumpLaw& law, const RootConfig& cfg = {}) {
  return detail::cp_root([&](double t) { return cp_linear_residual(t, psi, law); }, law, cfg,
                         "theta_root_cp_linear");
}

inline double theta_root_cp_exponential(double psi, const JumpLaw& law,
                                        const RootConfig& cfg = {}) {
  return detail::cp_root([&](double t) { return cp_exponential_residual(t, psi, law); }, law,
                         cfg, "theta_root_cp_exponential");
}

/// kappa(theta, psi) = E[exp(theta J + psi J^2)] - 1
inline double kappa_exponential(double theta, double psi, const JumpLaw& law) {
  const double m = law.expect([&](double j) { return std::exp(theta * j + psi * j * j); });
  return detail::finite_or_throw(m - 1.0, "kappa_exponential");
}

/// kappa~(theta, psi) = e^{-theta + psi} E[exp(theta e^J + psi e^{2J} - 2 psi e^J)] - 1
inline double kappa_linear(double theta, double psi, const JumpLaw& law) {
  // e^{-theta + psi} folded into the exponent: theta (e^J - 1) + psi (e^J - 1)^2.
  const double m = law.expect([&](double j) {
    const double v = std::expm1(j);
    return std::exp(theta * v + psi * v * v);
  });
  return detail::finite_or_throw(m - 1.0, "kappa_linear");
}

// ---------------------------------------------------------------------------
// Minimization characterization

struct MinimizeResult {
  double theta = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// Value, first and second derivative of a smooth convex objective.
struct Objective3 {
  double f;
  double df;
  double d2f;
};

/// Damped Newton with Armijo backtracking, started at 0.
inline MinimizeResult minimize_convex(const std::function<Objective3(double)>& obj,
                                      int max_iter = 200) {
  double theta = 0.0;
  Objective3 cur = obj(theta);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int it = 1; it <= max_iter; ++it) {
    if (cur.df == 0.0) return {theta, cur.f, it};
    if (!(cur.d2f > 0.0) || !std::isfinite(cur.d2f)) {
      throw SolverError("minimize_f: objective lost strict convexity", theta, theta);
    }
    const double step = -cur.df / cur.d2f;
    double t = 1.0;
    Objective3 next{};
    double cand = theta;
    for (int k = 0; k < 80; ++k) {
      cand = theta + t * step;
      next = obj(cand);
      if (!std::isfinite(next.f)) {
        t *= 0.5;
        continue;
      }
      // near the minimum f is flat below rounding; a shrinking gradient is then the test
      if (next.f <= cur.f + 1e-4 * t * step * cur.df || std::abs(next.df) < std::abs(cur.df)) break;
      t *= 0.5;
    }
    if (std::abs(cand - theta) <= 4.0 * eps * std::max(1.0, std::abs(theta))) {
      // The objective is flat at the floating-point scale; one final full
      // Newton step moves at most a few ulps.
      if (std::isfinite(next.f) && std::abs(next.df) < std::abs(cur.df)) {
        return {cand, next.f, it};
      }
      return {theta, cur.f, it};
    }
    theta = cand;
    cur = next;
  }
  throw SolverError("minimize_f: Newton iteration did not converge", theta, theta);
}

/// min over theta of
///   theta (b~ - r - lambda gamma~) + sigma^2 theta^2 / 2
///   + lambda (gamma~ / zeta) (exp(theta zeta + psi zeta^2) - 1),
/// whose stationarity condition is the jump-diffusion martingale equation.
inline double objective_f(double theta, double psi, const Segment& s, EsscherClass c,
                          Discount d = Discount::Off) {
  const auto tp = derive_tilde(s);
  const double z = zeta(s, c);
  return theta * (tp.b_tilde - rate_for(s, d) - s.lambda * tp.gamma_tilde) +
         0.5 * s.sigma * s.sigma * theta * theta +
         s.lambda * (tp.gamma_tilde / z) * std::expm1(theta * z + psi * z * z);
}

inline MinimizeResult minimize_f(double psi, const Segment& s, EsscherClass c,
                                 Discount d = Discount::Off) {
  const auto tp = derive_tilde(s);
  const double z = zeta(s, c);
  const double lin = tp.b_tilde - rate_for(s, d) - s.lambda * tp.gamma_tilde;
  const double s2 = s.sigma * s.sigma;
  return minimize_convex([&](double th) {
    const double e = std::exp(th * z + psi * z * z);
    return Objective3{th * lin + 0.5 * s2 * th * th + s.lambda * (tp.gamma_tilde / z) * (e - 1.0),
                      lin + s2 * th + s.lambda * tp.gamma_tilde * e,
                      s2 + s.lambda * tp.gamma_tilde * z * e};
  });
}

/// Compound Poisson analog. Linear class: lambda E[exp(theta x + psi x^2) - 1]
/// with x = e^J - 1 (equal to lambda kappa~). Exponential class:
/// lambda E[((e^J - 1) / J) (exp(theta J + psi J^2) - 1)].
inline double objective_f_cp(double theta, double psi, const JumpLaw& law, EsscherClass c,
                             double lambda = 1.0) {
  if (c == EsscherClass::Linear) {
    return lambda * law.expect([&](double j) {
      const double x = std::expm1(j);
      return std::expm1(theta * x + psi * x * x);
    });
  }
  return lambda * law.expect([&](double j) {
    const double w = j == 0.0 ? 1.0 : std::expm1(j) / j;
    return w * std::expm1(theta * j + psi * j * j);
  });
}

inline MinimizeResult minimize_f_cp(double psi, const JumpLaw& law, EsscherClass c,
                                    double lambda = 1.0) {
  if (!law.has_mass_above_zero() || !law.has_mass_below_zero()) {
    throw OneSidedJumpsError("minimize_f_cp: jump law is one-sided, objective is unbounded",
                             -1.0, 1.0);
  }
  return minimize_convex([&](double th) {
    Objective3 o{0.0, 0.0, 0.0};
    const auto nodes = law.nodes();
    const auto w = law.weights();
    for (std::size_t k = 0; k < law.size(); ++k) {
      const double j = nodes[k];
      const double x = std::expm1(j);
      // tilt variable v and the weight turning its exponential into the objective
      const double v = c == EsscherClass::Linear ? x : j;
      const double scale = c == EsscherClass::Linear ? 1.0 : (j == 0.0 ? 1.0 : x / j);
      const double e = std::exp(th * v + psi * v * v);
      o.f += w[k] * scale * (e - 1.0);
      o.df += w[k] * scale * v * e;
      o.d2f += w[k] * scale * v * v * e;
    }
    o.f *= lambda;
    o.df *= lambda;
    o.d2f *= lambda;
    return o;
  });
}

}  // namespace esscher
