#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library's solvers; formulas are restated from their definitions.

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

/// Plain bisection of an increasing function, expanding [lo, hi] first.
inline double bisect(const std::function<double(double)>& f, double lo = -1.0, double hi = 1.0) {
  while (f(lo) > 0.0) lo *= 2.0;
  while (f(hi) < 0.0) hi *= 2.0;
  for (int k = 0; k < 2000; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Seg {
  double r, b, sigma, gamma, lambda;
};

inline double gt(const Seg& s) { return std::exp(s.gamma) - 1.0; }
inline double bt(const Seg& s) {
  return s.b + 0.5 * s.sigma * s.sigma + s.lambda * (std::exp(s.gamma) - 1.0 - s.gamma);
}

/// eta by bisection on b~ - r + eta sigma^2 + lambda gamma~ (e^{eta zeta + psi zeta^2} - 1).
inline double eta(double psi, const Seg& s, bool linear, bool discount = true) {
  const double z = linear ? gt(s) : s.gamma;
  const double r = discount ? s.r : 0.0;
  return bisect([&](double e) {
    return bt(s) - r + e * s.sigma * s.sigma + s.lambda * gt(s) * (std::exp(e * z + psi * z * z) - 1.0);
  });
}

/// First-order Esscher parameter of a compound Poisson law: Newton on E[(e^J - 1) e^{theta J}] = 0.
inline double gerber_shiu(const std::vector<double>& x, const std::vector<double>& p) {
  double th = 0.0;
  for (int it = 0; it < 100; ++it) {
    double f = 0.0, df = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double e = std::exp(th * x[k]);
      f += p[k] * (std::exp(x[k]) - 1.0) * e;
      df += p[k] * (std::exp(x[k]) - 1.0) * x[k] * e;
    }
    const double step = f / df;
    th -= step;
    if (std::abs(step) < 1e-15 * (1.0 + std::abs(th))) break;
  }
  return th;
}

/// Two-step non-recombining tree for a constant-coefficient model with r = 0,
/// built from scratch: moment-matched Brownian log step, Bernoulli(lambda_0 h)
/// jumps, projection by the defining expectations. Returns the root value of
/// Y^psi for a psi assignment on the 5 interior nodes (root, then slice-1
/// nodes ordered (dW-, no jump), (dW-, jump), (dW+, no jump), (dW+, jump)).
struct TwoStepTree {
  Seg s;
  bool linear;
  double s0, T;
  double h, p, a, drift, eta0;
  std::function<double(double)> payoff;

  TwoStepTree(Seg seg, bool lin, double s0_, double T_, std::function<double(double)> f)
      : s(seg), linear(lin), s0(s0_), T(T_), payoff(std::move(f)) {
    if (s.r != 0.0) throw std::invalid_argument("oracle tree assumes r = 0");
    h = T / 2.0;
    eta0 = eta(0.0, s, linear);
    const double z = linear ? gt(s) : s.gamma;
    p = s.lambda * std::exp(eta0 * z) * h;
    a = std::atanh(s.sigma * std::sqrt(h) / (1.0 + p * gt(s)));
    drift = -std::log(std::cosh(a)) - std::log(1.0 + p * gt(s));
  }

  double c(double psi) const { return s.sigma * (eta(psi, s, linear) - eta0) / gt(s); }

  static constexpr std::array<int, 4> dw{-1, -1, 1, 1};
  static constexpr std::array<int, 4> dn{0, 1, 0, 1};

  double prob(int k) const { return 0.5 * (dn[k] ? p : 1.0 - p); }

  /// One explicit step from successor values f[4].
  double step(const std::array<double, 4>& f, double psi) const {
    double y = 0.0, z = 0.0, u = 0.0;
    for (int k = 0; k < 4; ++k) {
      y += prob(k) * f[k];
      z += prob(k) * f[k] * dw[k] * std::sqrt(h) / h;
      u += prob(k) * f[k] * (dn[k] - p) / (p * (1.0 - p));
    }
    return y + h * c(psi) * (gt(s) * z - s.sigma * u);
  }

  double root(const std::array<double, 5>& psi) const {
    std::array<double, 4> mid{};
    for (int k1 = 0; k1 < 4; ++k1) {
      std::array<double, 4> leaf{};
      for (int k2 = 0; k2 < 4; ++k2) {
        const double x = 2.0 * drift + a * (dw[k1] + dw[k2]) + s.gamma * (dn[k1] + dn[k2]);
        leaf[k2] = payoff(s0 * std::exp(x));
      }
      mid[k1] = step(leaf, psi[1 + k1]);
    }
    return step(mid, psi[0]);
  }

  /// max and min of root() over all 3^5 assignments from {-n, 0, n}.
  std::pair<double, double> enumerate(double n) const {
    double hi = -INFINITY, lo = INFINITY;
    const std::array<double, 3> vals{-n, 0.0, n};
    for (int code = 0; code < 243; ++code) {
      std::array<double, 5> psi{};
      int c = code;
      for (int k = 0; k < 5; ++k) {
        psi[k] = vals[c % 3];
        c /= 3;
      }
      const double v = root(psi);
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    return {hi, lo};
  }
};

}  // namespace oracle
