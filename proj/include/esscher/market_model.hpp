#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "esscher/error.hpp"
#include "esscher/quadrature.hpp"

namespace esscher {

/// Coefficients of dX = b dt + sigma dW + gamma dN~ on one time segment.
/// N~ = N - lambda t is the compensated Poisson process; r is the short rate.
struct Segment {
  double t0 = 0.0;
  double r = 0.0;
  double b = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;
};

/// Parameters of the stochastic-exponential shock X~ with S = s0 E(X~).
struct TildeParams {
  double b_tilde = 0.0;
  double sigma_tilde = 0.0;
  double gamma_tilde = 0.0;
};

/// e^g - 1 - g without cancellation for small g.
inline double expm1_minus_x(double g) {
  if (std::abs(g) < 1e-3) {
    // Taylor series to g^7; the next term is below 1e-24 relative.
    double term = g * g / 2.0, sum = 0.0;
    for (int k = 3; k <= 9; ++k) {
      sum += term;
      term *= g / k;
    }
    return sum;
  }
  return std::expm1(g) - g;
}

inline TildeParams derive_tilde(const Segment& s) {
  return {s.b + 0.5 * s.sigma * s.sigma + s.lambda * expm1_minus_x(s.gamma), s.sigma,
          std::expm1(s.gamma)};
}

/// Inverse of the b -> b~ map, given the other coefficients.
inline double recover_b(double b_tilde, const Segment& s) {
  return b_tilde - 0.5 * s.sigma * s.sigma - s.lambda * expm1_minus_x(s.gamma);
}

/// Jump-diffusion with piecewise-constant deterministic coefficients.
struct MarketModel {
  double horizon = 1.0;
  double s0 = 100.0;
  std::vector<Segment> segments;
  std::optional<double> bound_constant;

  static MarketModel constant(double horizon, double s0, Segment seg) {
    seg.t0 = 0.0;
    return MarketModel{horizon, s0, {seg}, std::nullopt};
  }

  double segment_end(std::size_t k) const {
    return k + 1 < segments.size() ? segments[k + 1].t0 : horizon;
  }

  /// Segment active on [t0_k, t0_{k+1}); t == horizon maps to the last one.
  std::size_t segment_index(double t) const {
    std::size_t k = 0;
    while (k + 1 < segments.size() && segments[k + 1].t0 <= t) ++k;
    return k;
  }

  const Segment& at(double t) const { return segments[segment_index(t)]; }

  /// Integral of r over [0, t].
  double integrated_rate(double t) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < segments.size(); ++k) {
      const double a = segments[k].t0;
      const double b = std::min(segment_end(k), t);
      if (b > a) acc += segments[k].r * (b - a);
    }
    return acc;
  }

  bool constant_in(double Segment::*field) const {
    return std::all_of(segments.begin(), segments.end(),
                       [&](const Segment& s) { return s.*field == segments.front().*field; });
  }
};

/// Jump-size law of a compound Poisson model. Continuous laws are replaced
/// by a fixed quadrature, so every expectation is an exact finite sum.
class JumpLaw {
 public:
  static JumpLaw atoms(std::vector<double> x, std::vector<double> p) {
    if (x.size() != p.size() || x.empty()) {
      throw ValidationError("JumpLaw::atoms: need matching, non-empty x and p");
    }
    double total = 0.0;
    for (double w : p) {
      if (!(w > 0.0)) throw ValidationError("JumpLaw::atoms: probabilities must be > 0");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg << "JumpLaw::atoms: probabilities sum to " << total << ", expected 1";
      throw ValidationError(msg.str());
    }
    return JumpLaw("atoms", std::move(x), std::move(p));
  }

  /// J = +a or -a with probability 1/2 each.
  static JumpLaw two_point(double a) {
    if (!(a > 0.0)) throw ValidationError("JumpLaw::two_point: a must be > 0");
    return JumpLaw("two_point", {a, -a}, {0.5, 0.5});
  }

  static JumpLaw normal(double m, double s, std::size_t nodes = 128) {
    if (!(s > 0.0)) throw ValidationError("JumpLaw::normal: s must be > 0");
    auto rule = quadrature::gauss_hermite_normal(nodes);
    for (auto& t : rule.nodes) t = m + s * t;
    return JumpLaw("normal", std::move(rule.nodes), std::move(rule.weights));
  }

  static JumpLaw uniform(double lo, double hi, std::size_t nodes = 128) {
    if (!(hi > lo)) throw ValidationError("JumpLaw::uniform: need lo < hi");
    auto rule = quadrature::gauss_legendre_uniform(nodes);
    for (auto& t : rule.nodes) t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
    return JumpLaw("uniform", std::move(rule.nodes), std::move(rule.weights));
  }

  const std::string& kind() const noexcept { return kind_; }
  std::span<const double> nodes() const noexcept { return x_; }
  std::span<const double> weights() const noexcept { return p_; }
  std::size_t size() const noexcept { return x_.size(); }

  /// E[f(J)] over the representation.
  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < x_.size(); ++k) acc += p_[k] * f(x_[k]);
    return acc;
  }

  bool has_mass_above_zero() const {
    return std::any_of(x_.begin(), x_.end(), [](double x) { return x > 0.0; });
  }
  bool has_mass_below_zero() const {
    return std::any_of(x_.begin(), x_.end(), [](double x) { return x < 0.0; });
  }

  double second_exponential_moment() const {
    return expect([](double j) { return std::exp(2.0 * j); });
  }

 private:
  JumpLaw(std::string kind, std::vector<double> x, std::vector<double> p)
      : kind_(std::move(kind)), x_(std::move(x)), p_(std::move(p)) {}

  std::string kind_;
  std::vector<double> x_;
  std::vector<double> p_;
};

/// S = s0 exp(J_1 + ... + J_{N_t}), N Poisson with rate lambda.
struct CompoundPoissonModel {
  double lambda = 1.0;
  JumpLaw law = JumpLaw::two_point(0.1);
  double s0 = 100.0;
  double horizon = 1.0;

  void validate() const {
    if (!(lambda > 0.0)) throw ValidationError("CompoundPoissonModel: lambda must be > 0");
    if (!(s0 > 0.0)) throw ValidationError("CompoundPoissonModel: s0 must be > 0");
    if (!(horizon > 0.0)) throw ValidationError("CompoundPoissonModel: horizon must be > 0");
    if (!std::isfinite(law.second_exponential_moment())) {
      throw ValidationError("CompoundPoissonModel: E[exp(2J)] is not finite");
    }
  }
};

}  // namespace esscher
