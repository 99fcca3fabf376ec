#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include "esscher/error.hpp"
#include "esscher/esscher_solver.hpp"
#include "esscher/market_model.hpp"
#include "esscher/path_engine.hpp"
#include "esscher/validation.hpp"

namespace esscher {

/// How node prices are placed. Plain uses the R_0 drift of X and a sqrt(h)
/// Brownian log step. MomentMatched picks the log step a and the per-step
/// drift so that the discounted price is an exact one-step lattice
/// martingale with gamma~ z - sigma u = 0, hence linear in every tilt.
enum class NodeScheme { MomentMatched, Plain };

struct LatticeStep {
  std::size_t segment = 0;
  double r = 0.0;
  double eta0 = 0.0;
  double lambda0 = 0.0;
  double p = 0.0;      // lambda_0 h
  double drift = 0.0;  // log-price drift over the step
};

/// Admissible tilt range of one step: 1 + c(psi) w >= 0 for every successor.
struct PsiRange {
  double c_lo = 0.0;
  double c_hi = 0.0;
  double psi_min = 0.0;  // may be -infinity
  double psi_max = 0.0;
};

struct Projection {
  double y = 0.0;
  double z = 0.0;
  double u = 0.0;
};

class Lattice {
 public:
  static Lattice build(const MarketModel& m, EsscherClass cls, std::size_t steps,
                       NodeScheme scheme = NodeScheme::MomentMatched) {
    require_valid(m);
    if (!m.constant_in(&Segment::sigma) || !m.constant_in(&Segment::gamma)) {
      throw ValidationError("lattice: sigma and gamma must be constant across segments");
    }
    const TimeGrid g = make_grid(m, steps);
    Lattice L;
    L.model_ = m;
    L.cls_ = cls;
    L.scheme_ = scheme;
    L.grid_ = g;
    L.sqrt_h_ = std::sqrt(g.h);
    L.sigma_ = m.segments.front().sigma;
    L.gamma_ = m.segments.front().gamma;
    L.gamma_tilde_ = std::expm1(L.gamma_);

    double lambda0_max = 0.0;
    L.steps_.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const std::size_t k = g.segment_of_step[i];
      const Segment& s = m.segments[k];
      LatticeStep st;
      st.segment = k;
      st.r = s.r;
      st.eta0 = eta(0.0, s, cls);
      st.lambda0 = s.lambda * std::exp(st.eta0 * zeta(s, cls));
      st.p = st.lambda0 * g.h;
      lambda0_max = std::max(lambda0_max, st.lambda0);
      L.steps_[i] = st;
    }
    if (!(lambda0_max * g.h < 1.0)) {
      std::ostringstream msg;
      msg << "lattice: jump probability lambda_0 h = " << lambda0_max * g.h
          << " must be < 1; need at least M = "
          << static_cast<std::size_t>(std::floor(m.horizon * lambda0_max)) + 1 << " steps";
      throw ValidationError(msg.str());
    }

    if (scheme == NodeScheme::MomentMatched) {
      const double t = L.sigma_ * L.sqrt_h_ / (1.0 + L.steps_.front().p * L.gamma_tilde_);
      if (!(t < 1.0)) {
        throw ValidationError("lattice: step too coarse for the moment-matched scheme; increase M");
      }
      L.a_ = std::atanh(t);
      const double log_cosh = std::log(std::cosh(L.a_));
      for (auto& st : L.steps_) {
        st.drift = st.r * g.h - log_cosh - std::log1p(st.p * L.gamma_tilde_);
      }
    } else {
      L.a_ = L.sigma_ * L.sqrt_h_;
      for (auto& st : L.steps_) {
        const Segment& s = m.segments[st.segment];
        st.drift = (s.b + s.sigma * s.sigma * st.eta0 - s.gamma * s.lambda) * g.h;
      }
    }

    L.log_drift_.assign(steps + 1, 0.0);
    L.rate_integral_.assign(steps + 1, 0.0);
    for (std::size_t i = 0; i < steps; ++i) {
      L.log_drift_[i + 1] = L.log_drift_[i] + L.steps_[i].drift;
      L.rate_integral_[i + 1] = m.integrated_rate(static_cast<double>(i + 1) * g.h);
    }
    L.rate_integral_[steps] = m.integrated_rate(m.horizon);
    L.compute_ranges();
    return L;
  }

  std::size_t steps() const { return grid_.steps; }
  double h() const { return grid_.h; }
  double sqrt_h() const { return sqrt_h_; }
  double time(std::size_t i) const { return static_cast<double>(i) * grid_.h; }
  double sigma() const { return sigma_; }
  double gamma() const { return gamma_; }
  double gamma_tilde() const { return gamma_tilde_; }
  double log_step() const { return a_; }
  EsscherClass cls() const { return cls_; }
  NodeScheme scheme() const { return scheme_; }
  const MarketModel& model() const { return model_; }
  const LatticeStep& step(std::size_t i) const { return steps_[i]; }
  /// int_0^{t_i} r ds
  double rate_integral(std::size_t i) const { return rate_integral_[i]; }

  static std::size_t slice_size(std::size_t i) { return (i + 1) * (i + 1); }
  static std::size_t index(std::size_t i, std::size_t j, std::size_t m) { return j * (i + 1) + m; }

  /// S at slice i after j up-moves and m jumps.
  double price(std::size_t i, std::size_t j, std::size_t m) const {
    const double k = 2.0 * static_cast<double>(j) - static_cast<double>(i);
    return model_.s0 * std::exp(log_drift_[i] + a_ * k + gamma_ * static_cast<double>(m));
  }

  std::vector<double> slice_prices(std::size_t i) const {
    std::vector<double> out(slice_size(i));
    for (std::size_t j = 0; j <= i; ++j)
      for (std::size_t m = 0; m <= i; ++m) out[index(i, j, m)] = price(i, j, m);
    return out;
  }

  /// Successor probabilities from any node of slice i, ordered
  /// (down, no jump), (down, jump), (up, no jump), (up, jump).
  std::array<double, 4> transition(std::size_t i) const {
    const double p = steps_[i].p;
    return {0.5 * (1.0 - p), 0.5 * p, 0.5 * (1.0 - p), 0.5 * p};
  }

  /// (y, z, u) of a field on slice i + 1 seen from node (j, m) of slice i.
  Projection project(const std::vector<double>& next, std::size_t i, std::size_t j,
                     std::size_t m) const {
    const std::size_t w = i + 2;
    const double f00 = next[j * w + m];
    const double f01 = next[j * w + m + 1];
    const double f10 = next[(j + 1) * w + m];
    const double f11 = next[(j + 1) * w + m + 1];
    const double p = steps_[i].p;
    const double a0 = 0.5 * (f00 + f10);
    const double a1 = 0.5 * (f01 + f11);
    Projection out;
    out.y = a0 + p * (a1 - a0);
    out.z = (p * (f11 - f01) + (1.0 - p) * (f10 - f00)) * 0.5 / sqrt_h_;
    out.u = 0.5 * ((f01 - f00) + (f11 - f10));
    return out;
  }

  /// c(psi) = ((eta(psi) - eta(0)) / gamma~) sigma on the segment of step i.
  double tilt_coefficient(std::size_t i, double psi) const {
    const Segment& s = model_.segments[steps_[i].segment];
    return ((eta(psi, s, cls_) - steps_[i].eta0) / gamma_tilde_) * sigma_;
  }

  /// Tilt weights w of the four successors (same order as transition()).
  std::array<double, 4> tilt_weights(std::size_t i) const {
    const double p = steps_[i].p, h = grid_.h;
    // -sigma h dN~ / (p (1 - p)) with dN~ = -p (no jump) or 1 - p (jump)
    const double dn0 = sigma_ * h / (1.0 - p);
    const double dn1 = -sigma_ * h / p;
    return {-gamma_tilde_ * sqrt_h_ + dn0, -gamma_tilde_ * sqrt_h_ + dn1,
            gamma_tilde_ * sqrt_h_ + dn0, gamma_tilde_ * sqrt_h_ + dn1};
  }

  const PsiRange& range_of_step(std::size_t i) const { return ranges_[steps_[i].segment]; }

  /// Intersection of the admissible ranges over all steps.
  PsiRange admissible_range() const {
    PsiRange out{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      const auto& r = range_of_step(i);
      out.c_lo = std::max(out.c_lo, r.c_lo);
      out.c_hi = std::min(out.c_hi, r.c_hi);
      out.psi_min = std::max(out.psi_min, r.psi_min);
      out.psi_max = std::min(out.psi_max, r.psi_max);
    }
    return out;
  }

  bool in_range(std::size_t i, double psi) const {
    const auto& r = range_of_step(i);
    return psi >= r.psi_min && psi <= r.psi_max;
  }

  /// CSV of slices 0..last: node coordinates, price and successor probabilities.
  void dump(std::ostream& out, std::size_t last = 2) const {
    out << "slice,j,m,t,S,p_down_nojump,p_down_jump,p_up_nojump,p_up_jump\n";
    const auto old = out.precision(17);
    for (std::size_t i = 0; i <= std::min(last, steps()); ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        for (std::size_t m = 0; m <= i; ++m) {
          out << i << ',' << j << ',' << m << ',' << time(i) << ',' << price(i, j, m);
          if (i < steps()) {
            for (double q : transition(i)) out << ',' << q;
          } else {
            out << ",,,,";
          }
          out << '\n';
        }
      }
    }
    out.precision(old);
  }

 private:
  Lattice() = default;

  void compute_ranges() {
    ranges_.assign(model_.segments.size(), PsiRange{});
    std::vector<bool> done(model_.segments.size(), false);
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      const std::size_t k = steps_[i].segment;
      if (done[k]) continue;
      done[k] = true;
      PsiRange r;
      double w_pos = 0.0, w_neg = 0.0;
      for (double w : tilt_weights(i)) {
        if (w > 0.0) w_pos = std::max(w_pos, w);
        if (w < 0.0) w_neg = std::max(w_neg, -w);
      }
      r.c_lo = w_pos > 0.0 ? -1.0 / w_pos : -std::numeric_limits<double>::infinity();
      r.c_hi = w_neg > 0.0 ? 1.0 / w_neg : std::numeric_limits<double>::infinity();
      // c(psi) is strictly decreasing in psi with c(0) = 0.
      r.psi_max = boundary(i, +1.0, [&](double c) { return c >= r.c_lo; });
      const Segment& s = model_.segments[k];
      const double c_inf = ((eta_star(s) - steps_[i].eta0) / gamma_tilde_) * sigma_;
      r.psi_min = c_inf <= r.c_hi ? -std::numeric_limits<double>::infinity()
                                  : boundary(i, -1.0, [&](double c) { return c <= r.c_hi; });
      ranges_[k] = r;
    }
  }

  /// Largest |psi| in direction dir whose tilt coefficient stays admissible.
  template <class Ok>
  double boundary(std::size_t i, double dir, Ok&& ok) const {
    double good = 0.0, bad = dir;
    while (ok(tilt_coefficient(i, bad))) {
      good = bad;
      bad *= 2.0;
      if (std::abs(bad) > 1e15) return dir * std::numeric_limits<double>::infinity();
    }
    for (int it = 0; it < 200 && std::abs(bad - good) > 1e-12 * std::max(1.0, std::abs(good)); ++it) {
      const double mid = 0.5 * (good + bad);
      (ok(tilt_coefficient(i, mid)) ? good : bad) = mid;
    }
    return good;
  }

  MarketModel model_;
  EsscherClass cls_ = EsscherClass::Linear;
  NodeScheme scheme_ = NodeScheme::MomentMatched;
  TimeGrid grid_;
  double sqrt_h_ = 0.0;
  double sigma_ = 0.0;
  double gamma_ = 0.0;
  double gamma_tilde_ = 0.0;
  double a_ = 0.0;
  std::vector<LatticeStep> steps_;
  std::vector<double> log_drift_;
  std::vector<double> rate_integral_;
  std::vector<PsiRange> ranges_;
};

}  // namespace esscher
