#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <span>
#include <vector>

#include "esscher/claim.hpp"
#include "esscher/error.hpp"
#include "esscher/esscher_solver.hpp"
#include "esscher/market_model.hpp"
#include "esscher/parallel.hpp"

namespace esscher {

/// Uniform grid aligned with the segment breakpoints.
struct TimeGrid {
  double h = 0.0;
  std::size_t steps = 0;
  std::vector<std::size_t> segment_of_step;
};

namespace detail {

inline bool aligned(const MarketModel& m, std::size_t steps) {
  const double h = m.horizon / static_cast<double>(steps);
  for (const auto& s : m.segments) {
    const double k = s.t0 / h;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) return false;
  }
  return true;
}

}  // namespace detail

inline TimeGrid make_grid(const MarketModel& m, std::size_t steps) {
  if (steps < 1) throw ValidationError("time grid: need at least one step");
  if (!detail::aligned(m, steps)) {
    std::ostringstream msg;
    msg << "time grid: " << steps << " steps do not align with the segment breakpoints";
    for (std::size_t s = steps + 1; s <= 100 * steps; ++s) {
      if (detail::aligned(m, s)) {
        msg << "; try " << s << " steps (h = " << m.horizon / static_cast<double>(s) << ")";
        break;
      }
    }
    throw ValidationError(msg.str());
  }
  TimeGrid g{m.horizon / static_cast<double>(steps), steps, {}};
  g.segment_of_step.resize(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    g.segment_of_step[i] = m.segment_index((static_cast<double>(i) + 0.5) * g.h);
  }
  return g;
}

/// Grid with step h; h must divide every segment length.
inline TimeGrid grid_with_step(const MarketModel& m, double h) {
  if (!(h > 0.0)) throw ValidationError("time grid: h must be > 0");
  const double q = m.horizon / h;
  const double steps = std::round(q);
  if (steps < 1.0 || std::abs(q - steps) > 1e-9 * q || !detail::aligned(m, static_cast<std::size_t>(steps))) {
    std::ostringstream msg;
    msg << "time grid: h = " << h << " does not divide every segment length";
    const auto base = static_cast<std::size_t>(std::max(1.0, std::ceil(q - 1e-9)));
    for (std::size_t s = base; s <= 100 * base; ++s) {
      if (detail::aligned(m, s)) {
        msg << "; try h = " << m.horizon / static_cast<double>(s);
        break;
      }
    }
    throw ValidationError(msg.str());
  }
  return make_grid(m, static_cast<std::size_t>(steps));
}

struct SimOptions {
  bool jumps_off = false;      // force every Delta N to 0
  bool diffusion_off = false;  // force every Delta W to 0
  unsigned threads = 1;
};

/// Paths stored row-major: increments [path * steps + i], levels [path * (steps + 1) + i].
struct PathBundle {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  double s0 = 0.0;
  std::vector<double> dW;
  std::vector<int> dN;
  std::vector<double> X;

  std::size_t steps() const { return grid.steps; }
  double dw(std::size_t p, std::size_t i) const { return dW[p * grid.steps + i]; }
  int dn(std::size_t p, std::size_t i) const { return dN[p * grid.steps + i]; }
  double x(std::size_t p, std::size_t i) const { return X[p * (grid.steps + 1) + i]; }
  double s(std::size_t p, std::size_t i) const { return s0 * std::exp(x(p, i)); }
};

/// Draws the increments of one path. Both variates are drawn at every step
/// so forcing one stream off leaves the other unchanged.
inline void draw_increments(const MarketModel& m, const TimeGrid& g, std::uint64_t seed,
                            std::size_t path, const SimOptions& opt, std::span<double> dW,
                            std::span<int> dN) {
  auto rng = path_rng(seed, path);
  std::normal_distribution<double> normal(0.0, std::sqrt(g.h));
  for (std::size_t i = 0; i < g.steps; ++i) {
    const double w = normal(rng);
    std::poisson_distribution<int> poisson(m.segments[g.segment_of_step[i]].lambda * g.h);
    const int n = poisson(rng);
    dW[i] = opt.diffusion_off ? 0.0 : w;
    dN[i] = opt.jumps_off ? 0 : n;
  }
}

namespace detail {

inline void fill_x(const MarketModel& m, PathBundle& b) {
  const std::size_t M = b.grid.steps;
  b.X.assign(b.n_paths * (M + 1), 0.0);
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    double x = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const Segment& s = m.segments[b.grid.segment_of_step[i]];
      x += s.b * b.grid.h + s.sigma * b.dw(p, i) + s.gamma * (b.dn(p, i) - s.lambda * b.grid.h);
      b.X[p * (M + 1) + i + 1] = x;
    }
  }
}

}  // namespace detail

inline PathBundle simulate(const MarketModel& m, const TimeGrid& g, std::size_t n_paths,
                           std::uint64_t seed, const SimOptions& opt = {}) {
  if (n_paths < 1) throw ValidationError("simulate: n_paths must be >= 1");
  PathBundle b{g, n_paths, seed, m.s0, {}, {}, {}};
  b.dW.assign(n_paths * g.steps, 0.0);
  b.dN.assign(n_paths * g.steps, 0);
  parallel_for(n_paths, opt.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      draw_increments(m, g, seed, p, opt,
                      std::span<double>(b.dW).subspan(p * g.steps, g.steps),
                      std::span<int>(b.dN).subspan(p * g.steps, g.steps));
    }
  });
  detail::fill_x(m, b);
  return b;
}

inline PathBundle simulate(const MarketModel& m, double h, std::size_t n_paths, std::uint64_t seed,
                           const SimOptions& opt = {}) {
  return simulate(m, grid_with_step(m, h), n_paths, seed, opt);
}

/// Bundle from prescribed increments (one row of `steps` entries per path).
inline PathBundle from_increments(const MarketModel& m, const TimeGrid& g, std::vector<double> dW,
                                  std::vector<int> dN) {
  if (dW.size() != dN.size() || dW.empty() || dW.size() % g.steps != 0) {
    throw ValidationError("from_increments: increments must fill whole paths");
  }
  for (int n : dN)
    if (n < 0) throw ValidationError("from_increments: jump counts must be >= 0");
  PathBundle b{g, dW.size() / g.steps, 0, m.s0, std::move(dW), std::move(dN), {}};
  detail::fill_x(m, b);
  return b;
}

// ---------------------------------------------------------------------------
// Density processes

/// Z stored like PathBundle::X.
struct DensityPath {
  std::vector<double> Z;
  std::size_t steps = 0;
  std::size_t n_paths = 0;
  std::vector<double> theta;  // per segment
  double psi = 0.0;
  EsscherClass cls = EsscherClass::Linear;

  double z(std::size_t p, std::size_t i) const { return Z[p * (steps + 1) + i]; }
};

struct DensityOptions {
  bool enforce_root = true;
  Discount discount = Discount::On;
  double residual_tol = 1e-9;
};

/// log of exp(theta sigma dW - theta^2 sigma^2 h / 2 - (g - 1) lambda h) g^dN,
/// g = exp(theta zeta + psi zeta^2).
inline double log_density_step(double theta, double psi, const Segment& s, EsscherClass c,
                               double h, double dw, int dn) {
  const double z = zeta(s, c);
  const double lg = theta * z + psi * z * z;
  return theta * s.sigma * dw - 0.5 * theta * theta * s.sigma * s.sigma * h -
         std::expm1(lg) * s.lambda * h + dn * lg;
}

inline std::vector<double> theta_for_psi(const MarketModel& m, double psi, EsscherClass c,
                                         Discount d = Discount::On) {
  std::vector<double> th;
  th.reserve(m.segments.size());
  for (const auto& s : m.segments) th.push_back(eta(psi, s, c, d));
  return th;
}

inline DensityPath density_path(const MarketModel& m, const PathBundle& b,
                                std::vector<double> theta, double psi, EsscherClass c,
                                const DensityOptions& opt = {}) {
  if (theta.size() != m.segments.size()) {
    throw ValidationError("density_path: need one theta per segment");
  }
  if (opt.enforce_root) {
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double res = eta_residual(theta[k], psi, m.segments[k], c, opt.discount);
      if (!(std::abs(res) <= opt.residual_tol)) {
        std::ostringstream msg;
        msg << "density_path: theta = " << theta[k] << " does not solve the martingale equation"
            << " for psi = " << psi << " on segment " << k << " (residual " << res << ")";
        throw ValidationError(msg.str());
      }
    }
  }
  const std::size_t M = b.grid.steps;
  DensityPath d{std::vector<double>(b.n_paths * (M + 1), 1.0), M, b.n_paths, std::move(theta),
                psi, c};
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    double lz = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const std::size_t k = b.grid.segment_of_step[i];
      lz += log_density_step(d.theta[k], psi, m.segments[k], c, b.grid.h, b.dw(p, i), b.dn(p, i));
      d.Z[p * (M + 1) + i + 1] = std::exp(lz);
    }
  }
  return d;
}

/// Z-bar^psi: theta = eta(psi) on every segment.
inline DensityPath density_for_psi(const MarketModel& m, const PathBundle& b, double psi,
                                   EsscherClass c) {
  return density_path(m, b, theta_for_psi(m, psi, c), psi, c);
}

// ---------------------------------------------------------------------------
// Pathwise identities

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), std::numeric_limits<double>::min());
}

/// max over paths and times of |e^X - E(X~)| / E(X~), where
/// E(X~)_t = exp(b~ t + sigma W_t - gamma~ lambda t - sigma^2 t / 2) (1 + gamma~)^N_t.
inline double stoch_exp_identity(const MarketModel& m, const PathBundle& b) {
  double worst = 0.0;
  const double h = b.grid.h;
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    double cont = 0.0, jump = 1.0;
    for (std::size_t i = 0; i < b.grid.steps; ++i) {
      const Segment& s = m.segments[b.grid.segment_of_step[i]];
      const auto tp = derive_tilde(s);
      cont += (tp.b_tilde - tp.gamma_tilde * s.lambda - 0.5 * s.sigma * s.sigma) * h +
              s.sigma * b.dw(p, i);
      jump *= std::pow(1.0 + tp.gamma_tilde, b.dn(p, i));
      worst = std::max(worst, rel_err(std::exp(b.x(p, i + 1)), std::exp(cont) * jump));
    }
  }
  return worst;
}

/// Checks Z^(theta,psi) = Z^(psi) Z' pathwise, with
/// Z^(psi) = E((e^{psi zeta^2} - 1) N~) and
/// Z' = E(theta sigma W + (e^{theta zeta} - 1)(N - lambda e^{psi zeta^2} t)).
inline double yor_factorization_check(const MarketModel& m, const PathBundle& b, double theta,
                                      double psi, EsscherClass c) {
  double worst = 0.0;
  const double h = b.grid.h;
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    double lz = 0.0, zpsi = 1.0, zprime = 1.0;
    for (std::size_t i = 0; i < b.grid.steps; ++i) {
      const Segment& s = m.segments[b.grid.segment_of_step[i]];
      const double z = zeta(s, c);
      const double dw = b.dw(p, i);
      const int dn = b.dn(p, i);
      lz += log_density_step(theta, psi, s, c, h, dw, dn);
      const double gpsi = std::exp(psi * z * z);
      zpsi *= std::exp(-(gpsi - 1.0) * s.lambda * h) * std::pow(gpsi, dn);
      const double gth = std::exp(theta * z);
      zprime *= std::exp(theta * s.sigma * dw - 0.5 * theta * theta * s.sigma * s.sigma * h -
                         (gth - 1.0) * s.lambda * gpsi * h) *
                std::pow(gth, dn);
      worst = std::max(worst, rel_err(zpsi * zprime, std::exp(lz)));
    }
  }
  return worst;
}

struct BridgeReport {
  /// Z^EE against Z-hat Z' with Z' carrying jump factor g / f under intensity lambda f.
  double max_rel_error = 0.0;
  /// Same comparison with Z' taken with jump factor g = e^{theta gamma + psi gamma^2}
  /// under intensity lambda f (the product then jumps by f g, not g).
  double literal_max_rel_error = 0.0;
  /// max over segments of |b-hat - b~| and of the linear-class residual for S-hat
  /// under Q-hat, evaluated at the exponential-class root.
  double drift_gap = 0.0;
  double root_residual = 0.0;
};

/// Exponential-to-linear bridge with f(gamma) = gamma~ / gamma and
/// Z-hat = E((f - 1) N~).
inline BridgeReport exp_lin_bridge_check(const MarketModel& m, const PathBundle& b, double theta,
                                         double psi) {
  const auto cls = EsscherClass::Exponential;
  BridgeReport rep;
  const double h = b.grid.h;
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    double lz = 0.0, zhat = 1.0, zp = 1.0, zlit = 1.0;
    for (std::size_t i = 0; i < b.grid.steps; ++i) {
      const Segment& s = m.segments[b.grid.segment_of_step[i]];
      const double f = std::expm1(s.gamma) / s.gamma;
      const double g = std::exp(theta * s.gamma + psi * s.gamma * s.gamma);
      const double dw = b.dw(p, i);
      const int dn = b.dn(p, i);
      const double lam_hat = s.lambda * f;
      const double cont = theta * s.sigma * dw - 0.5 * theta * theta * s.sigma * s.sigma * h;
      lz += log_density_step(theta, psi, s, cls, h, dw, dn);
      zhat *= std::exp(-(f - 1.0) * s.lambda * h) * std::pow(f, dn);
      zp *= std::exp(cont - (g / f - 1.0) * lam_hat * h) * std::pow(g / f, dn);
      zlit *= std::exp(cont - (g - 1.0) * lam_hat * h) * std::pow(g, dn);
      const double zz = std::exp(lz);
      rep.max_rel_error = std::max(rep.max_rel_error, rel_err(zhat * zp, zz));
      rep.literal_max_rel_error = std::max(rep.literal_max_rel_error, rel_err(zhat * zlit, zz));
    }
  }
  for (const auto& s : m.segments) {
    const double f = std::expm1(s.gamma) / s.gamma;
    const double b_hat = s.b + 0.5 * s.sigma * s.sigma + s.lambda * s.gamma * (f - 1.0);
    rep.drift_gap = std::max(rep.drift_gap, std::abs(b_hat - derive_tilde(s).b_tilde));
    const double th = eta(psi, s, cls, Discount::Off);
    const double res = b_hat + s.sigma * s.sigma * th +
                       s.gamma * std::expm1(s.gamma * th + s.gamma * s.gamma * psi) * s.lambda * f;
    rep.root_residual = std::max(rep.root_residual, std::abs(res));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Compound Poisson

struct CpPath {
  std::vector<double> times;
  std::vector<double> jumps;
};

inline std::vector<CpPath> simulate_cp(const CompoundPoissonModel& m, std::size_t n_paths,
                                       std::uint64_t seed) {
  m.validate();
  std::vector<CpPath> out(n_paths);
  const auto w = m.law.weights();
  const auto x = m.law.nodes();
  for (std::size_t p = 0; p < n_paths; ++p) {
    auto rng = path_rng(seed, p);
    std::poisson_distribution<int> count(m.lambda * m.horizon);
    std::uniform_real_distribution<double> when(0.0, m.horizon);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    const int n = count(rng);
    auto& path = out[p];
    for (int k = 0; k < n; ++k) {
      path.times.push_back(when(rng));
      path.jumps.push_back(x[pick(rng)]);
    }
    // jump sizes are i.i.d., so sorting the times alone keeps the law
    std::sort(path.times.begin(), path.times.end());
  }
  return out;
}

struct CpDensityReport {
  /// closed form with the cumulant against the product-form stochastic exponential
  double closed_vs_stoch_exp = 0.0;
  /// Delbaen-Haezendonck form with beta(J) = theta v + psi v^2 against the closed form
  double dh_vs_closed = 0.0;
};

/// Compares three constructions of the compound Poisson density at every
/// jump time and at the horizon; v = e^J - 1 (linear) or J (exponential).
inline CpDensityReport cp_density_check(const CompoundPoissonModel& m,
                                        const std::vector<CpPath>& paths, double theta, double psi,
                                        EsscherClass c) {
  auto tilt = [&](double j) {
    const double v = c == EsscherClass::Linear ? std::expm1(j) : j;
    return theta * v + psi * v * v;
  };
  const double kappa =
      c == EsscherClass::Linear ? kappa_linear(theta, psi, m.law) : kappa_exponential(theta, psi, m.law);
  const double mean_jump = m.law.expect([&](double j) { return std::expm1(tilt(j)); });
  const double dh_comp = m.law.expect([&](double j) { return std::exp(tilt(j)) - 1.0; });
  CpDensityReport rep;
  for (const auto& path : paths) {
    double sum = 0.0, prod = 1.0;
    auto compare = [&](double t) {
      const double closed = std::exp(sum - m.lambda * kappa * t);
      const double stoch = prod * std::exp(-m.lambda * t * mean_jump);
      const double dh = std::exp(sum - m.lambda * t * dh_comp);
      rep.closed_vs_stoch_exp = std::max(rep.closed_vs_stoch_exp, rel_err(closed, stoch));
      rep.dh_vs_closed = std::max(rep.dh_vs_closed, rel_err(dh, closed));
    };
    for (std::size_t k = 0; k < path.times.size(); ++k) {
      sum += tilt(path.jumps[k]);
      prod *= 1.0 + std::expm1(tilt(path.jumps[k]));
      compare(path.times[k]);
    }
    compare(m.horizon);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo

namespace detail {

/// Runs fn(path, dW, dN) over freshly drawn paths without storing them.
template <class Fn>
void for_each_path(const MarketModel& m, const TimeGrid& g, std::size_t n_paths,
                   std::uint64_t seed, const SimOptions& opt, Fn&& fn) {
  parallel_for(n_paths, opt.threads, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> dW(g.steps);
    std::vector<int> dN(g.steps);
    for (std::size_t p = lo; p < hi; ++p) {
      draw_increments(m, g, seed, p, opt, dW, dN);
      fn(p, std::span<const double>(dW), std::span<const int>(dN));
    }
  });
}

}  // namespace detail

struct MartingaleCheck {
  MeanStderr density;     // E[Z_T], target 1
  MeanStderr discounted;  // E[Z_T e^{-int r} S_T], target s0
  double s0 = 0.0;

  bool density_ok(double k = 3.0) const { return std::abs(density.mean - 1.0) <= k * density.se; }
  bool discounted_ok(double k = 3.0) const {
    return std::abs(discounted.mean - s0) <= k * discounted.se;
  }
};

inline MartingaleCheck martingale_check(const MarketModel& m, const PathBundle& b,
                                        const DensityPath& d) {
  const std::size_t M = b.grid.steps;
  const double disc = std::exp(-m.integrated_rate(m.horizon));
  std::vector<double> z(b.n_paths), zs(b.n_paths);
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    z[p] = d.z(p, M);
    zs[p] = z[p] * disc * b.s(p, M);
  }
  return {mean_stderr(z), mean_stderr(zs), m.s0};
}

/// Streaming version for large path counts; theta per segment, no root check.
inline MartingaleCheck martingale_mc(const MarketModel& m, const TimeGrid& g,
                                     const std::vector<double>& theta, double psi, EsscherClass c,
                                     std::size_t n_paths, std::uint64_t seed,
                                     const SimOptions& opt = {}) {
  if (theta.size() != m.segments.size()) {
    throw ValidationError("martingale_mc: need one theta per segment");
  }
  const double disc = std::exp(-m.integrated_rate(m.horizon));
  std::vector<double> z(n_paths), zs(n_paths);
  detail::for_each_path(m, g, n_paths, seed, opt,
                        [&](std::size_t p, std::span<const double> dW, std::span<const int> dN) {
                          double x = 0.0, lz = 0.0;
                          for (std::size_t i = 0; i < g.steps; ++i) {
                            const std::size_t k = g.segment_of_step[i];
                            const Segment& s = m.segments[k];
                            x += s.b * g.h + s.sigma * dW[i] + s.gamma * (dN[i] - s.lambda * g.h);
                            lz += log_density_step(theta[k], psi, s, c, g.h, dW[i], dN[i]);
                          }
                          z[p] = std::exp(lz);
                          zs[p] = z[p] * disc * m.s0 * std::exp(x);
                        });
  return {mean_stderr(z), mean_stderr(zs), m.s0};
}

/// Y^psi_0 = E[Z-bar^psi_T e^{-int r} xi].
inline MeanStderr price_mc(const MarketModel& m, double psi, const Claim& claim, EsscherClass c,
                           const TimeGrid& g, std::size_t n_paths, std::uint64_t seed,
                           const SimOptions& opt = {}) {
  if (n_paths < 2) throw ValidationError("price_mc: need at least two paths");
  const auto theta = theta_for_psi(m, psi, c);
  const double disc = std::exp(-m.integrated_rate(m.horizon));
  std::vector<double> v(n_paths);
  detail::for_each_path(m, g, n_paths, seed, opt,
                        [&](std::size_t p, std::span<const double> dW, std::span<const int> dN) {
                          double x = 0.0, lz = 0.0;
                          for (std::size_t i = 0; i < g.steps; ++i) {
                            const std::size_t k = g.segment_of_step[i];
                            const Segment& s = m.segments[k];
                            x += s.b * g.h + s.sigma * dW[i] + s.gamma * (dN[i] - s.lambda * g.h);
                            lz += log_density_step(theta[k], psi, s, c, g.h, dW[i], dN[i]);
                          }
                          v[p] = std::exp(lz) * disc * claim.payoff(m.s0 * std::exp(x));
                        });
  return mean_stderr(v);
}

}  // namespace esscher
