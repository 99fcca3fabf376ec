#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "esscher/claim.hpp"
#include "esscher/error.hpp"
#include "esscher/lattice.hpp"
#include "esscher/parallel.hpp"

namespace esscher {

enum class Side { Upper, Lower };

inline const char* to_string(Side s) { return s == Side::Upper ? "upper" : "lower"; }

/// Per-node value of psi, given (slice, node index, gamma~ z - sigma u).
struct PsiControl {
  std::function<double(std::size_t, std::size_t, double)> at;

  static PsiControl constant(double psi) {
    return {[psi](std::size_t, std::size_t, double) { return psi; }};
  }
  /// One value per lattice step.
  static PsiControl per_step(std::vector<double> psi) {
    return {[v = std::move(psi)](std::size_t i, std::size_t, double) { return v.at(i); }};
  }
  /// One value per node of slices 0..M-1.
  static PsiControl field(std::vector<std::vector<double>> psi) {
    return {[v = std::move(psi)](std::size_t i, std::size_t k, double) { return v.at(i).at(k); }};
  }
};

/// Fields of one backward sweep. Yd, Z, U, X and Drv are in discounted
/// units (Yd_i = e^{-int_0^{t_i} r} Y_i); X = gamma~ Z - sigma U and Drv is
/// the driver increment h c(psi) X added at each node.
struct BsdeSolution {
  std::string driver;
  Side side = Side::Upper;
  double n = 0.0;
  double n_eff = 0.0;
  std::vector<std::vector<double>> Yd;   // slices 0..M
  std::vector<double> payoff;            // Y at slice M, exactly
  std::vector<std::vector<double>> Z, U, X, Psi, Drv, dK;  // slices 0..M-1
  std::vector<double> K_aggregate;       // E_0[K_{t_i}], i = 0..M
  bool monotone = true;
  double rate_integral_T = 0.0;

  std::size_t steps() const { return Yd.size() - 1; }
  double y0() const { return Yd[0][0]; }
  /// Undiscounted Y at slice i.
  double y(const Lattice& L, std::size_t i, std::size_t k) const {
    return i == steps() ? payoff[k] : std::exp(L.rate_integral(i)) * Yd[i][k];
  }
};

struct SolveOptions {
  unsigned threads = 1;
  /// Restrict n to the range where every tilted transition weight is >= 0.
  bool clamp_to_monotone = true;
};

/// Node probabilities of the lattice under R_0, slice by slice.
inline std::vector<std::vector<double>> marginals(const Lattice& L) {
  std::vector<std::vector<double>> pi(L.steps() + 1);
  pi[0] = {1.0};
  for (std::size_t i = 0; i < L.steps(); ++i) {
    pi[i + 1].assign(Lattice::slice_size(i + 1), 0.0);
    const auto q = L.transition(i);
    const std::size_t w = i + 2;
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t m = 0; m <= i; ++m) {
        const double v = pi[i][Lattice::index(i, j, m)];
        pi[i + 1][j * w + m] += v * q[0];
        pi[i + 1][j * w + m + 1] += v * q[1];
        pi[i + 1][(j + 1) * w + m] += v * q[2];
        pi[i + 1][(j + 1) * w + m + 1] += v * q[3];
      }
    }
  }
  return pi;
}

/// E_0 of a node field on one slice.
inline double aggregate(const std::vector<double>& pi, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += pi[k] * f[k];
  return s;
}

namespace detail {

/// Memoized c(psi) per segment.
class TiltTable {
 public:
  explicit TiltTable(const Lattice& L) : L_(L) {}
  double operator()(std::size_t i, double psi) {
    const auto key = std::make_pair(L_.step(i).segment, psi);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double c = L_.tilt_coefficient(i, psi);
    cache_.emplace(key, c);
    return c;
  }

 private:
  const Lattice& L_;
  std::map<std::pair<std::size_t, double>, double> cache_;
};

/// Explicit backward sweep: Yd_i = y + h (c(psi) x), psi chosen by the control.
inline BsdeSolution sweep(const Lattice& L, std::vector<double> terminal, const PsiControl& ctl,
                          const SolveOptions& opt) {
  const std::size_t M = L.steps();
  BsdeSolution s;
  s.rate_integral_T = L.rate_integral(M);
  s.Yd.resize(M + 1);
  s.Z.resize(M);
  s.U.resize(M);
  s.X.resize(M);
  s.Psi.resize(M);
  s.Drv.resize(M);
  s.payoff = std::move(terminal);
  const double disc = std::exp(-s.rate_integral_T);
  s.Yd[M].resize(s.payoff.size());
  for (std::size_t k = 0; k < s.payoff.size(); ++k) s.Yd[M][k] = disc * s.payoff[k];

  const double gt = L.gamma_tilde(), sig = L.sigma(), h = L.h();
  TiltTable tilt(L);
  std::vector<double> yexp;
  for (std::size_t ii = M; ii-- > 0;) {
    const std::size_t n = Lattice::slice_size(ii);
    auto& Z = s.Z[ii];
    auto& U = s.U[ii];
    auto& X = s.X[ii];
    Z.resize(n);
    U.resize(n);
    X.resize(n);
    yexp.resize(n);
    const auto& next = s.Yd[ii + 1];
    parallel_for(ii + 1, opt.threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t j = lo; j < hi; ++j) {
        for (std::size_t m = 0; m <= ii; ++m) {
          const std::size_t k = Lattice::index(ii, j, m);
          const Projection pr = L.project(next, ii, j, m);
          yexp[k] = pr.y;
          Z[k] = pr.z;
          U[k] = pr.u;
          X[k] = gt * pr.z - sig * pr.u;
        }
      }
    });
    auto& Y = s.Yd[ii];
    auto& P = s.Psi[ii];
    auto& D = s.Drv[ii];
    Y.resize(n);
    P.resize(n);
    D.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double psi = ctl.at(ii, k, X[k]);
      if (!L.in_range(ii, psi)) s.monotone = false;
      P[k] = psi;
      D[k] = h * (tilt(ii, psi) * X[k]);
      Y[k] = yexp[k] + D[k];
    }
  }
  return s;
}

inline std::vector<double> terminal_values(const Lattice& L, const Claim& claim) {
  const std::size_t M = L.steps();
  std::vector<double> out(Lattice::slice_size(M));
  for (std::size_t j = 0; j <= M; ++j)
    for (std::size_t m = 0; m <= M; ++m) out[Lattice::index(M, j, m)] = claim.payoff(L.price(M, j, m));
  return out;
}

}  // namespace detail

/// Linear BSDE with driver ((eta(psi) - eta(0)) / gamma~) sigma (gamma~ z - sigma u) - r y,
/// solved in discounted variables.
inline BsdeSolution solve_psi(const Lattice& L, const Claim& claim, const PsiControl& ctl,
                              const SolveOptions& opt = {}) {
  auto s = detail::sweep(L, detail::terminal_values(L, claim), ctl, opt);
  s.driver = "psi";
  return s;
}

inline BsdeSolution solve_psi(const Lattice& L, const Claim& claim, double psi,
                              const SolveOptions& opt = {}) {
  return solve_psi(L, claim, PsiControl::constant(psi), opt);
}

/// Largest n the lattice treats monotonically in both directions.
inline double monotone_n_limit(const Lattice& L) {
  const auto r = L.admissible_range();
  return std::min(r.psi_max, -r.psi_min);
}

/// BSDE(n). Upper driver: c(-n) x^+ - c(n) x^-; lower: c(n) x^+ - c(-n) x^-
/// (both minus r y), i.e. the bang-bang psi_n = -n / +n on {x >= 0} / {x < 0}
/// for the upper side and the mirror image for the lower side.
inline BsdeSolution solve_n(const Lattice& L, const Claim& claim, double n, Side side,
                            const SolveOptions& opt = {}) {
  if (!(n >= 0.0)) throw ValidationError("solve_n: n must be >= 0");
  const double ne = opt.clamp_to_monotone ? std::min(n, monotone_n_limit(L)) : n;
  const double pos = side == Side::Upper ? -ne : ne;  // psi where x >= 0
  const double neg = -pos;                            // psi where x < 0
  PsiControl ctl{[=](std::size_t, std::size_t, double x) {
    if (ne == 0.0) return 0.0;
    return x >= 0.0 ? pos : neg;
  }};
  auto s = detail::sweep(L, detail::terminal_values(L, claim), ctl, opt);
  s.driver = "n";
  s.side = side;
  s.n = n;
  s.n_eff = ne;

  // K increments: the penalty part h |c(n)| x^- (upper) or h |c(n)| x^+ (lower).
  const std::size_t M = L.steps();
  s.dK.resize(M);
  detail::TiltTable tilt(L);
  for (std::size_t i = 0; i < M; ++i) {
    s.dK[i].assign(s.X[i].size(), 0.0);
    const double cn = ne == 0.0 ? 0.0 : tilt(i, ne);
    for (std::size_t k = 0; k < s.X[i].size(); ++k) {
      const double x = s.X[i][k];
      if (side == Side::Upper && x < 0.0) s.dK[i][k] = L.h() * (cn * x);
      if (side == Side::Lower && x > 0.0) s.dK[i][k] = -(L.h() * (cn * x));
    }
  }
  const auto pi = marginals(L);
  s.K_aggregate.assign(M + 1, 0.0);
  for (std::size_t i = 0; i < M; ++i) s.K_aggregate[i + 1] = s.K_aggregate[i] + aggregate(pi[i], s.dK[i]);
  return s;
}

/// v_n = E_0[sum h x^-] (upper) or E_0[sum h x^+] (lower).
inline double constraint_violation(const Lattice& L, const BsdeSolution& s,
                                   const std::vector<std::vector<double>>& pi) {
  double v = 0.0;
  for (std::size_t i = 0; i < L.steps(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s.X[i].size(); ++k) {
      const double x = s.X[i][k];
      const double part = s.side == Side::Upper ? std::max(-x, 0.0) : std::max(x, 0.0);
      acc += pi[i][k] * part;
    }
    v += L.h() * acc;
  }
  return v;
}

/// E_0[sum x^+ dK] (upper) or E_0[sum x^- dK] (lower).
inline double skorokhod_integral(const BsdeSolution& s, const std::vector<std::vector<double>>& pi) {
  double v = 0.0;
  for (std::size_t i = 0; i < s.dK.size(); ++i) {
    for (std::size_t k = 0; k < s.dK[i].size(); ++k) {
      const double x = s.X[i][k];
      const double other = s.side == Side::Upper ? std::max(x, 0.0) : std::max(-x, 0.0);
      v += pi[i][k] * other * s.dK[i][k];
    }
  }
  return v;
}

inline double min_k_increment(const BsdeSolution& s) {
  double lo = 0.0;
  for (const auto& slice : s.dK)
    for (double d : slice) lo = std::min(lo, d);
  return lo;
}

/// Largest rise in t of the aggregate gap E_0[hi_t - lo_t]; the gap of a
/// supermartingale never rises.
inline double supermartingale_gap_rise(const BsdeSolution& hi, const BsdeSolution& lo,
                                       const std::vector<std::vector<double>>& pi) {
  double prev = std::numeric_limits<double>::infinity();
  double rise = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hi.Yd.size(); ++i) {
    double g = 0.0;
    for (std::size_t k = 0; k < hi.Yd[i].size(); ++k) g += pi[i][k] * (hi.Yd[i][k] - lo.Yd[i][k]);
    if (i > 0) rise = std::max(rise, g - prev);
    prev = g;
  }
  return rise;
}

/// max over slices of |E_0[Yd_i] - E_0[Yd_M] - sum_{k >= i} E_0[h g_k]|.
inline double potential_representation_error(const BsdeSolution& s,
                                             const std::vector<std::vector<double>>& pi) {
  const std::size_t M = s.steps();
  double tail = aggregate(pi[M], s.Yd[M]);
  double worst = 0.0;
  for (std::size_t i = M; i-- > 0;) {
    tail += aggregate(pi[i], s.Drv[i]);
    worst = std::max(worst, std::abs(aggregate(pi[i], s.Yd[i]) - tail));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Bounds

inline std::vector<double> default_schedule() {
  std::vector<double> s{0.0};
  for (int k = 0; k <= 10; ++k) s.push_back(std::ldexp(1.0, k));
  return s;
}

struct BoundsOptions {
  std::vector<double> schedule = default_schedule();
  double tol = -1.0;  // default 1e-6 s0
  SolveOptions solve;
};

struct BoundsRow {
  double n = 0.0;
  double n_eff = 0.0;
  double y_upper = 0.0;
  double y_lower = 0.0;
  double v_upper = 0.0;
  double v_lower = 0.0;
  double k_upper = 0.0;  // E_0[K_T]
  double k_lower = 0.0;
  double skorokhod_upper = 0.0;
  double skorokhod_lower = 0.0;
  double min_dk = 0.0;
  /// vs. the previous row; -inf on the first row
  double gap_rise_upper = -std::numeric_limits<double>::infinity();
  double gap_rise_lower = -std::numeric_limits<double>::infinity();
  bool monotone = true;
};

struct BoundsReport {
  std::string claim;
  std::string cls;
  std::size_t steps = 0;
  double h = 0.0;
  double tol = 0.0;
  double n_monotone_limit = 0.0;
  std::vector<BoundsRow> rows;
  double y_up = 0.0;
  double y_inf = 0.0;
  double y_psi0 = 0.0;
  bool converged_upper = false;
  bool converged_lower = false;
  double n_stop_upper = 0.0;
  double n_stop_lower = 0.0;
  double cauchy_upper = 0.0;  // last |Y^(n_k) - Y^(n_{k-1})|
  double cauchy_lower = 0.0;

  bool converged() const { return converged_upper && converged_lower; }
};

/// Runs BSDE(n) over the schedule, both sides, until both Cauchy gaps fall
/// below tol or the schedule is exhausted.
inline BoundsReport bounds(const Lattice& L, const Claim& claim, const BoundsOptions& opt = {}) {
  if (opt.schedule.empty()) throw ValidationError("bounds: empty n schedule");
  BoundsReport rep;
  rep.claim = claim.describe();
  rep.cls = std::string(to_string(L.cls()));
  rep.steps = L.steps();
  rep.h = L.h();
  rep.tol = opt.tol > 0.0 ? opt.tol : 1e-6 * L.model().s0;
  rep.n_monotone_limit = monotone_n_limit(L);
  const auto pi = marginals(L);

  std::optional<BsdeSolution> prev_up, prev_lo;
  for (std::size_t idx = 0; idx < opt.schedule.size(); ++idx) {
    const double n = opt.schedule[idx];
    auto up = solve_n(L, claim, n, Side::Upper, opt.solve);
    auto lo = solve_n(L, claim, n, Side::Lower, opt.solve);
    BoundsRow row;
    row.n = n;
    row.n_eff = up.n_eff;
    row.y_upper = up.y0();
    row.y_lower = lo.y0();
    row.v_upper = constraint_violation(L, up, pi);
    row.v_lower = constraint_violation(L, lo, pi);
    row.k_upper = up.K_aggregate.back();
    row.k_lower = lo.K_aggregate.back();
    row.skorokhod_upper = skorokhod_integral(up, pi);
    row.skorokhod_lower = skorokhod_integral(lo, pi);
    row.min_dk = std::min(min_k_increment(up), min_k_increment(lo));
    row.monotone = up.monotone && lo.monotone;
    if (prev_up) {
      row.gap_rise_upper = supermartingale_gap_rise(up, *prev_up, pi);
      row.gap_rise_lower = supermartingale_gap_rise(*prev_lo, lo, pi);
    }
    if (idx == 0) rep.y_psi0 = n == 0.0 ? row.y_upper : solve_psi(L, claim, 0.0, opt.solve).y0();
    rep.rows.push_back(row);

    if (idx > 0) {
      const auto& a = rep.rows[idx - 1];
      if (!rep.converged_upper) {
        rep.cauchy_upper = std::abs(row.y_upper - a.y_upper);
        if (rep.cauchy_upper < rep.tol) {
          rep.converged_upper = true;
          rep.n_stop_upper = n;
        }
      }
      if (!rep.converged_lower) {
        rep.cauchy_lower = std::abs(row.y_lower - a.y_lower);
        if (rep.cauchy_lower < rep.tol) {
          rep.converged_lower = true;
          rep.n_stop_lower = n;
        }
      }
    }
    rep.y_up = row.y_upper;
    rep.y_inf = row.y_lower;
    if (rep.converged()) break;
    prev_up = std::move(up);
    prev_lo = std::move(lo);
  }
  // Each side reports the value at which it converged (or the last one).
  for (const auto& r : rep.rows) {
    if (rep.converged_upper && r.n == rep.n_stop_upper) rep.y_up = r.y_upper;
    if (rep.converged_lower && r.n == rep.n_stop_lower) rep.y_inf = r.y_lower;
  }
  return rep;
}

struct DualityReport {
  double max_root_diff = 0.0;   // |lower_n(xi) + upper_n(-xi)| at the root
  double max_field_diff = 0.0;  // same, over every node of every slice
};

/// Compares the direct lower BSDE(n) with -(upper BSDE(n) of -xi) for every n.
inline DualityReport lower_via_duality(const Lattice& L, const Claim& claim,
                                       const std::vector<double>& schedule = default_schedule(),
                                       const SolveOptions& opt = {}) {
  DualityReport rep;
  const Claim neg = claim.negated();
  for (double n : schedule) {
    const auto lo = solve_n(L, claim, n, Side::Lower, opt);
    const auto up = solve_n(L, neg, n, Side::Upper, opt);
    rep.max_root_diff = std::max(rep.max_root_diff, std::abs(lo.y0() + up.y0()));
    for (std::size_t i = 0; i < lo.Yd.size(); ++i)
      for (std::size_t k = 0; k < lo.Yd[i].size(); ++k)
        rep.max_field_diff = std::max(rep.max_field_diff, std::abs(lo.Yd[i][k] + up.Yd[i][k]));
  }
  return rep;
}

/// Lower bounds as -(upper bounds of -xi).
inline BoundsReport bounds_via_duality(const Lattice& L, const Claim& claim,
                                       const BoundsOptions& opt = {}) {
  auto rep = bounds(L, claim.negated(), opt);
  rep.claim = claim.describe();
  for (auto& r : rep.rows) {
    std::swap(r.y_upper, r.y_lower);
    r.y_upper = -r.y_upper;
    r.y_lower = -r.y_lower;
    std::swap(r.v_upper, r.v_lower);
    std::swap(r.k_upper, r.k_lower);
    std::swap(r.skorokhod_upper, r.skorokhod_lower);
    std::swap(r.gap_rise_upper, r.gap_rise_lower);
  }
  const double up = rep.y_up, inf = rep.y_inf;
  rep.y_up = -inf;
  rep.y_inf = -up;
  rep.y_psi0 = -rep.y_psi0;
  std::swap(rep.converged_upper, rep.converged_lower);
  std::swap(rep.n_stop_upper, rep.n_stop_lower);
  std::swap(rep.cauchy_upper, rep.cauchy_lower);
  return rep;
}

struct SandwichPoint {
  double psi = 0.0;
  double y = 0.0;
  bool inside = false;
  bool monotone = true;
};

struct SandwichReport {
  double y_inf = 0.0;
  double y_up = 0.0;
  double eps = 0.0;
  std::vector<SandwichPoint> points;

  bool all_inside() const {
    return std::all_of(points.begin(), points.end(), [](const auto& p) { return p.inside; });
  }
};

/// Checks Y^inf - eps <= Y^psi_0 <= Y^up + eps over a grid of constant psi.
inline SandwichReport interval_sandwich(const Lattice& L, const Claim& claim,
                                        const std::vector<double>& psi_grid, double y_inf,
                                        double y_up, double eps, const SolveOptions& opt = {}) {
  SandwichReport rep{y_inf, y_up, eps, {}};
  for (double psi : psi_grid) {
    const auto s = solve_psi(L, claim, psi, opt);
    const double y = s.y0();
    rep.points.push_back({psi, y, y >= y_inf - eps && y <= y_up + eps, s.monotone});
  }
  return rep;
}

inline std::vector<double> integer_grid(int lo, int hi) {
  std::vector<double> g;
  for (int k = lo; k <= hi; ++k) g.push_back(k);
  return g;
}

struct ClassCompareRow {
  std::size_t steps = 0;
  double up_linear = 0.0;
  double up_exponential = 0.0;
  double inf_linear = 0.0;
  double inf_exponential = 0.0;
  double diff_up() const { return std::abs(up_linear - up_exponential); }
  double diff_inf() const { return std::abs(inf_linear - inf_exponential); }
};

inline std::vector<ClassCompareRow> class_compare(const MarketModel& m, const Claim& claim,
                                                  const std::vector<std::size_t>& steps,
                                                  const BoundsOptions& opt = {}) {
  std::vector<ClassCompareRow> out;
  for (std::size_t M : steps) {
    const auto lin = bounds(Lattice::build(m, EsscherClass::Linear, M), claim, opt);
    const auto ex = bounds(Lattice::build(m, EsscherClass::Exponential, M), claim, opt);
    out.push_back({M, lin.y_up, ex.y_up, lin.y_inf, ex.y_inf});
  }
  return out;
}

struct AdmissibilityReport {
  bool bounded = false;
  bool pass = false;
  double power = 2.0;
  /// max over the grid of E^psi[(xi^+)^p] and E^psi[(xi^-)^p] (discounted)
  double max_moment_pos = 0.0;
  double max_moment_neg = 0.0;
  std::string note;
};

/// Moment diagnostic for unbounded claims: tilted p-th moments of xi^+ and
/// xi^- across the psi grid must stay finite and not blow up with psi.
inline AdmissibilityReport admissibility(const Lattice& L, const Claim& claim,
                                         const std::vector<double>& psi_grid = integer_grid(-8, 8),
                                         double p = 2.0, const SolveOptions& opt = {}) {
  AdmissibilityReport rep;
  rep.bounded = claim.bounded();
  rep.power = p;
  if (rep.bounded) {
    rep.pass = true;
    rep.note = "bounded payoff";
    return rep;
  }
  auto base = detail::terminal_values(L, claim);
  std::vector<double> pos(base.size()), neg(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    pos[k] = std::pow(std::max(base[k], 0.0), p);
    neg[k] = std::pow(std::max(-base[k], 0.0), p);
  }
  double lo_pos = std::numeric_limits<double>::infinity();
  bool finite = true;
  for (double psi : psi_grid) {
    const auto ctl = PsiControl::constant(psi);
    const double mp = detail::sweep(L, pos, ctl, opt).y0();
    const double mn = detail::sweep(L, neg, ctl, opt).y0();
    finite = finite && std::isfinite(mp) && std::isfinite(mn);
    rep.max_moment_pos = std::max(rep.max_moment_pos, mp);
    rep.max_moment_neg = std::max(rep.max_moment_neg, mn);
    lo_pos = std::min(lo_pos, mp);
  }
  const double spread = lo_pos > 0.0 ? rep.max_moment_pos / lo_pos : 1.0;
  rep.pass = finite && spread < 1e6;
  rep.note = rep.pass ? "tilted moments bounded on the grid" : "tilted moments blow up on the grid";
  return rep;
}

}  // namespace esscher
