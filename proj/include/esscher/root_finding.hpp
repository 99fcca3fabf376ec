#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "esscher/error.hpp"

namespace esscher {

struct RootConfig {
  double abs_tol = 1e-12;
  int max_iter = 200;
  double expansion = 2.0;
  // Bracket growth stops once |endpoint| exceeds this.
  double max_abs = 1e300;
  // Absolute x resolution near a root at zero.
  double x_floor = 1e-18;
};

inline void check(const RootConfig& cfg) {
  if (!(cfg.abs_tol > 0.0)) throw ValidationError("RootConfig: abs_tol must be > 0");
  if (cfg.max_iter < 1) throw ValidationError("RootConfig: max_iter must be >= 1");
  if (!(cfg.expansion > 1.0)) throw ValidationError("RootConfig: expansion must be > 1");
}

struct Bracket {
  double lo;
  double hi;
  double f_lo;
  double f_hi;
};

/// Grows [-1, 1] geometrically until an increasing function changes sign.
/// Returns false (with the last bracket in `out`) when none is found.
template <class F>
bool expand_bracket(F&& f, const RootConfig& cfg, Bracket& out) {
  double lo = -1.0, hi = 1.0;
  double flo = f(lo), fhi = f(hi);
  // Increasing function: need f(lo) <= 0 <= f(hi).
  while (!(flo <= 0.0) || !(fhi >= 0.0)) {
    if (std::isnan(flo) || std::isnan(fhi)) break;
    if (std::abs(lo) > cfg.max_abs && std::abs(hi) > cfg.max_abs) break;
    if (!(flo <= 0.0)) {
      // The root lies below lo; the old lo becomes a valid upper end.
      hi = lo;
      fhi = flo;
      lo *= cfg.expansion;
      if (std::abs(lo) > cfg.max_abs) break;
      flo = f(lo);
    } else {
      lo = hi;
      flo = fhi;
      hi *= cfg.expansion;
      if (std::abs(hi) > cfg.max_abs) break;
      fhi = f(hi);
    }
  }
  out = {lo, hi, flo, fhi};
  return flo <= 0.0 && fhi >= 0.0;
}

/// Brent's method on a sign-changing bracket. Iterates to machine precision
/// in x (or an exact zero); bisection is used whenever the interpolation step
/// is rejected.
template <class F>
double brent_root(F&& f, Bracket br, const RootConfig& cfg) {
  double a = br.lo, b = br.hi, fa = br.f_lo, fb = br.f_hi;
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0)) {
    throw SolverError("brent_root: bracket does not change sign", a, b);
  }
  double c = a, fc = fa;
  double d = b - a, e = d;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 2.0 * eps * std::abs(b) + 0.5 * cfg.x_floor;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol || fb == 0.0) return b;
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb) && std::isfinite(fa) &&
        std::isfinite(fc)) {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      const double min1 = 3.0 * xm * q - std::abs(tol * q);
      const double min2 = std::abs(e * q);
      if (2.0 * p < std::min(min1, min2)) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol) ? d : (xm > 0.0 ? tol : -tol);
    fb = f(b);
    if (std::isnan(fb)) {
      throw SolverError("brent_root: function returned NaN", std::min(b, c), std::max(b, c));
    }
  }
  std::ostringstream msg;
  msg << "brent_root: max_iter (" << cfg.max_iter << ") exceeded";
  throw SolverError(msg.str(), std::min(b, c), std::max(b, c));
}

/// Root of a strictly increasing function on the real line.
template <class F>
double solve_increasing(F&& f, const RootConfig& cfg, const char* what = "root") {
  check(cfg);
  Bracket br{};
  if (!expand_bracket(f, cfg, br)) {
    std::ostringstream msg;
    msg << what << ": no sign change found in [" << br.lo << ", " << br.hi << "]";
    throw SolverError(msg.str(), br.lo, br.hi);
  }
  return brent_root(f, br, cfg);
}

}  // namespace esscher
