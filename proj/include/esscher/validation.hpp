#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "esscher/esscher_solver.hpp"
#include "esscher/market_model.hpp"

namespace esscher {

struct InvariantResult {
  std::string name;
  bool pass = true;
  std::optional<std::size_t> segment;
  std::string detail;
};

struct ValidationReport {
  std::vector<InvariantResult> checks;
  /// max over segments of sigma + lambda + 1/sigma + 1/lambda + |r| + |b| + |gamma| + 1/|gamma|
  double smallest_bound = 0.0;
  /// Largest lambda_0 over segments and classes, and the fewest lattice steps it allows.
  double lambda0_max = 0.0;
  std::size_t min_lattice_steps = 1;
  std::vector<std::string> flags;

  bool ok() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  std::string failures() const {
    std::ostringstream out;
    for (const auto& c : checks) {
      if (c.pass) continue;
      out << c.name;
      if (c.segment) out << " (segment " << *c.segment << ")";
      if (!c.detail.empty()) out << ": " << c.detail;
      out << "; ";
    }
    return out.str();
  }
};

inline constexpr std::size_t default_lattice_steps = 120;

inline double bound_sum(const Segment& s) {
  return s.sigma + s.lambda + 1.0 / s.sigma + 1.0 / s.lambda + std::abs(s.r) + std::abs(s.b) +
         std::abs(s.gamma) + 1.0 / std::abs(s.gamma);
}

/// Checks the standing assumptions and reports each violation; never throws.
inline ValidationReport validate(const MarketModel& m) {
  ValidationReport rep;
  auto add = [&](std::string name, bool pass, std::optional<std::size_t> seg = std::nullopt,
                 std::string detail = {}) {
    rep.checks.push_back({std::move(name), pass, seg, std::move(detail)});
  };

  add("T>0", m.horizon > 0.0 && std::isfinite(m.horizon));
  add("s0>0", m.s0 > 0.0 && std::isfinite(m.s0));
  add("segments non-empty", !m.segments.empty());
  if (m.segments.empty()) return rep;
  add("first breakpoint = 0", m.segments.front().t0 == 0.0);

  bool coeffs_ok = true;
  for (std::size_t k = 0; k < m.segments.size(); ++k) {
    const Segment& s = m.segments[k];
    if (k > 0 && !(s.t0 > m.segments[k - 1].t0)) {
      add("breakpoints strictly increasing", false, k);
    }
    if (!(s.t0 < m.horizon)) add("breakpoint < T", false, k);
    const bool finite = std::isfinite(s.r) && std::isfinite(s.b) && std::isfinite(s.sigma) &&
                        std::isfinite(s.gamma) && std::isfinite(s.lambda);
    if (!finite) add("finite coefficients", false, k);
    if (!(s.sigma > 0.0)) add("sigma>0", false, k);
    if (!(s.lambda > 0.0)) add("lambda>0", false, k);
    if (!(std::abs(s.gamma) > 0.0)) add("|gamma|>0", false, k);
    if (!(s.r >= 0.0)) add("r>=0", false, k);
    coeffs_ok = coeffs_ok && finite && s.sigma > 0.0 && s.lambda > 0.0 && s.gamma != 0.0;
  }
  if (!coeffs_ok) return rep;

  for (std::size_t k = 0; k < m.segments.size(); ++k) {
    rep.smallest_bound = std::max(rep.smallest_bound, bound_sum(m.segments[k]));
  }
  if (m.bound_constant) {
    for (std::size_t k = 0; k < m.segments.size(); ++k) {
      const double v = bound_sum(m.segments[k]);
      if (v > *m.bound_constant) {
        std::ostringstream d;
        d << "bound sum " << v << " exceeds C = " << *m.bound_constant;
        add("bound constant C", false, k, d.str());
      }
    }
  }

  for (const auto& s : m.segments) {
    for (auto cls : {EsscherClass::Linear, EsscherClass::Exponential}) {
      try {
        const double l0 = s.lambda * std::exp(eta(0.0, s, cls) * zeta(s, cls));
        rep.lambda0_max = std::max(rep.lambda0_max, l0);
      } catch (const Error& e) {
        add("eta(0) solvable", false, std::nullopt, e.what());
        return rep;
      }
    }
  }
  // h = T / M must satisfy lambda_0 h < 1.
  const double need = m.horizon * rep.lambda0_max;
  rep.min_lattice_steps = static_cast<std::size_t>(std::floor(need)) + 1;
  if (!std::isfinite(need) || rep.min_lattice_steps > default_lattice_steps) {
    std::ostringstream f;
    f << "lattice step will require h < 1/lambda_0 = " << 1.0 / rep.lambda0_max
      << " (M >= " << rep.min_lattice_steps << ")";
    rep.flags.push_back(f.str());
  }
  return rep;
}

/// Throws ValidationError listing every failed invariant.
inline void require_valid(const MarketModel& m) {
  const auto rep = validate(m);
  if (!rep.ok()) throw ValidationError("invalid model: " + rep.failures());
}

}  // namespace esscher
