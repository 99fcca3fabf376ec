#pragma once

#include "esscher/market_model.hpp"
#include "oracles.hpp"

namespace fixtures {

inline constexpr double kBaselineB = -0.025170918075647628;  // b~ = 0 with r = 0

inline esscher::Segment baseline_segment() { return {0.0, 0.0, kBaselineB, 0.2, 0.1, 1.0}; }

inline esscher::MarketModel baseline() {
  return esscher::MarketModel::constant(1.0, 100.0, baseline_segment());
}

inline oracle::Seg as_oracle(const esscher::Segment& s) { return {s.r, s.b, s.sigma, s.gamma, s.lambda}; }

inline esscher::MarketModel two_segment() {
  esscher::MarketModel m;
  m.horizon = 1.0;
  m.s0 = 100.0;
  m.segments = {{0.0, 0.01, 0.0, 0.2, 0.1, 1.0}, {0.5, 0.03, 0.02, 0.2, 0.1, 1.5}};
  return m;
}

}  // namespace fixtures
