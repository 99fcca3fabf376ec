#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "esscher/error.hpp"

namespace esscher {

enum class ClaimKind { Constant, Forward, Call, Put, Digital, CappedCall };

/// European payoff xi = sign * g(S_T).
struct Claim {
  ClaimKind kind = ClaimKind::Constant;
  double strike = 0.0;  // K, or c for Constant
  double cap = 0.0;
  double sign = 1.0;

  static Claim constant(double c) { return {ClaimKind::Constant, c, 0.0, 1.0}; }
  static Claim forward() { return {ClaimKind::Forward, 0.0, 0.0, 1.0}; }
  static Claim call(double k) { return {ClaimKind::Call, k, 0.0, 1.0}; }
  static Claim put(double k) { return {ClaimKind::Put, k, 0.0, 1.0}; }
  static Claim digital(double k) { return {ClaimKind::Digital, k, 0.0, 1.0}; }
  static Claim capped_call(double k, double cap) { return {ClaimKind::CappedCall, k, cap, 1.0}; }

  Claim negated() const {
    Claim c = *this;
    c.sign = -sign;
    return c;
  }

  double payoff(double s) const {
    double g = 0.0;
    switch (kind) {
      case ClaimKind::Constant: g = strike; break;
      case ClaimKind::Forward: g = s; break;
      case ClaimKind::Call: g = std::max(s - strike, 0.0); break;
      case ClaimKind::Put: g = std::max(strike - s, 0.0); break;
      case ClaimKind::Digital: g = s > strike ? 1.0 : 0.0; break;
      case ClaimKind::CappedCall: g = std::min(std::max(s - strike, 0.0), cap); break;
    }
    return sign * g;
  }

  /// Payoff is bounded in S (the moment conditions hold for any bounded claim).
  bool bounded() const { return kind != ClaimKind::Forward && kind != ClaimKind::Call; }

  std::string describe() const {
    std::ostringstream o;
    if (sign < 0) o << "-";
    switch (kind) {
      case ClaimKind::Constant: o << "constant,c=" << strike; break;
      case ClaimKind::Forward: o << "forward"; break;
      case ClaimKind::Call: o << "call,K=" << strike; break;
      case ClaimKind::Put: o << "put,K=" << strike; break;
      case ClaimKind::Digital: o << "digital,K=" << strike; break;
      case ClaimKind::CappedCall: o << "capped_call,K=" << strike << ",cap=" << cap; break;
    }
    return o.str();
  }
};

/// Parses "call,K=100", "capped_call,K=100,cap=20", "constant,c=5", "forward".
inline Claim parse_claim(std::string_view text) {
  std::map<std::string, double> kv;
  std::string kind;
  std::size_t pos = 0;
  bool first = true;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item(text.substr(pos, comma - pos));
    if (first) {
      kind = item;
      first = false;
    } else {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("claim: expected key=value, got '" + item + "'");
      const std::string key = item.substr(0, eq);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item.substr(eq + 1), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != item.size() - eq - 1 || !std::isfinite(v)) {
        throw ValidationError("claim: bad number in '" + item + "'");
      }
      kv[key] = v;
    }
    pos = comma + 1;
  }
  auto need = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("claim '" + kind + "': missing " + key + "=");
    return it->second;
  };
  auto only = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : kv) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
        throw ValidationError("claim '" + kind + "': unknown key '" + k + "'");
      }
    }
  };
  if (kind == "constant") { only({"c"}); return Claim::constant(need("c")); }
  if (kind == "forward") { only({}); return Claim::forward(); }
  if (kind == "call") { only({"K"}); return Claim::call(need("K")); }
  if (kind == "put") { only({"K"}); return Claim::put(need("K")); }
  if (kind == "digital") { only({"K"}); return Claim::digital(need("K")); }
  if (kind == "capped_call") {
    only({"K", "cap"});
    const double cap = need("cap");
    if (!(cap > 0.0)) throw ValidationError("claim capped_call: cap must be > 0");
    return Claim::capped_call(need("K"), cap);
  }
  throw ValidationError("claim: unknown kind '" + kind +
                        "' (constant|forward|call|put|digital|capped_call)");
}

}  // namespace esscher
