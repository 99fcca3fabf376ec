#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "json.hpp"

#include "esscher/error.hpp"
#include "esscher/market_model.hpp"

namespace esscher::io {

using json = nlohmann::json;

namespace detail {

inline double number(const json& j, const char* key, const char* where) {
  if (!j.contains(key)) {
    throw ValidationError(std::string(where) + ": missing field '" + key + "'");
  }
  const auto& v = j.at(key);
  if (!v.is_number()) {
    throw ValidationError(std::string(where) + ": field '" + key + "' must be a number");
  }
  return v.get<double>();
}

inline std::size_t node_count(const json& j) {
  if (!j.contains("nodes")) return 128;
  const auto& v = j.at("nodes");
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw ValidationError("law: 'nodes' must be a positive integer");
  }
  return v.get<std::size_t>();
}

}  // namespace detail

inline JumpLaw parse_law(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw ValidationError("law: expected an object with a string 'type'");
  }
  const auto type = j.at("type").get<std::string>();
  if (type == "atoms") {
    if (!j.contains("x") || !j.contains("p")) throw ValidationError("law atoms: need 'x' and 'p'");
    try {
      return JumpLaw::atoms(j.at("x").get<std::vector<double>>(),
                            j.at("p").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw ValidationError(std::string("law atoms: ") + e.what());
    }
  }
  if (type == "two_point") return JumpLaw::two_point(detail::number(j, "a", "law two_point"));
  if (type == "normal") {
    return JumpLaw::normal(detail::number(j, "m", "law normal"), detail::number(j, "s", "law normal"),
                           detail::node_count(j));
  }
  if (type == "uniform") {
    return JumpLaw::uniform(detail::number(j, "lo", "law uniform"),
                            detail::number(j, "hi", "law uniform"), detail::node_count(j));
  }
  throw ValidationError("law: unknown type '" + type + "' (atoms|normal|two_point|uniform)");
}

inline MarketModel parse_market(const json& j) {
  MarketModel m;
  m.horizon = detail::number(j, "T", "model");
  m.s0 = j.contains("s0") ? detail::number(j, "s0", "model") : 100.0;
  if (j.contains("C")) m.bound_constant = detail::number(j, "C", "model");
  if (!j.contains("segments") || !j.at("segments").is_array() || j.at("segments").empty()) {
    throw ValidationError("model: 'segments' must be a non-empty array");
  }
  for (const auto& s : j.at("segments")) {
    Segment seg;
    seg.t0 = detail::number(s, "t0", "segment");
    seg.r = detail::number(s, "r", "segment");
    seg.b = detail::number(s, "b", "segment");
    seg.sigma = detail::number(s, "sigma", "segment");
    seg.gamma = detail::number(s, "gamma", "segment");
    seg.lambda = detail::number(s, "lambda", "segment");
    m.segments.push_back(seg);
  }
  return m;
}

inline CompoundPoissonModel parse_cp(const json& j) {
  const auto& cp = j.at("cp");
  if (!cp.contains("law")) throw ValidationError("cp: missing 'law'");
  CompoundPoissonModel m{detail::number(cp, "lambda", "cp"), parse_law(cp.at("law")),
                         j.contains("s0") ? detail::number(j, "s0", "model") : 100.0,
                         j.contains("T") ? detail::number(j, "T", "model") : 1.0};
  m.validate();
  return m;
}

/// A model file holds a jump-diffusion ("segments"), a compound Poisson
/// block ("cp"), or both.
struct ModelFile {
  std::optional<MarketModel> market;
  std::optional<CompoundPoissonModel> cp;
};

inline ModelFile parse_model(const json& j) {
  if (!j.is_object()) throw ValidationError("model: top level must be a JSON object");
  ModelFile f;
  if (j.contains("segments")) f.market = parse_market(j);
  if (j.contains("cp")) f.cp = parse_cp(j);
  if (!f.market && !f.cp) throw ValidationError("model: need 'segments' or 'cp'");
  return f;
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in '" + path + "': " + e.what());
  }
  return parse_model(j);
}

inline json to_json(const MarketModel& m) {
  json segs = json::array();
  for (const auto& s : m.segments) {
    segs.push_back({{"t0", s.t0}, {"r", s.r}, {"b", s.b}, {"sigma", s.sigma},
                    {"gamma", s.gamma}, {"lambda", s.lambda}});
  }
  json j = {{"T", m.horizon}, {"s0", m.s0}, {"segments", segs}};
  if (m.bound_constant) j["C"] = *m.bound_constant;
  return j;
}

}  // namespace esscher::io
