#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "esscher/bsde.hpp"
#include "esscher/claim.hpp"
#include "esscher/esscher_solver.hpp"
#include "esscher/lattice.hpp"
#include "esscher/model_io.hpp"
#include "esscher/path_engine.hpp"
#include "esscher/validation.hpp"

namespace esscher::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kSolver = 2, kInvariant = 3 };

using ojson = nlohmann::ordered_json;

/// Shortest round-trip text for a double; CSV output goes through this only.
inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "default" gives 41 points: 0 and +-10^k for 20 k log-spaced in [-2, 4].
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> g;
  if (text == "default") {
    for (int k = 19; k >= 0; --k) g.push_back(-std::pow(10.0, -2.0 + 6.0 * k / 19.0));
    g.push_back(0.0);
    for (int k = 0; k < 20; ++k) g.push_back(std::pow(10.0, -2.0 + 6.0 * k / 19.0));
    return g;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ValidationError("bad grid value '" + item + "'");
    g.push_back(v);
  }
  if (g.empty()) throw ValidationError("empty grid");
  return g;
}

inline std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_grid(text)) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ValidationError("expected positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::vector<double> schedule_up_to(double n_max) {
  std::vector<double> s{0.0};
  for (double n = 1.0; n <= n_max; n *= 2.0) s.push_back(n);
  return s;
}

struct Output {
  std::filesystem::path dir;

  explicit Output(const std::string& d) : dir(d) { std::filesystem::create_directories(dir); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + (dir / name).string());
    f << text;
  }
  void write_json(const std::string& name, const ojson& j) const { write(name, j.dump(2) + "\n"); }
};

inline MarketModel need_market(const io::ModelFile& f) {
  if (!f.market) throw ValidationError("model file has no jump-diffusion 'segments'");
  require_valid(*f.market);
  return *f.market;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::string model;
  std::string grid = "default";
  std::string out = ".";
};

inline int calibrate(const CalibrateArgs& a, std::ostream& log) {
  const auto file = io::load_model(a.model);
  const auto grid = parse_grid(a.grid);
  Output out(a.out);
  double worst = 0.0;
  if (file.market) {
    require_valid(*file.market);
    std::ostringstream csv;
    csv << "class,segment,psi,eta,residual,eta_over_gammatilde\n";
    for (auto cls : {EsscherClass::Linear, EsscherClass::Exponential}) {
      for (std::size_t k = 0; k < file.market->segments.size(); ++k) {
        const auto& s = file.market->segments[k];
        for (double psi : grid) {
          const double e = eta(psi, s, cls);
          const double res = eta_residual(e, psi, s, cls);
          worst = std::max(worst, std::abs(res));
          csv << to_string(cls) << ',' << k << ',' << num(psi) << ',' << num(e) << ','
              << num(res) << ',' << num(e / std::expm1(s.gamma)) << '\n';
        }
      }
    }
    out.write("calibrate_eta.csv", csv.str());
  }
  if (file.cp) {
    std::ostringstream csv;
    csv << "psi,theta_linear,theta_exponential,kappa,kappa_tilde\n";
    for (double psi : grid) {
      std::string tl = "nan", te = "nan", ka = "nan", kt = "nan";
      try {
        const double l = theta_root_cp_linear(psi, file.cp->law);
        tl = num(l);
        kt = num(kappa_linear(l, psi, file.cp->law));
      } catch (const OverflowError&) {
      }
      try {
        const double e = theta_root_cp_exponential(psi, file.cp->law);
        te = num(e);
        ka = num(kappa_exponential(e, psi, file.cp->law));
      } catch (const OverflowError&) {
      }
      csv << num(psi) << ',' << tl << ',' << te << ',' << ka << ',' << kt << '\n';
    }
    out.write("calibrate_cp.csv", csv.str());
  }
  log << "calibrate: " << grid.size() << " psi values, max |eta residual| = " << worst << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string model;
  std::size_t steps = 250;
  std::size_t paths = 100;
  std::uint64_t seed = 0;
  bool jumps_off = false;
  bool diffusion_off = false;
  std::string out = ".";
};

inline int simulate_cmd(const SimulateArgs& a, unsigned threads, std::ostream& log) {
  const auto m = need_market(io::load_model(a.model));
  SimOptions opt{a.jumps_off, a.diffusion_off, threads};
  const auto b = simulate(m, make_grid(m, a.steps), a.paths, a.seed, opt);
  Output out(a.out);
  std::ostringstream csv;
  csv << "path,step,t,dW,dN,X,S\n";
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    csv << p << ",0,0,0,0,0," << num(m.s0) << '\n';
    for (std::size_t i = 0; i < b.steps(); ++i) {
      csv << p << ',' << i + 1 << ',' << num(static_cast<double>(i + 1) * b.grid.h) << ','
          << num(b.dw(p, i)) << ',' << b.dn(p, i) << ',' << num(b.x(p, i + 1)) << ','
          << num(b.s(p, i + 1)) << '\n';
    }
  }
  out.write("paths.csv", csv.str());
  std::vector<double> xt(b.n_paths);
  for (std::size_t p = 0; p < b.n_paths; ++p) xt[p] = b.x(p, b.steps());
  const auto ms = mean_stderr(xt);
  ojson j;
  j["seed"] = a.seed;
  j["paths"] = a.paths;
  j["steps"] = a.steps;
  j["h"] = b.grid.h;
  j["mean_X_T"] = ms.mean;
  j["stderr_X_T"] = ms.se;
  j["stoch_exp_max_rel_error"] = stoch_exp_identity(m, b);
  out.write_json("simulate.json", j);
  log << "simulate: " << a.paths << " paths x " << a.steps << " steps written\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// check

struct CheckArgs {
  std::string model;
  std::uint64_t seed = 0;
  std::size_t paths = 1000;
  std::size_t steps = 250;
  std::size_t mc_paths = 20000;
  std::size_t mc_steps = 50;
  std::size_t lattice_steps = 60;
  std::string out = ".";
};

struct CheckRow {
  std::string name;
  double value;
  double threshold;
  bool pass;
};

inline int check_cmd(const CheckArgs& a, unsigned threads, std::ostream& log) {
  const auto file = io::load_model(a.model);
  const auto m = need_market(file);
  std::vector<CheckRow> rows;
  auto le = [&](std::string name, double v, double thr) {
    rows.push_back({std::move(name), v, thr, std::isfinite(v) && v <= thr});
  };

  const auto grid = parse_grid("default");
  for (auto cls : {EsscherClass::Linear, EsscherClass::Exponential}) {
    const std::string tag = std::string(to_string(cls));
    double res = 0.0, rise = -1e300, lim = 0.0, slope = 0.0, bound = -1e300;
    for (const auto& s : m.segments) {
      const double gt = std::expm1(s.gamma);
      const double zg = zeta(s, cls) / gt;
      const double e0 = eta(0.0, s, cls);
      double prev = std::numeric_limits<double>::infinity();
      for (double psi : grid) {
        const double e = eta(psi, s, cls);
        res = std::max(res, std::abs(eta_residual(e, psi, s, cls)));
        // order of eta / gamma~ read off the cancellation-free gap
        const double g = eta_gap(psi, s, cls) / gt;
        rise = std::max(rise, g - prev);
        prev = g;
        if (psi >= 0.0) bound = std::max(bound, (e0 - e) / gt - zg * psi);
      }
      lim = std::max(lim, std::abs(eta(-1e6, s, cls) / gt - eta_star(s) / gt));
      const double ratio = -eta(1e6, s, cls) / (1e6 * gt);
      slope = std::max(slope, std::abs(ratio - zg) / zg);
    }
    le("eta_residual_" + tag, res, 1e-10);
    rows.push_back({"eta_strictly_decreasing_" + tag, rise, 0.0, rise < 0.0});
    rows.push_back({"eta_growth_bound_" + tag, bound, 0.0, bound <= 1e-12});
    le("eta_limit_minus_inf_" + tag, lim, 1e-3);
    le("eta_slope_limit_n1e6_" + tag, slope, 0.01);
  }

  const auto grid_paths = make_grid(m, a.steps);
  const auto b = simulate(m, grid_paths, a.paths, a.seed, {false, false, threads});
  le("stoch_exp_identity", stoch_exp_identity(m, b), 1e-10);
  double yor = 0.0;
  for (auto cls : {EsscherClass::Linear, EsscherClass::Exponential})
    for (double th : {-2.0, 0.5, 3.0})
      for (double psi : {-2.0, 0.0, 2.0}) yor = std::max(yor, yor_factorization_check(m, b, th, psi, cls));
  le("yor_factorization", yor, 1e-10);
  double bridge = 0.0, root = 0.0;
  for (double th : {-2.0, 0.5, 3.0}) {
    for (double psi : {-2.0, 0.0, 2.0}) {
      const auto r = exp_lin_bridge_check(m, b, th, psi);
      bridge = std::max(bridge, r.max_rel_error);
      root = std::max(root, std::max(r.root_residual, r.drift_gap));
    }
  }
  le("exp_lin_bridge", bridge, 1e-10);
  le("exp_lin_bridge_root_equation", root, 1e-10);
  if (file.cp) {
    const auto cp_paths = simulate_cp(*file.cp, a.paths, a.seed);
    double worst = 0.0;
    for (auto cls : {EsscherClass::Linear, EsscherClass::Exponential}) {
      for (double psi : {-1.0, 0.0, 1.0}) {
        const double th = cls == EsscherClass::Linear ? theta_root_cp_linear(psi, file.cp->law)
                                                      : theta_root_cp_exponential(psi, file.cp->law);
        const auto r = cp_density_check(*file.cp, cp_paths, th, psi, cls);
        worst = std::max({worst, r.closed_vs_stoch_exp, r.dh_vs_closed});
      }
    }
    le("cp_density_closed_form", worst, 1e-10);
  }

  const auto grid_mc = make_grid(m, a.mc_steps);
  for (auto cls : {EsscherClass::Linear, EsscherClass::Exponential}) {
    for (double psi : {-5.0, 0.0, 5.0}) {
      const auto mc = martingale_mc(m, grid_mc, theta_for_psi(m, psi, cls), psi, cls, a.mc_paths,
                                    a.seed, {false, false, threads});
      const std::string tag = std::string(to_string(cls)) + "_psi" + num(psi);
      rows.push_back({"mc_density_" + tag, std::abs(mc.density.mean - 1.0) / mc.density.se, 3.0,
                      mc.density_ok()});
      rows.push_back({"mc_discounted_price_" + tag,
                      std::abs(mc.discounted.mean - m.s0) / mc.discounted.se, 3.0,
                      mc.discounted_ok()});
    }
  }

  const SolveOptions so{threads, true};
  const auto L = Lattice::build(m, EsscherClass::Linear, a.lattice_steps);
  const double c = 7.0;
  const double exact = c * std::exp(-m.integrated_rate(m.horizon));
  const auto cb = bounds(L, Claim::constant(c), {{0.0, 1.0, 16.0}, -1.0, so});
  le("constant_claim_interval", std::max(std::abs(cb.y_up - exact), std::abs(cb.y_inf - exact)), 0.0);
  const auto du = lower_via_duality(L, Claim::call(m.s0), {0.0, 4.0, 64.0}, so);
  le("duality_call", du.max_field_diff, 1e-10);
  const auto un = solve_n(L, Claim::call(m.s0), 16.0, Side::Upper, so);
  const auto ps = solve_psi(L, Claim::call(m.s0), PsiControl::field(un.Psi), so);
  double bang = 0.0;
  for (std::size_t i = 0; i < un.Yd.size(); ++i)
    for (std::size_t k = 0; k < un.Yd[i].size(); ++k) bang = std::max(bang, std::abs(un.Yd[i][k] - ps.Yd[i][k]));
  le("bang_bang_fixed_point", bang, 0.0);

  Output out(a.out);
  std::ostringstream csv;
  csv << "name,max_error,threshold,pass\n";
  ojson j;
  j["seed"] = a.seed;
  j["checks"] = ojson::array();
  bool all = true;
  for (const auto& r : rows) {
    csv << r.name << ',' << num(r.value) << ',' << num(r.threshold) << ',' << (r.pass ? 1 : 0) << '\n';
    j["checks"].push_back({{"name", r.name}, {"max_error", r.value}, {"threshold", r.threshold}, {"pass", r.pass}});
    all = all && r.pass;
    if (!r.pass) log << "FAIL " << r.name << " value " << r.value << " threshold " << r.threshold << "\n";
  }
  j["all_pass"] = all;
  out.write("check.csv", csv.str());
  out.write_json("check.json", j);
  log << "check: " << rows.size() << " checks, " << (all ? "all pass" : "failures") << "\n";
  return all ? kOk : kInvariant;
}

// ---------------------------------------------------------------------------
// price

struct PriceArgs {
  std::string model;
  std::string claim;
  double psi = 0.0;
  std::string cls = "linear";
  std::size_t steps = 120;
  std::size_t paths = 100000;
  std::uint64_t seed = 0;
  std::string out = ".";
};

inline int price_cmd(const PriceArgs& a, unsigned threads, std::ostream& log) {
  const auto m = need_market(io::load_model(a.model));
  const auto claim = parse_claim(a.claim);
  const auto cls = parse_class(a.cls);
  const auto mc = price_mc(m, a.psi, claim, cls, make_grid(m, a.steps), a.paths, a.seed,
                           {false, false, threads});
  const auto L = Lattice::build(m, cls, a.steps);
  const auto sol = solve_psi(L, claim, a.psi, {threads, true});
  ojson j;
  j["claim"] = claim.describe();
  j["class"] = a.cls;
  j["psi"] = a.psi;
  j["seed"] = a.seed;
  j["mc"] = {{"paths", a.paths}, {"steps", a.steps}, {"price", mc.mean}, {"stderr", mc.se}};
  j["lattice"] = {{"steps", a.steps}, {"price", sol.y0()}, {"monotone", sol.monotone}};
  Output(a.out).write_json("price.json", j);
  log << "price: MC " << mc.mean << " +- " << mc.se << ", lattice " << sol.y0() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsArgs {
  std::string model;
  std::string claim;
  std::string cls = "linear";
  std::size_t steps = 120;
  double n_max = 1024;
  double tol = -1.0;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool dump_lattice = false;
};

inline std::string convergence_svg(const BoundsReport& rep) {
  const double W = 640, H = 400, left = 70, right = 20, top = 30, bottom = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rep.rows) {
    lo = std::min({lo, r.y_lower, r.y_upper});
    hi = std::max({hi, r.y_lower, r.y_upper});
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const std::size_t n = rep.rows.size();
  auto X = [&](std::size_t k) {
    return left + (n > 1 ? (W - left - right) * static_cast<double>(k) / static_cast<double>(n - 1) : 0.0);
  };
  auto Y = [&](double v) { return top + (H - top - bottom) * (hi - v) / (hi - lo); };
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << rep.claim
    << " (" << rep.cls << ", M=" << rep.steps << ")</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\""
    << H - bottom << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n";
  for (std::size_t k = 0; k < n; ++k) {
    s << "<text x=\"" << f(X(k)) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << num(rep.rows[k].n) << "</text>\n";
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">n</text>\n";
  for (double v : {lo, 0.5 * (lo + hi), hi}) {
    s << "<text x=\"" << left - 6 << "\" y=\"" << f(Y(v) + 4) << "\" text-anchor=\"end\" font-size=\"10\">"
      << f(v) << "</text>\n";
  }
  auto line = [&](auto get, const char* colour, const char* label, double ly) {
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < n; ++k) s << (k ? " " : "") << f(X(k)) << ',' << f(Y(get(rep.rows[k])));
    s << "\"/>\n";
    for (std::size_t k = 0; k < n; ++k) {
      s << "<circle cx=\"" << f(X(k)) << "\" cy=\"" << f(Y(get(rep.rows[k]))) << "\" r=\"2.5\" fill=\""
        << colour << "\"/>\n";
    }
    s << "<text x=\"" << W - right - 110 << "\" y=\"" << ly << "\" font-size=\"11\" fill=\"" << colour
      << "\">" << label << "</text>\n";
  };
  line([](const BoundsRow& r) { return r.y_upper; }, "#b2182b", "upper Y(n)", top + 14);
  line([](const BoundsRow& r) { return r.y_lower; }, "#2166ac", "lower Y(n)", top + 28);
  s << "</svg>\n";
  return s.str();
}

inline ojson to_json(const BoundsReport& rep) {
  ojson j;
  j["claim"] = rep.claim;
  j["class"] = rep.cls;
  j["steps"] = rep.steps;
  j["h"] = rep.h;
  j["tol"] = rep.tol;
  j["n_monotone_limit"] = rep.n_monotone_limit;
  j["Y_inf"] = rep.y_inf;
  j["Y_psi0"] = rep.y_psi0;
  j["Y_up"] = rep.y_up;
  j["converged_upper"] = rep.converged_upper;
  j["converged_lower"] = rep.converged_lower;
  j["n_stop_upper"] = rep.n_stop_upper;
  j["n_stop_lower"] = rep.n_stop_lower;
  j["cauchy_upper"] = rep.cauchy_upper;
  j["cauchy_lower"] = rep.cauchy_lower;
  j["rows"] = ojson::array();
  for (const auto& r : rep.rows) {
    j["rows"].push_back({{"n", r.n},
                         {"n_eff", r.n_eff},
                         {"Y_upper", r.y_upper},
                         {"Y_lower", r.y_lower},
                         {"v_upper", r.v_upper},
                         {"v_lower", r.v_lower},
                         {"K_T_upper", r.k_upper},
                         {"K_T_lower", r.k_lower},
                         {"skorokhod_upper", r.skorokhod_upper},
                         {"skorokhod_lower", r.skorokhod_lower},
                         {"monotone", r.monotone}});
  }
  return j;
}

inline int bounds_cmd(const BoundsArgs& a, unsigned threads, std::ostream& log) {
  const auto m = need_market(io::load_model(a.model));
  const auto claim = parse_claim(a.claim);
  const auto cls = parse_class(a.cls);
  if (!(a.n_max >= 0.0)) throw ValidationError("--n-max must be >= 0");
  const auto L = Lattice::build(m, cls, a.steps);
  Output out(a.out);
  if (a.dump_lattice) {
    std::ostringstream d;
    L.dump(d, 2);
    out.write("lattice.csv", d.str());
  }
  const auto adm = admissibility(L, claim, integer_grid(-8, 8), 2.0, {threads, true});
  if (!adm.pass) throw ValidationError("claim " + claim.describe() + " is not admissible: " + adm.note);
  const auto rep = bounds(L, claim, {schedule_up_to(a.n_max), a.tol, {threads, true}});
  auto j = to_json(rep);
  if (a.seed) j["seed"] = *a.seed;
  j["admissibility"] = {{"bounded", adm.bounded}, {"pass", adm.pass}, {"note", adm.note}};
  out.write_json("bounds.json", j);
  std::ostringstream csv;
  csv << "n,Y_n_upper,Y_n_lower,v_n,n_v_n,K_T_aggregate,n_eff,v_n_lower,K_T_lower\n";
  for (const auto& r : rep.rows) {
    csv << num(r.n) << ',' << num(r.y_upper) << ',' << num(r.y_lower) << ',' << num(r.v_upper) << ','
        << num(r.n_eff * r.v_upper) << ',' << num(r.k_upper) << ',' << num(r.n_eff) << ','
        << num(r.v_lower) << ',' << num(r.k_lower) << '\n';
  }
  out.write("convergence.csv", csv.str());
  out.write("convergence.svg", convergence_svg(rep));
  log << "bounds: [" << rep.y_inf << ", " << rep.y_up << "] (psi=0: " << rep.y_psi0 << ")";
  if (!rep.converged()) log << " NOT CONVERGED within the schedule";
  if (rep.rows.back().n_eff < rep.rows.back().n) {
    log << "; n clamped to the monotone limit " << rep.n_monotone_limit;
  }
  log << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string model;
  std::string claim = "call,K=100";
  std::string steps = "30,60,120";
  std::string out = ".";
};

inline int report_cmd(const ReportArgs& a, unsigned threads, std::ostream& log) {
  const auto m = need_market(io::load_model(a.model));
  const auto claim = parse_claim(a.claim);
  const auto sizes = parse_sizes(a.steps);
  const BoundsOptions bo{default_schedule(), -1.0, {threads, true}};
  ojson j;
  j["claim"] = claim.describe();
  j["class_compare"] = ojson::array();
  std::ostringstream csv;
  csv << "steps,up_linear,up_exponential,inf_linear,inf_exponential,diff_up,diff_inf\n";
  for (const auto& r : class_compare(m, claim, sizes, bo)) {
    j["class_compare"].push_back({{"steps", r.steps},
                                  {"up_linear", r.up_linear},
                                  {"up_exponential", r.up_exponential},
                                  {"inf_linear", r.inf_linear},
                                  {"inf_exponential", r.inf_exponential},
                                  {"diff_up", r.diff_up()},
                                  {"diff_inf", r.diff_inf()}});
    csv << r.steps << ',' << num(r.up_linear) << ',' << num(r.up_exponential) << ','
        << num(r.inf_linear) << ',' << num(r.inf_exponential) << ',' << num(r.diff_up()) << ','
        << num(r.diff_inf()) << '\n';
  }
  const auto L = Lattice::build(m, EsscherClass::Linear, sizes.back());
  const auto rep = bounds(L, claim, bo);
  const auto sw = interval_sandwich(L, claim, integer_grid(-8, 8), rep.y_inf, rep.y_up,
                                    1e-3 * m.s0 * L.h(), {threads, true});
  j["bounds"] = to_json(rep);
  j["sandwich"] = ojson::array();
  for (const auto& p : sw.points) {
    j["sandwich"].push_back({{"psi", p.psi}, {"Y", p.y}, {"inside", p.inside}, {"monotone", p.monotone}});
  }
  j["sandwich_all_inside"] = sw.all_inside();
  Output out(a.out);
  out.write_json("report.json", j);
  out.write("class_compare.csv", csv.str());
  log << "report: written to " << out.dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Second-order Esscher pricing engine"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker cap (results do not depend on it)")
      ->check(CLI::Range(1u, 1024u));

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "Solve eta(psi) and the compound Poisson roots on a psi grid");
  cal->add_option("--model", ca.model, "Model JSON")->required();
  cal->add_option("--psi-grid", ca.grid, "Comma-separated psi values or 'default'");
  cal->add_option("--out", ca.out, "Output directory");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate exact jump-diffusion paths");
  sim->add_option("--model", sa.model, "Model JSON")->required();
  sim->add_option("--steps", sa.steps, "Time steps")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  sim->add_option("--paths", sa.paths, "Path count")->check(CLI::Range(std::size_t{1}, std::size_t{10000000}));
  sim->add_option("--seed", sa.seed, "RNG seed")->required();
  sim->add_flag("--jumps-off", sa.jumps_off, "Force every jump count to 0");
  sim->add_flag("--diffusion-off", sa.diffusion_off, "Force every Brownian increment to 0");
  sim->add_option("--out", sa.out, "Output directory");

  CheckArgs ka;
  auto* chk = app.add_subcommand("check", "Run the invariant suite");
  chk->add_option("--model", ka.model, "Model JSON")->required();
  chk->add_option("--seed", ka.seed, "RNG seed")->required();
  chk->add_option("--paths", ka.paths, "Paths for pathwise identities")->check(CLI::Range(std::size_t{1}, std::size_t{10000000}));
  chk->add_option("--steps", ka.steps, "Steps for pathwise identities")->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  chk->add_option("--mc-paths", ka.mc_paths, "Paths for the martingale Monte Carlo")->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));
  chk->add_option("--mc-steps", ka.mc_steps, "Steps for the martingale Monte Carlo")->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  chk->add_option("--lattice-steps", ka.lattice_steps, "Lattice steps")->check(CLI::Range(std::size_t{1}, std::size_t{2000}));
  chk->add_option("--out", ka.out, "Output directory");

  PriceArgs pa;
  auto* pri = app.add_subcommand("price", "Price one claim under one psi (Monte Carlo and lattice)");
  pri->add_option("--model", pa.model, "Model JSON")->required();
  pri->add_option("--claim", pa.claim, "e.g. call,K=100")->required();
  pri->add_option("--psi", pa.psi, "Constant psi");
  pri->add_option("--class", pa.cls, "linear|exponential")->check(CLI::IsMember({"linear", "exponential"}));
  pri->add_option("--steps", pa.steps, "Time steps")->check(CLI::Range(std::size_t{1}, std::size_t{2000}));
  pri->add_option("--paths", pa.paths, "Path count")->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));
  pri->add_option("--seed", pa.seed, "RNG seed")->required();
  pri->add_option("--out", pa.out, "Output directory");

  BoundsArgs ba;
  std::uint64_t seed_value = 0;
  auto* bnd = app.add_subcommand("bounds", "Esscher pricing interval via BSDE(n)");
  bnd->add_option("--model", ba.model, "Model JSON")->required();
  bnd->add_option("--claim", ba.claim, "e.g. call,K=100")->required();
  bnd->add_option("--class", ba.cls, "linear|exponential")->check(CLI::IsMember({"linear", "exponential"}));
  bnd->add_option("--steps", ba.steps, "Lattice steps M")->check(CLI::Range(std::size_t{1}, std::size_t{2000}));
  bnd->add_option("--n-max", ba.n_max, "Largest n in the schedule 0,1,2,4,...")->check(CLI::Range(0.0, 1e9));
  bnd->add_option("--tol", ba.tol, "Cauchy tolerance (default 1e-6 s0)");
  auto* seed_opt = bnd->add_option("--seed", seed_value, "Recorded in the output; the lattice is deterministic");
  bnd->add_option("--out", ba.out, "Output directory");
  bnd->add_flag("--dump-lattice", ba.dump_lattice, "Write lattice.csv for slices 0..2");

  ReportArgs ra;
  auto* rpt = app.add_subcommand("report", "Class comparison and psi sandwich");
  rpt->add_option("--model", ra.model, "Model JSON")->required();
  rpt->add_option("--claim", ra.claim, "e.g. call,K=100");
  rpt->add_option("--steps", ra.steps, "Comma-separated lattice sizes");
  rpt->add_option("--out", ra.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*cal) return calibrate(ca, log);
    if (*sim) return simulate_cmd(sa, threads, log);
    if (*chk) return check_cmd(ka, threads, log);
    if (*pri) return price_cmd(pa, threads, log);
    if (*bnd) {
      if (seed_opt->count() > 0) ba.seed = seed_value;
      return bounds_cmd(ba, threads, log);
    }
    if (*rpt) return report_cmd(ra, threads, log);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << " (bracket [" << e.bracket_lo() << ", "
        << e.bracket_hi() << "])\n";
    return kSolver;
  } catch (const OverflowError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kSolver;
  }
  return kValidation;
}

}  // namespace esscher::cli
