// ============================================================================
// app.hpp -- command implementations behind the cpns command-line tool
// ============================================================================
#pragma once
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpns/config.hpp"
#include "cpns/cpns_dist.hpp"
#include "cpns/detector.hpp"
#include "cpns/highrate.hpp"
#include "cpns/simulate.hpp"

#ifndef CPNS_VERSION_STRING
#define CPNS_VERSION_STRING "0.1.0-unknown"
#endif

namespace cpns::app {

using json = nlohmann::ordered_json;
using config::SimEngine;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitNumerical = 4;

enum class Command { dist, ber_curve, sweep, simulate, compare };

struct RunSpec {
  Command command = Command::dist;
  std::string config_path;
  std::string output_path;  ///< .csv or .json
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

inline std::string version() { return CPNS_VERSION_STRING; }

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Comment header shared by every CSV artifact.
inline std::vector<std::string> header_lines(const config::RunConfig& rc, const std::string& command,
                                             std::uint64_t seed) {
  std::vector<std::string> h{"cpns " + version(), "command: " + command, "seed: " + std::to_string(seed),
                             "config_hash: " + config::config_hash(rc.doc),
                             "resolved: t_s=" + fmt(rc.sys.t_s()) + " k_T=" + std::to_string(rc.sys.k_T) +
                                 " k_C=" + std::to_string(rc.sys.cpns.k_C) + " lambda0=" + fmt(rc.sys.noise.lambda0),
                             "config:"};
  std::stringstream ss(config::echo(rc.doc));
  std::string line;
  while (std::getline(ss, line)) h.push_back("  " + line);
  return h;
}

inline json json_header(const config::RunConfig& rc, const std::string& command, std::uint64_t seed) {
  json j;
  j["version"] = version();
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = config::config_hash(rc.doc);
  j["config"] = config::echo(rc.doc);
  j["resolved"] = {{"t_s", rc.sys.t_s()},
                   {"k_T", rc.sys.k_T},
                   {"k_C", rc.sys.cpns.k_C},
                   {"lambda0", rc.sys.noise.lambda0}};
  return j;
}

inline bool wants_json(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

inline void check_output_path(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  if (!csv && !wants_json(path)) throw config::ConfigError("--out must end in .csv or .json");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw config::ConfigError("cannot write " + path);
  return f;
}

inline config::RunConfig load(const RunSpec& spec) {
  config::Document doc = config::parse_ini_file(spec.config_path);
  for (const auto& o : spec.overrides) config::apply_override(doc, o);
  return config::resolve(doc);
}

/// Optimal single-threshold detector of the configured analysis.
struct Analysis {
  LikelihoodPair lp;
  BerCurve curve;
  ThresholdResult best;
  DetectorSpec regions;
};

inline Analysis analyse(const config::RunConfig& rc) {
  Analysis a;
  a.lp = likelihood_pair(rc.sys, rc.analysis.pmf);
  const std::size_t zmax = rc.analysis.zeta_max ? rc.analysis.zeta_max : a.lp.size();
  a.curve = ber_curve(a.lp, zmax);
  a.best = optimal_threshold(a.curve, rc.analysis.search);
  a.regions = decision_regions(a.lp, a.lp.size() - 1);
  return a;
}

inline json threshold_json(const ThresholdResult& t) {
  json j{{"zeta", t.zeta}, {"ber", t.ber}, {"unimodal", t.unimodal}, {"bisection", t.used_bisection}};
  if (!t.warning.empty()) j["warning"] = t.warning;
  return j;
}

// ============================================================================
// Commands
// ============================================================================

inline NoiseModel model_by_name(const std::string& name) {
  for (const auto& [n, m] : config::noise_table())
    if (n == name) return m;
  throw config::ConfigError("dist.models: unknown model '" + name + "'");
}

inline int cmd_dist(const RunSpec& spec, const config::RunConfig& rc, std::ostream& log) {
  const auto names = config::get_words(rc.doc, "dist.models", to_string(rc.sys.noise.model));
  std::vector<std::pair<std::string, Pmf>> out;
  for (const auto& n : names) {
    SystemConfig s = rc.sys;
    s.noise.model = model_by_name(n);
    if ((s.noise.model == NoiseModel::rare_event_approx || s.noise.model == NoiseModel::rare_event_exact) &&
        make_grid(s.cpns, s.noise.T_tilde).rate_warning)
      log << "warning: lambda_e * T_tilde > 0.1; the rare-event assumption is weak\n";
    out.emplace_back(n, noise_pmf(s, rc.analysis.pmf));
  }
  if (wants_json(spec.output_path)) {
    json j = json_header(rc, "dist", spec.seed);
    for (const auto& [n, p] : out) j["pmfs"][n] = {{"masses", p.masses}, {"tail_bound", p.tail_bound}};
    open_out(spec.output_path) << j.dump(2) << '\n';
    return kExitOk;
  }
  if (out.size() == 1) {
    auto f = open_out(spec.output_path);
    write_pmf_csv(f, out[0].second, header_lines(rc, "dist", spec.seed));
    return kExitOk;
  }
  // Several models: one file per model, suffixed with the model name.
  const std::string stem = spec.output_path.substr(0, spec.output_path.size() - 4);
  for (const auto& [n, p] : out) {
    auto f = open_out(stem + "_" + n + ".csv");
    auto h = header_lines(rc, "dist", spec.seed);
    h.insert(h.begin() + 2, "model: " + n);
    write_pmf_csv(f, p, h);
  }
  return kExitOk;
}

inline int cmd_ber_curve(const RunSpec& spec, const config::RunConfig& rc, std::ostream& log) {
  const Analysis a = analyse(rc);
  if (!a.best.warning.empty()) log << "warning: " << a.best.warning << '\n';
  if (wants_json(spec.output_path)) {
    json j = json_header(rc, "ber-curve", spec.seed);
    j["optimal"] = threshold_json(a.best);
    j["detector"] = json::parse(a.regions.to_json());
    j["ber_ml"] = ber_ml(a.lp);
    j["zeta"] = a.curve.zeta;
    j["ber"] = a.curve.ber;
    open_out(spec.output_path) << j.dump(2) << '\n';
  } else {
    auto h = header_lines(rc, "ber-curve", spec.seed);
    h.push_back("optimal: zeta=" + std::to_string(a.best.zeta) + " ber=" + fmt(a.best.ber));
    h.push_back("detector: " + a.regions.to_json());
    auto f = open_out(spec.output_path);
    a.curve.write_csv(f, h);
  }
  return kExitOk;
}

/// Friendly names for the common sweep parameters; any section.key also
/// works. lambda_e_T_tilde sweeps the grid step as T_tilde = v / lambda_e.
inline std::string sweep_key(const std::string& p) {
  if (p == "lambda_e") return "cpns.lambda_e_per_s";
  if (p == "lambda_a") return "cpns.lambda_a";
  if (p == "d_c" || p == "d_c_um") return "cpns.d_c_um";
  if (p == "T_tilde" || p == "T_tilde_s") return "noise.T_tilde_s";
  return p;
}

inline int cmd_sweep(const RunSpec& spec, const config::RunConfig& rc, std::ostream& log) {
  if (!config::has(rc.doc, "sweep.parameter")) throw config::ConfigError("sweep needs sweep.parameter");
  const std::string key = sweep_key(config::get_string(rc.doc, "sweep.parameter", ""));
  const std::vector<double> values = config::get_list(rc.doc, "sweep.values");
  if (values.empty()) throw config::ConfigError("sweep.values is empty");
  json rows = json::array();
  std::vector<std::string> csv;
  for (double v : values) {
    config::Document d = rc.doc;
    if (key == "lambda_e_T_tilde") {
      // Grid step as a multiple of the mean event gap.
      if (!(rc.sys.cpns.lambda_e > 0.0)) throw config::ConfigError("sweep lambda_e_T_tilde needs lambda_e > 0");
      d["noise.T_tilde_s"] = {fmt(v / rc.sys.cpns.lambda_e), 0};
    } else {
      d[key] = {fmt(v), 0};
    }
    const config::RunConfig r = config::resolve(d);
    const Analysis a = analyse(r);
    if (!a.best.warning.empty()) log << "warning at " << key << "=" << fmt(v) << ": " << a.best.warning << '\n';
    rows.push_back({{"value", v}, {"zeta", a.best.zeta}, {"ber", a.best.ber}, {"ber_ml", ber_ml(a.lp)},
                    {"thresholds", a.regions.thresholds.size()}});
    csv.push_back(fmt(v) + "," + std::to_string(a.best.zeta) + "," + fmt(a.best.ber) + "," + fmt(ber_ml(a.lp)));
  }
  if (wants_json(spec.output_path)) {
    json j = json_header(rc, "sweep", spec.seed);
    j["parameter"] = key;
    j["rows"] = rows;
    open_out(spec.output_path) << j.dump(2) << '\n';
  } else {
    auto f = open_out(spec.output_path);
    for (const auto& h : header_lines(rc, "sweep", spec.seed)) f << "# " << h << '\n';
    f << "# parameter: " << key << '\n' << "value,zeta_opt,ber_opt,ber_ml\n";
    for (const auto& l : csv) f << l << '\n';
  }
  return kExitOk;
}

inline DetectorSpec detector_for(const config::RunConfig& rc, const Analysis* a) {
  if (!rc.simulate.thresholds.empty()) return {rc.simulate.thresholds, 0};
  return DetectorSpec::single(a->best.zeta);
}

inline BerEstimate simulate_with(const config::RunConfig& rc, const DetectorSpec& det, std::uint64_t seed,
                                 unsigned threads, SimEngine engine) {
  if (engine == SimEngine::mc) {
    McConfig mc;
    mc.n_bits = rc.simulate.n_bits;
    mc.seed = seed;
    mc.threads = threads;
    mc.block_bits = std::max<std::uint64_t>(rc.simulate.block_bits, 1);
    return mc_run(rc.sys, mc, det);
  }
  PbsConfig pc;
  pc.cfg = rc.sys;
  pc.dt = rc.simulate.dt;
  pc.n_bits = rc.simulate.n_bits;
  pc.seed = seed;
  pc.warmup_slots = rc.simulate.warmup_slots;
  pc.engine = rc.simulate.pbs_engine;
  pc.retirement = rc.simulate.retirement;
  pc.block_bits = rc.simulate.block_bits;
  pc.threads = threads;
  return pbs_run(pc, det);
}

inline json estimate_json(const BerEstimate& e) {
  return {{"errors", e.errors}, {"trials", e.trials}, {"ber", e.ber}, {"ci95", {e.ci_lo, e.ci_hi}}};
}

inline int cmd_simulate(const RunSpec& spec, const config::RunConfig& rc, std::ostream&) {
  const auto t0 = std::chrono::steady_clock::now();
  Analysis a;
  if (rc.simulate.thresholds.empty()) a = analyse(rc);
  const DetectorSpec det = detector_for(rc, &a);
  const BerEstimate e = simulate_with(rc, det, spec.seed, spec.threads, rc.simulate.engine);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json j;
  j["config_hash"] = config::config_hash(rc.doc);
  j["seed"] = spec.seed;
  j["errors"] = e.errors;
  j["trials"] = e.trials;
  j["ber"] = e.ber;
  j["ci95"] = {e.ci_lo, e.ci_hi};
  j["wall_time_s"] = wall;
  j["engine"] = rc.simulate.engine == SimEngine::mc ? "mc" : "pbs";
  j["detector"] = json::parse(det.to_json());
  j["version"] = version();
  j["config"] = config::echo(rc.doc);
  if (wants_json(spec.output_path)) {
    open_out(spec.output_path) << j.dump(2) << '\n';
  } else {
    auto f = open_out(spec.output_path);
    for (const auto& h : header_lines(rc, "simulate", spec.seed)) f << "# " << h << '\n';
    f << "engine,errors,trials,ber,ci95_lo,ci95_hi,wall_time_s\n"
      << j["engine"].get<std::string>() << ',' << e.errors << ',' << e.trials << ',' << fmt(e.ber) << ','
      << fmt(e.ci_lo) << ',' << fmt(e.ci_hi) << ',' << fmt(wall) << '\n';
  }
  return kExitOk;
}

/// Analysis, simulation and the mean-matched homogeneous Poisson baseline
/// side by side.
inline int cmd_compare(const RunSpec& spec, const config::RunConfig& rc, std::ostream& log) {
  const Analysis a = analyse(rc);
  if (!a.best.warning.empty()) log << "warning: " << a.best.warning << '\n';
  config::RunConfig base = rc;
  base.sys.noise.model = NoiseModel::homogeneous_poisson;
  base.sys.noise.lambda0 = cpns_mean(rc.sys.cpns);
  const Analysis b = analyse(base);
  const DetectorSpec det = detector_for(rc, &a);
  const BerEstimate sim = simulate_with(rc, det, spec.seed, spec.threads, rc.simulate.engine);
  if (wants_json(spec.output_path)) {
    json j = json_header(rc, "compare", spec.seed);
    j["analysis"] = threshold_json(a.best);
    j["baseline"] = threshold_json(b.best);
    j["baseline"]["lambda0"] = base.sys.noise.lambda0;
    j["simulation"] = estimate_json(sim);
    j["simulation"]["engine"] = rc.simulate.engine == SimEngine::mc ? "mc" : "pbs";
    j["simulation"]["zeta"] = det.thresholds.empty() ? 0 : det.thresholds.front();
    open_out(spec.output_path) << j.dump(2) << '\n';
  } else {
    auto f = open_out(spec.output_path);
    for (const auto& h : header_lines(rc, "compare", spec.seed)) f << "# " << h << '\n';
    f << "source,zeta,ber,ci95_lo,ci95_hi\n";
    f << "analysis," << a.best.zeta << ',' << fmt(a.best.ber) << ",,\n";
    f << "baseline," << b.best.zeta << ',' << fmt(b.best.ber) << ",,\n";
    f << "simulation," << (det.thresholds.empty() ? 0 : det.thresholds.front()) << ',' << fmt(sim.ber) << ','
      << fmt(sim.ci_lo) << ',' << fmt(sim.ci_hi) << '\n';
  }
  return kExitOk;
}

/// Runs one command; maps failures to exit codes and reports them on `log`.
inline int run(const RunSpec& spec, std::ostream& log = std::cerr) {
  try {
    check_output_path(spec.output_path);
    const config::RunConfig rc = load(spec);
    switch (spec.command) {
      case Command::dist: return cmd_dist(spec, rc, log);
      case Command::ber_curve: return cmd_ber_curve(spec, rc, log);
      case Command::sweep: return cmd_sweep(spec, rc, log);
      case Command::simulate: return cmd_simulate(spec, rc, log);
      case Command::compare: return cmd_compare(spec, rc, log);
    }
  } catch (const config::ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    log << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    log << "infeasible: " << e.what()
        << "\nhint: lower the event rate, shrink the grid (noise.T_tilde_s), raise analysis.k_max or use "
           "noise.model = high_rate for high event rates\n";
    return kExitInfeasible;
  } catch (const ConvergenceError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ModelValidityError& e) {
    log << "model validity: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}

}  // namespace cpns::app
