// ============================================================================
// config.hpp -- INI-style run configuration with unit-suffixed keys
//
//   [channel]      D_m2_per_s, r_r_um
//   [transmitter]  d_t_um, N
//   [cpns]         d_c_um, lambda_e_per_s, lambda_a
//   [timing]       T_s, t_s_s | t_s_mode = slot_end | peak
//   [memory]       rho, k_t, k_c            (k_* = auto -> channel memory)
//   [noise]        model, T_tilde_s, lambda0 (lambda0 = matched -> CPNS mean)
//   [analysis]     zeta_max, tail_tol, k_max, search
//   [simulate]     engine, pbs_engine, n_bits, dt_s, warmup_slots,
//                  block_bits, retirement, thresholds
//   [sweep]        parameter, values
//   [dist]         models
// ============================================================================
#pragma once
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpns/channel.hpp"
#include "cpns/detector.hpp"
#include "cpns/errors.hpp"
#include "cpns/simulate.hpp"

namespace cpns::config {

/// Malformed configuration; the message carries the source line when known.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct Entry {
  std::string value;
  int line = 0;  ///< 0 for command-line overrides
};

/// section.key -> value, in key order.
using Document = std::map<std::string, Entry>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline Document parse_ini(std::istream& in, const std::string& source = "<config>") {
  Document doc;
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find_first_of("#;");
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(source + ":" + std::to_string(n) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
    if (section.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": key outside any section");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty key");
    const std::string full = section + "." + key;
    if (doc.count(full)) throw ConfigError(source + ":" + std::to_string(n) + ": duplicate key " + full);
    doc[full] = {trim(t.substr(eq + 1)), n};
  }
  return doc;
}

inline Document parse_ini_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_ini(f, path);
}

/// Applies a `section.key=value` override.
inline void apply_override(Document& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
  const std::string key = trim(kv.substr(0, eq));
  if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' needs section.key form");
  doc[key] = {trim(kv.substr(eq + 1)), 0};
}

// ============================================================================
// Typed access
// ============================================================================

inline std::string where(const std::string& key, const Entry& e) {
  return e.line > 0 ? "line " + std::to_string(e.line) + " (" + key + ")" : "override " + key;
}

inline bool has(const Document& d, const std::string& key) { return d.count(key) > 0; }

inline std::string get_string(const Document& d, const std::string& key, const std::string& fallback) {
  auto it = d.find(key);
  return it == d.end() ? fallback : it->second.value;
}

inline double get_double(const Document& d, const std::string& key) {
  auto it = d.find(key);
  if (it == d.end()) throw ConfigError("missing required key " + key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second.value, &pos);
    if (pos != it->second.value.size()) throw std::invalid_argument("trailing");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where(key, it->second) + ": expected a number, got '" + it->second.value + "'");
  }
}

inline double get_double(const Document& d, const std::string& key, double fallback) {
  return has(d, key) ? get_double(d, key) : fallback;
}

inline long long get_int(const Document& d, const std::string& key) {
  auto it = d.find(key);
  if (it == d.end()) throw ConfigError("missing required key " + key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second.value, &pos);
    if (pos != it->second.value.size() || v != std::floor(v) || std::abs(v) > 9e15)
      throw std::invalid_argument("not an integer");
    return static_cast<long long>(v);
  } catch (const std::exception&) {
    throw ConfigError(where(key, it->second) + ": expected an integer, got '" + it->second.value + "'");
  }
}

inline long long get_int(const Document& d, const std::string& key, long long fallback) {
  return has(d, key) ? get_int(d, key) : fallback;
}

inline std::vector<double> get_list(const Document& d, const std::string& key) {
  auto it = d.find(key);
  if (it == d.end()) throw ConfigError("missing required key " + key);
  std::vector<double> out;
  std::stringstream ss(it->second.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(where(key, it->second) + ": bad list element '" + item + "'");
    }
  }
  return out;
}

inline std::vector<std::string> get_words(const Document& d, const std::string& key, const std::string& fallback) {
  std::vector<std::string> out;
  std::string v = get_string(d, key, fallback);
  for (char& c : v)
    if (c == ',') c = ' ';
  std::stringstream ss(v);
  std::string item;
  while (ss >> item) out.push_back(item);
  return out;
}

template <class Enum>
Enum get_enum(const Document& d, const std::string& key, const std::string& fallback,
              const std::vector<std::pair<std::string, Enum>>& table) {
  const std::string v = get_string(d, key, fallback);
  for (const auto& [name, e] : table)
    if (name == v) return e;
  std::string allowed;
  for (const auto& [name, e] : table) allowed += (allowed.empty() ? "" : ", ") + name;
  auto it = d.find(key);
  const std::string loc = it == d.end() ? key : where(key, it->second);
  throw ConfigError(loc + ": '" + v + "' is not one of {" + allowed + "}");
}

inline const std::vector<std::pair<std::string, NoiseModel>>& noise_table() {
  static const std::vector<std::pair<std::string, NoiseModel>> t{
      {"none", NoiseModel::none},
      {"homogeneous_poisson", NoiseModel::homogeneous_poisson},
      {"rare_event_approx", NoiseModel::rare_event_approx},
      {"rare_event_exact", NoiseModel::rare_event_exact},
      {"high_rate", NoiseModel::high_rate}};
  return t;
}

// ============================================================================
// Resolved run configuration
// ============================================================================

enum class SimEngine { mc, pbs };

struct AnalysisOptions {
  std::size_t zeta_max = 0;  ///< 0: full likelihood support
  PmfOptions pmf;
  ThresholdSearch search = ThresholdSearch::bisection;
};

struct SimulateOptions {
  SimEngine engine = SimEngine::mc;
  PbsEngine pbs_engine = PbsEngine::lazy_exact;
  Retirement retirement = Retirement::matched;
  std::uint64_t n_bits = 100000;
  double dt = 1e-3;
  int warmup_slots = -1;
  std::uint64_t block_bits = 10000;
  std::vector<long long> thresholds;  ///< empty: optimal single threshold
};

struct RunConfig {
  SystemConfig sys;
  AnalysisOptions analysis;
  SimulateOptions simulate;
  Document doc;  ///< the source values, kept for the echo
};

namespace detail {

inline int memory_slots(const Document& d, const std::string& key, const ChannelParams& ch, double rho, double T) {
  const std::string v = get_string(d, key, "auto");
  if (v == "auto") return channel_memory(ch, rho, T).k;
  const long long k = get_int(d, key);
  if (k < 0 || k > 1'000'000) throw ConfigError(where(key, d.at(key)) + ": slot count out of range");
  return static_cast<int>(k);
}

}  // namespace detail

/// Builds the typed configuration. Every value is a deterministic function
/// of the document, so echoing the document reproduces the configuration.
inline RunConfig resolve(const Document& doc) {
  static const std::vector<std::string> known{
      "channel.D_m2_per_s", "channel.r_r_um", "transmitter.d_t_um", "transmitter.N", "cpns.d_c_um",
      "cpns.lambda_e_per_s", "cpns.lambda_a", "timing.T_s", "timing.t_s_s", "timing.t_s_mode", "memory.rho",
      "memory.k_t", "memory.k_c", "noise.model", "noise.T_tilde_s", "noise.lambda0", "analysis.zeta_max",
      "analysis.tail_tol", "analysis.k_max", "analysis.search", "simulate.engine", "simulate.pbs_engine",
      "simulate.n_bits", "simulate.dt_s", "simulate.warmup_slots", "simulate.block_bits", "simulate.retirement",
      "simulate.thresholds", "sweep.parameter", "sweep.values", "dist.models"};
  for (const auto& [k, e] : doc) {
    bool ok = false;
    for (const auto& n : known) ok = ok || n == k;
    if (!ok) throw ConfigError(where(k, e) + ": unknown key");
  }

  RunConfig rc;
  rc.doc = doc;
  try {
    SystemConfig& s = rc.sys;
    const double D = get_double(doc, "channel.D_m2_per_s");
    const double rR = get_double(doc, "channel.r_r_um") * 1e-6;
    s.tx = {D, get_double(doc, "transmitter.d_t_um") * 1e-6, rR};
    s.N = get_double(doc, "transmitter.N");
    s.cpns.channel = {D, get_double(doc, "cpns.d_c_um") * 1e-6, rR};
    s.cpns.lambda_e = get_double(doc, "cpns.lambda_e_per_s");
    s.cpns.lambda_a = get_double(doc, "cpns.lambda_a");
    const double T = get_double(doc, "timing.T_s");
    s.cpns.slot_T = T;
    if (has(doc, "timing.t_s_s")) {
      s.cpns.t_s = get_double(doc, "timing.t_s_s");
    } else {
      const std::string mode = get_string(doc, "timing.t_s_mode", "slot_end");
      if (mode == "slot_end") {
        s.cpns.t_s = T;
      } else if (mode == "peak") {
        s.cpns.t_s = std::min(T, hit_prob_peak_time(s.tx));
      } else {
        throw ConfigError(where("timing.t_s_mode", doc.at("timing.t_s_mode")) + ": expected slot_end or peak");
      }
    }
    const double rho = get_double(doc, "memory.rho", 0.95);
    s.k_T = detail::memory_slots(doc, "memory.k_t", s.tx, rho, T);
    s.cpns.k_C = std::max(1, detail::memory_slots(doc, "memory.k_c", s.cpns.channel, rho, T));

    s.noise.model = get_enum(doc, "noise.model", "rare_event_approx", noise_table());
    s.noise.T_tilde = get_double(doc, "noise.T_tilde_s", 0.0);
    if (s.noise.model == NoiseModel::rare_event_approx || s.noise.model == NoiseModel::rare_event_exact)
      if (!(s.noise.T_tilde > 0.0)) throw ConfigError("noise.T_tilde_s must be set and positive for rare-event models");
    const std::string l0 = get_string(doc, "noise.lambda0", "matched");
    s.noise.lambda0 = l0 == "matched" ? cpns_mean(s.cpns) : get_double(doc, "noise.lambda0");
    s.validate();

    AnalysisOptions& a = rc.analysis;
    const long long zm = get_int(doc, "analysis.zeta_max", 0);
    if (zm < 0) throw ConfigError("analysis.zeta_max must be >= 0");
    a.zeta_max = static_cast<std::size_t>(zm);
    a.pmf.tail_tol = get_double(doc, "analysis.tail_tol", kDefaultTailTol);
    if (!(a.pmf.tail_tol > 0.0 && a.pmf.tail_tol < 1e-2)) throw ConfigError("analysis.tail_tol must lie in (0, 0.01)");
    const long long km = get_int(doc, "analysis.k_max", 2'000'000);
    if (km < 1) throw ConfigError("analysis.k_max must be >= 1");
    a.pmf.k_max = static_cast<std::size_t>(km);
    a.search = get_enum<ThresholdSearch>(doc, "analysis.search", "bisection",
                                         {{"bisection", ThresholdSearch::bisection}, {"grid", ThresholdSearch::grid}});

    SimulateOptions& m = rc.simulate;
    m.engine = get_enum<SimEngine>(doc, "simulate.engine", "mc", {{"mc", SimEngine::mc}, {"pbs", SimEngine::pbs}});
    m.pbs_engine = get_enum<PbsEngine>(doc, "simulate.pbs_engine", "lazy_exact",
                                       {{"lazy_exact", PbsEngine::lazy_exact}, {"stepping", PbsEngine::stepping}});
    m.retirement = get_enum<Retirement>(doc, "simulate.retirement", "matched",
                                        {{"matched", Retirement::matched}, {"uniform", Retirement::uniform}});
    const long long nb = get_int(doc, "simulate.n_bits", 100000);
    if (nb < 1) throw ConfigError("simulate.n_bits must be >= 1");
    m.n_bits = static_cast<std::uint64_t>(nb);
    m.dt = get_double(doc, "simulate.dt_s", 1e-3);
    m.warmup_slots = static_cast<int>(get_int(doc, "simulate.warmup_slots", -1));
    const long long bb = get_int(doc, "simulate.block_bits", 10000);
    if (bb < 1) throw ConfigError("simulate.block_bits must be >= 1");
    m.block_bits = static_cast<std::uint64_t>(bb);
    if (has(doc, "simulate.thresholds"))
      for (double z : get_list(doc, "simulate.thresholds")) {
        if (z < 1 || z != std::floor(z)) throw ConfigError("simulate.thresholds must be integers >= 1");
        m.thresholds.push_back(static_cast<long long>(z));
      }
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  } catch (const ModelValidityError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return rc;
}

/// The document as INI text. Values are written verbatim, so parsing the
/// echo and resolving it again yields an identical configuration.
inline std::string echo(const Document& doc) {
  std::string out, section;
  for (const auto& [k, e] : doc) {
    const auto dot = k.find('.');
    const std::string sec = k.substr(0, dot);
    if (sec != section) {
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.substr(dot + 1) + " = " + e.value + "\n";
  }
  return out;
}

/// 64-bit FNV-1a of the echo, as 16 hex digits.
inline std::string config_hash(const Document& doc) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : echo(doc)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cpns::config
