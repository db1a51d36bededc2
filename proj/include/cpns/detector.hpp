// ============================================================================
// detector.hpp -- symbol-by-symbol ML detection, decision regions and BER
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cpns/channel.hpp"
#include "cpns/cpns_dist.hpp"
#include "cpns/errors.hpp"
#include "cpns/highrate.hpp"
#include "cpns/pmf.hpp"
#include "cpns/special_functions.hpp"

namespace cpns {

enum class NoiseModel { none, homogeneous_poisson, rare_event_approx, rare_event_exact, high_rate };

inline const char* to_string(NoiseModel m) {
  switch (m) {
    case NoiseModel::none: return "none";
    case NoiseModel::homogeneous_poisson: return "homogeneous_poisson";
    case NoiseModel::rare_event_approx: return "rare_event_approx";
    case NoiseModel::rare_event_exact: return "rare_event_exact";
    case NoiseModel::high_rate: return "high_rate";
  }
  return "?";
}

struct NoiseSpec {
  NoiseModel model = NoiseModel::none;
  double T_tilde = 0.0;  ///< interval length for the rare-event models, s
  double lambda0 = 0.0;  ///< mean of the homogeneous Poisson baseline

  bool operator==(const NoiseSpec&) const = default;
};

/// Full link: OOK transmitter at distance d_T (tx.r), the noise source, the
/// slot timing and the noise model used by the analysis. Slot length and the
/// sampling offset live in `cpns` (slot_T, t_s) and are shared by both paths.
struct SystemConfig {
  ChannelParams tx;
  CpnsParams cpns;
  double N = 0.0;  ///< mean molecules released for bit 1
  int k_T = 0;     ///< transmitter memory in slots
  NoiseSpec noise;

  double slot_T() const { return cpns.slot_T; }
  double t_s() const { return cpns.t_s; }

  void validate() const {
    tx.validate();
    cpns.validate();
    if (cpns.channel.D != tx.D) throw DomainError("SystemConfig: both channels must share D");
    if (cpns.channel.r_R != tx.r_R) throw DomainError("SystemConfig: both channels must share r_R");
    if (!std::isfinite(N) || N < 0.0) throw DomainError("SystemConfig: N must be >= 0");
    if (k_T < 0) throw DomainError("SystemConfig: k_T must be >= 0");
    if (noise.model == NoiseModel::homogeneous_poisson && !(noise.lambda0 >= 0.0))
      throw DomainError("SystemConfig: lambda0 must be >= 0");
    if ((noise.model == NoiseModel::rare_event_approx || noise.model == NoiseModel::rare_event_exact) &&
        !(noise.T_tilde > 0.0))
      throw DomainError("SystemConfig: rare-event models need T_tilde > 0");
  }

  bool operator==(const SystemConfig&) const = default;
};

/// a_j = N p_T(j T + t_s), j = 0..k_T.
inline std::vector<double> signal_means(const SystemConfig& cfg) {
  cfg.validate();
  std::vector<double> a(static_cast<std::size_t>(cfg.k_T) + 1);
  for (int j = 0; j <= cfg.k_T; ++j)
    a[static_cast<std::size_t>(j)] = cfg.N * hit_prob(cfg.tx, j * cfg.slot_T() + cfg.t_s());
  return a;
}

inline constexpr int kMaxPatternBits = 20;

/// Interference means sum_{j>=1} b_j a_j for every pattern of b_{1..k_T},
/// pattern bit j-1 of the index holding b_j.
inline std::vector<double> interference_means(const std::vector<double>& a) {
  const int k_T = static_cast<int>(a.size()) - 1;
  if (k_T > kMaxPatternBits) throw InfeasibleError("interference enumeration limited to k_T <= 20");
  const std::size_t count = std::size_t{1} << k_T;
  std::vector<double> s(count, 0.0);
  for (std::size_t b = 0; b < count; ++b)
    for (int j = 1; j <= k_T; ++j)
      if (b & (std::size_t{1} << (j - 1))) s[b] += a[static_cast<std::size_t>(j)];
  return s;
}

// ============================================================================
// Noise and conditional distributions
// ============================================================================

/// Count distribution of the configured noise model.
inline Pmf noise_pmf(const SystemConfig& cfg, const PmfOptions& opt = {}) {
  cfg.validate();
  switch (cfg.noise.model) {
    case NoiseModel::none: return Pmf::delta();
    case NoiseModel::homogeneous_poisson: return poisson_pmf(cfg.noise.lambda0, opt.tail_tol);
    case NoiseModel::rare_event_approx:
      return rare_event_pmf(cfg.cpns, make_grid(cfg.cpns, cfg.noise.T_tilde), RareEventMode::approx, opt);
    case NoiseModel::rare_event_exact:
      return rare_event_pmf(cfg.cpns, make_grid(cfg.cpns, cfg.noise.T_tilde), RareEventMode::exact, opt);
    case NoiseModel::high_rate: {
      const Cumulants c = cumulants(cfg.cpns);
      if (c.k2 == 0.0) return Pmf::delta();
      return highrate_pmf(c);
    }
  }
  throw DomainError("noise_pmf: unknown model");
}

/// Poisson(sum_j b_j a_j) convolved with the noise. bits[0] is the current bit.
inline Pmf conditional_signal_pmf(const SystemConfig& cfg, const std::vector<int>& bits, const Pmf& noise,
                                  const PmfOptions& opt = {}) {
  if (bits.size() != static_cast<std::size_t>(cfg.k_T) + 1)
    throw DomainError("conditional_signal_pmf: need k_T + 1 bits");
  const std::vector<double> a = signal_means(cfg);
  double mean = 0.0;
  for (std::size_t j = 0; j < bits.size(); ++j)
    if (bits[j]) mean += a[j];
  return convolve(poisson_pmf(mean, opt.tail_tol), noise, 0.0, opt.k_max);
}

inline Pmf conditional_signal_pmf(const SystemConfig& cfg, const std::vector<int>& bits, const PmfOptions& opt = {}) {
  return conditional_signal_pmf(cfg, bits, noise_pmf(cfg, opt), opt);
}

/// Likelihoods p_Y[y | B_0 = 0] and p_Y[y | B_0 = 1], padded to one length.
struct LikelihoodPair {
  Pmf p0;
  Pmf p1;
  std::size_t size() const { return std::max(p0.size(), p1.size()); }
};

namespace detail {

/// (1/2^k_T) sum_b Poisson(offset + s_b), accumulated into one array.
inline Pmf signal_mixture(double offset, const std::vector<double>& s, double tail_tol) {
  const double top = offset + *std::max_element(s.begin(), s.end());
  const Pmf envelope = poisson_pmf(top, tail_tol, 0.0);
  Pmf out;
  out.masses.assign(envelope.size(), 0.0);
  const double w = 1.0 / static_cast<double>(s.size());
  for (double si : s) accumulate_poisson(offset + si, w, out.masses);
  out.tail_bound = envelope.tail_bound;
  return out;
}

inline void pad(Pmf& p, std::size_t n) {
  if (p.size() < n) p.masses.resize(n, 0.0);
}

}  // namespace detail

inline LikelihoodPair likelihood_pair(const SystemConfig& cfg, const Pmf& noise, const PmfOptions& opt = {}) {
  cfg.validate();
  const std::vector<double> a = signal_means(cfg);
  const std::vector<double> s = interference_means(a);
  LikelihoodPair lp;
  lp.p0 = convolve(detail::signal_mixture(0.0, s, opt.tail_tol), noise, 0.0, opt.k_max);
  lp.p1 = convolve(detail::signal_mixture(a[0], s, opt.tail_tol), noise, 0.0, opt.k_max);
  const std::size_t n = lp.size();
  detail::pad(lp.p0, n);
  detail::pad(lp.p1, n);
  return lp;
}

inline LikelihoodPair likelihood_pair(const SystemConfig& cfg, const PmfOptions& opt = {}) {
  return likelihood_pair(cfg, noise_pmf(cfg, opt), opt);
}

/// p_Y[y | B_0 = b0], averaged over all interference patterns.
inline double likelihood(const SystemConfig& cfg, long long y, int b0, const PmfOptions& opt = {}) {
  if (y < 0) throw DomainError("likelihood: y must be >= 0");
  const LikelihoodPair lp = likelihood_pair(cfg, opt);
  return (b0 ? lp.p1 : lp.p0)[static_cast<std::size_t>(y)];
}

/// argmax_b p_Y[y | b]; ties decide 0.
inline int ml_decide(const LikelihoodPair& lp, long long y) {
  if (y < 0) throw DomainError("ml_decide: y must be >= 0");
  const auto k = static_cast<std::size_t>(y);
  return lp.p1[k] > lp.p0[k] ? 1 : 0;
}

inline int ml_decide(const SystemConfig& cfg, long long y, const PmfOptions& opt = {}) {
  return ml_decide(likelihood_pair(cfg, opt), y);
}

// ============================================================================
// Decision regions
// ============================================================================

/// Thresholds zeta_1 < ... < zeta_m. Observations below zeta_1 decide
/// `first_region_bit`; every threshold crossed flips the decision.
struct DetectorSpec {
  std::vector<long long> thresholds;
  int first_region_bit = 0;

  static DetectorSpec single(long long zeta) { return {{zeta}, 0}; }

  int decide(long long y) const {
    int bit = first_region_bit;
    for (long long z : thresholds)
      if (y >= z) bit ^= 1;
    return bit;
  }

  std::string to_json() const {
    std::string s = "{\"thresholds\": [";
    for (std::size_t i = 0; i < thresholds.size(); ++i) s += (i ? ", " : "") + std::to_string(thresholds[i]);
    return s + "], \"first_region_bit\": " + std::to_string(first_region_bit) + "}";
  }
};

/// Below this likelihood both hypotheses are treated as impossible and the
/// scan keeps the previous decision, so rounding noise in far tails cannot
/// create spurious regions.
inline constexpr double kSignificanceFloor = 1e-14;

/// Scans y = 0..y_max and records where the ML decision changes.
inline DetectorSpec decision_regions(const LikelihoodPair& lp, std::size_t y_max) {
  DetectorSpec spec;
  bool started = false;
  int current = 0;
  for (std::size_t y = 0; y <= y_max; ++y) {
    const double a = lp.p0[y];
    const double b = lp.p1[y];
    if (std::max(a, b) < kSignificanceFloor) continue;
    const int d = b > a ? 1 : 0;
    if (!started) {
      started = true;
      current = d;
      spec.first_region_bit = d;
      if (d == 1 && y > 0) {
        // Everything below is insignificant; start the 1-region here.
        spec.first_region_bit = 0;
        spec.thresholds.push_back(static_cast<long long>(y));
      }
      continue;
    }
    if (d != current) {
      spec.thresholds.push_back(static_cast<long long>(y));
      current = d;
    }
  }
  return spec;
}

inline DetectorSpec decision_regions(const SystemConfig& cfg, std::size_t y_max, const PmfOptions& opt = {}) {
  return decision_regions(likelihood_pair(cfg, opt), y_max);
}

// ============================================================================
// Bit error rate
// ============================================================================

/// 0.5 [P(Y >= zeta | 0) + P(Y < zeta | 1)] from the likelihood arrays.
inline double ber_std_generic(const LikelihoodPair& lp, long long zeta) {
  if (zeta < 1) throw DomainError("ber_std: zeta must be >= 1");
  double f0 = 0.0, f1 = 0.0;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(zeta), lp.size());
  for (std::size_t k = 0; k < n; ++k) {
    f0 += lp.p0[k];
    f1 += lp.p1[k];
  }
  return 0.5 * (1.0 - f0 + f1);
}

/// Error rate of an arbitrary region detector. Mass beyond the arrays is
/// charged to the decision of the last region.
inline double ber_detector(const LikelihoodPair& lp, const DetectorSpec& det) {
  double e0 = 0.0, e1 = 0.0;
  for (std::size_t y = 0; y < lp.size(); ++y) {
    if (det.decide(static_cast<long long>(y)) == 1)
      e0 += lp.p0[y];
    else
      e1 += lp.p1[y];
  }
  const int last = det.decide(static_cast<long long>(lp.size()));
  if (last == 1)
    e0 += std::max(0.0, 1.0 - lp.p0.total());
  else
    e1 += std::max(0.0, 1.0 - lp.p1.total());
  return 0.5 * (e0 + e1);
}

/// Minimum achievable error rate 0.5 sum_y min(p0, p1).
inline double ber_ml(const LikelihoodPair& lp) {
  double s = 0.0;
  for (std::size_t y = 0; y < lp.size(); ++y) s += std::min(lp.p0[y], lp.p1[y]);
  return 0.5 * s;
}

/// Closed-form error rate through regularized incomplete gamma functions
/// (Poisson and Poisson-mixture noise) or the Gaussian-rate CDF (high-rate
/// noise). Returns nothing when the model has no tractable closed form.
inline std::optional<double> ber_std_closed_form(const SystemConfig& cfg, long long zeta,
                                                 std::size_t mixture_limit = std::size_t{1} << 22) {
  cfg.validate();
  if (zeta < 1) throw DomainError("ber_std: zeta must be >= 1");
  const std::vector<double> a = signal_means(cfg);
  const std::vector<double> s = interference_means(a);
  const double zd = static_cast<double>(zeta);

  auto from_components = [&](const PoissonMixture& noise) {
    double err = 0.0;
    for (double si : s) {
      double f0 = 0.0, f1 = 0.0;
      for (const auto& c : noise.components) {
        // Gamma(zeta, v)/Gamma(zeta) = P(Poisson(v) <= zeta - 1).
        f0 += c.weight * special::regularized_q(zd, c.mean + si);
        f1 += c.weight * special::regularized_q(zd, c.mean + si + a[0]);
      }
      err += 1.0 - f0 + f1;
    }
    return 0.5 * err / static_cast<double>(s.size());
  };

  switch (cfg.noise.model) {
    case NoiseModel::none: return from_components(PoissonMixture{{{1.0, 0.0}}});
    case NoiseModel::homogeneous_poisson: return from_components(PoissonMixture{{{1.0, cfg.noise.lambda0}}});
    case NoiseModel::rare_event_approx: {
      const RareEventGrid g = make_grid(cfg.cpns, cfg.noise.T_tilde);
      if (g.k_tilde > 20) return std::nullopt;
      if ((std::size_t{1} << g.k_tilde) * s.size() > mixture_limit) return std::nullopt;
      return from_components(subset_mixture(cfg.cpns, g));
    }
    case NoiseModel::rare_event_exact: return std::nullopt;
    case NoiseModel::high_rate: {
      const Cumulants c = cumulants(cfg.cpns);
      if (!(c.k2 > 0.0)) return std::nullopt;
      const std::size_t need = static_cast<std::size_t>(zeta);
      double err = 0.0;
      for (double si : s) {
        // Y | b ~ Poisson(M''), M'' ~ N(k1 + sum b_j a_j, k2).
        const Pmf q0 = highrate_pmf({c.k1 + si, c.k2}, std::max<std::size_t>(need, 1));
        const Pmf q1 = highrate_pmf({c.k1 + si + a[0], c.k2}, std::max<std::size_t>(need, 1));
        double f0 = 0.0, f1 = 0.0;
        for (std::size_t k = 0; k < need; ++k) {
          f0 += q0[k];
          f1 += q1[k];
        }
        err += 1.0 - f0 + f1;
      }
      return 0.5 * err / static_cast<double>(s.size());
    }
  }
  return std::nullopt;
}

/// BER of the single-threshold detector at zeta: closed form when available,
/// otherwise from the likelihood CDFs.
inline double ber_std(const SystemConfig& cfg, long long zeta, const PmfOptions& opt = {}) {
  if (auto v = ber_std_closed_form(cfg, zeta)) return *v;
  return ber_std_generic(likelihood_pair(cfg, opt), zeta);
}

// ============================================================================
// BER curves and the optimal threshold
// ============================================================================

struct BerCurve {
  std::vector<long long> zeta;
  std::vector<double> ber;

  void write_csv(std::ostream& os, const std::vector<std::string>& header = {}) const {
    char buf[64];
    for (const auto& h : header) os << "# " << h << '\n';
    os << "zeta,ber\n";
    for (std::size_t i = 0; i < zeta.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", ber[i]);
      os << zeta[i] << ',' << buf << '\n';
    }
  }
};

/// BER(zeta) for zeta = 1..zeta_max, accumulated from the exact-sign steps
/// BER(z+1) - BER(z) = (p1[z] - p0[z]) / 2. Rounding is monotone, so every
/// stored difference has the true sign or is zero; running CDFs would let
/// rounding flip signs on flat stretches of the curve.
inline BerCurve ber_curve(const LikelihoodPair& lp, std::size_t zeta_max) {
  BerCurve c;
  c.zeta.reserve(zeta_max);
  c.ber.reserve(zeta_max);
  double b = 0.5 * (1.0 - lp.p0[0] + lp.p1[0]);
  for (std::size_t z = 1; z <= zeta_max; ++z) {
    if (z > 1) b += 0.5 * (lp.p1[z - 1] - lp.p0[z - 1]);
    c.zeta.push_back(static_cast<long long>(z));
    c.ber.push_back(b);
  }
  return c;
}

enum class ThresholdSearch { bisection, grid };

struct ThresholdResult {
  long long zeta = 1;
  double ber = 0.5;
  bool unimodal = true;        ///< discrete quasiconvexity held on the range
  bool used_bisection = false;
  std::string warning;
};

/// Discrete quasiconvexity: the nonzero forward differences of the curve are
/// all negative before all positive.
inline bool is_quasiconvex(const BerCurve& c) {
  bool rising = false;
  for (std::size_t i = 0; i + 1 < c.ber.size(); ++i) {
    const double d = c.ber[i + 1] - c.ber[i];
    if (d > 0.0) rising = true;
    if (d < 0.0 && rising) return false;
  }
  return true;
}

/// Smallest global minimizer by exhaustive scan.
inline ThresholdResult grid_minimum(const BerCurve& c) {
  if (c.ber.empty()) throw DomainError("optimal_threshold: empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.ber.size(); ++i)
    if (c.ber[i] < c.ber[best]) best = i;
  ThresholdResult r;
  r.zeta = c.zeta[best];
  r.ber = c.ber[best];
  return r;
}

/// Bisection on the sign of the nonzero forward differences; only valid on a
/// quasiconvex curve. Returns the smallest minimizer, like grid_minimum.
inline ThresholdResult bisection_minimum(const BerCurve& c) {
  if (c.ber.empty()) throw DomainError("optimal_threshold: empty curve");
  std::vector<std::size_t> idx;  // positions i with ber[i+1] != ber[i]
  for (std::size_t i = 0; i + 1 < c.ber.size(); ++i)
    if (c.ber[i + 1] != c.ber[i]) idx.push_back(i);
  std::size_t lo = 0, hi = idx.size();  // first position with a rising step
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::size_t i = idx[mid];
    if (c.ber[i + 1] - c.ber[i] > 0.0)
      hi = mid;
    else
      lo = mid + 1;
  }
  std::size_t best = lo < idx.size() ? idx[lo] : c.ber.size() - 1;
  while (best > 0 && c.ber[best - 1] == c.ber[best]) --best;
  ThresholdResult r;
  r.zeta = c.zeta[best];
  r.ber = c.ber[best];
  r.used_bisection = true;
  return r;
}

inline ThresholdResult optimal_threshold(const BerCurve& c, ThresholdSearch search) {
  const bool uni = is_quasiconvex(c);
  ThresholdResult r;
  if (search == ThresholdSearch::bisection && uni) {
    r = bisection_minimum(c);
  } else {
    r = grid_minimum(c);
    if (search == ThresholdSearch::bisection)
      r.warning = "BER is not quasiconvex in the threshold; fell back to grid search";
  }
  r.unimodal = uni;
  return r;
}

inline ThresholdResult optimal_threshold(const LikelihoodPair& lp, ThresholdSearch search,
                                         std::size_t zeta_max = 0) {
  if (zeta_max == 0) zeta_max = lp.size();
  return optimal_threshold(ber_curve(lp, zeta_max), search);
}

inline ThresholdResult optimal_threshold(const SystemConfig& cfg, ThresholdSearch search,
                                         const PmfOptions& opt = {}) {
  return optimal_threshold(likelihood_pair(cfg, opt), search);
}

// ============================================================================
// Log-concavity
// ============================================================================

/// pmf[k]^2 >= pmf[k-1] pmf[k+1] on the positive support, with a relative
/// slack for rounding. Throws on an empty support; interior zeros make the
/// support non-contiguous and the pmf is reported as not log-concave.
inline bool log_concavity_check(const Pmf& p, double rel_slack = 1e-9) {
  std::size_t lo = 0;
  while (lo < p.size() && !(p.masses[lo] > 0.0)) ++lo;
  if (lo == p.size()) throw DomainError("log_concavity_check: empty support");
  std::size_t hi = p.size();
  while (hi > lo && !(p.masses[hi - 1] > 0.0)) --hi;
  for (std::size_t k = lo; k < hi; ++k)
    if (!(p.masses[k] > 0.0)) return false;
  for (std::size_t k = lo + 1; k + 1 < hi; ++k) {
    // Compared in logs so that far-tail masses do not underflow when squared.
    const double lhs = 2.0 * std::log(p.masses[k]);
    const double rhs = std::log(p.masses[k - 1]) + std::log(p.masses[k + 1]);
    if (lhs < rhs - rel_slack) return false;
  }
  return true;
}

}  // namespace cpns
