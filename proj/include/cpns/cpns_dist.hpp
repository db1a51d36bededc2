// ============================================================================
// cpns_dist.hpp -- count distribution of the compound Poisson noise source
//
// The source fires at Poisson times with rate lambda_e; every firing releases
// Poisson(lambda_a) molecules at distance d_C from the receiver. Only firings
// within the last k_C slots are remembered. Builders here:
//   * rare_event_pmf      sequential convolution over short intervals
//   * subset_mixture_pmf  explicit subset enumeration (small oracle)
//   * exact_integral_pmf  direct integration over event times (tiny oracle)
// ============================================================================
#pragma once
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cpns/channel.hpp"
#include "cpns/errors.hpp"
#include "cpns/pmf.hpp"
#include "cpns/quadrature.hpp"
#include "cpns/special_functions.hpp"

namespace cpns {

struct CpnsParams {
  double lambda_e = 0.0;   ///< events/s
  double lambda_a = 0.0;   ///< mean molecules per event
  ChannelParams channel;   ///< r is the source distance d_C
  int k_C = 1;             ///< memory in slots
  double slot_T = 0.0;     ///< s
  double t_s = 0.0;        ///< sampling offset within the slot, s

  /// Memory window length k_C * T.
  double window() const { return static_cast<double>(k_C) * slot_T; }

  void validate() const {
    channel.validate();
    if (!std::isfinite(lambda_e) || lambda_e < 0.0) throw DomainError("CpnsParams: lambda_e must be >= 0");
    if (!std::isfinite(lambda_a) || lambda_a < 0.0) throw DomainError("CpnsParams: lambda_a must be >= 0");
    if (k_C < 1) throw DomainError("CpnsParams: k_C must be >= 1");
    if (!(slot_T > 0.0) || !std::isfinite(slot_T)) throw DomainError("CpnsParams: slot_T must be positive");
    if (!(t_s > 0.0 && t_s <= slot_T)) throw DomainError("CpnsParams: t_s must lie in (0, slot_T]");
  }

  bool operator==(const CpnsParams&) const = default;
};

/// Partition of the memory window into k_tilde intervals of length T_tilde.
struct RareEventGrid {
  double T_tilde = 0.0;
  int k_tilde = 0;
  bool rate_warning = false;  ///< lambda_e * T_tilde above 0.1
};

/// Grid with the requested interval length shrunk to an exact divisor of the
/// memory window. Throws when lambda_e * T_tilde >= 1.
inline RareEventGrid make_grid(const CpnsParams& p, double T_tilde_requested) {
  p.validate();
  if (!(T_tilde_requested > 0.0) || !std::isfinite(T_tilde_requested))
    throw DomainError("make_grid: interval length must be positive");
  const double W = p.window();
  const double ratio = W / T_tilde_requested;
  if (ratio > 1e7) throw InfeasibleError("make_grid: more than 1e7 intervals requested");
  RareEventGrid g;
  g.k_tilde = std::max(1, static_cast<int>(std::ceil(ratio * (1.0 - 1e-12))));
  g.T_tilde = W / g.k_tilde;
  const double q = p.lambda_e * g.T_tilde;
  if (q >= 1.0)
    throw DomainError("make_grid: lambda_e * T_tilde = " + std::to_string(q) +
                      " >= 1; the one-event-per-interval assumption is void");
  g.rate_warning = q > 0.1;
  return g;
}

enum class RareEventMode { exact, approx };

struct PmfOptions {
  double tail_tol = kDefaultTailTol;
  std::size_t k_max = 2'000'000;  ///< hard cap on the support
  HitProbFn hit;                  ///< optional replacement for hit_prob(channel, .)
};

namespace detail {

inline HitProbFn resolve_hit(const CpnsParams& p, const PmfOptions& opt) {
  if (opt.hit) return opt.hit;
  const ChannelParams ch = p.channel;
  return [ch](double t) { return hit_prob(ch, t); };
}

inline void check_grid(const CpnsParams& p, const RareEventGrid& g) {
  p.validate();
  if (g.k_tilde < 1 || !(g.T_tilde > 0.0)) throw DomainError("RareEventGrid: empty grid");
  if (std::abs(g.k_tilde * g.T_tilde - p.window()) > 1e-12 * p.window())
    throw DomainError("RareEventGrid: k_tilde * T_tilde must equal k_C * T");
  if (p.lambda_e * g.T_tilde >= 1.0) throw DomainError("RareEventGrid: lambda_e * T_tilde >= 1");
}

}  // namespace detail

// ============================================================================
// Interval means
// ============================================================================

/// mu_i = lambda_a p_C(k_C T - (i-1) T_tilde), i = 1..k_tilde (index 0 based
/// in the returned vector).
inline std::vector<double> interval_means(const CpnsParams& p, const RareEventGrid& g, const HitProbFn& hit) {
  detail::check_grid(p, g);
  std::vector<double> mu(static_cast<std::size_t>(g.k_tilde));
  const double W = p.window();
  for (int i = 1; i <= g.k_tilde; ++i)
    mu[static_cast<std::size_t>(i - 1)] = p.lambda_a * hit(W - (i - 1) * g.T_tilde);
  return mu;
}

inline std::vector<double> interval_means(const CpnsParams& p, const RareEventGrid& g) {
  return interval_means(p, g, detail::resolve_hit(p, {}));
}

// ============================================================================
// Per-interval component
// ============================================================================

/// Distribution of counts produced by a single event whose release time is
/// uniform over interval i (1 based). Exact mode averages Poisson(mu(theta))
/// over the interval; approx mode uses Poisson(mu_i).
inline Pmf interval_event_pmf(const CpnsParams& p, const RareEventGrid& g, int i, RareEventMode mode,
                              const PmfOptions& opt = {}) {
  detail::check_grid(p, g);
  if (i < 1 || i > g.k_tilde) throw DomainError("interval_event_pmf: interval index out of range");
  const HitProbFn hit = detail::resolve_hit(p, opt);
  const double W = p.window();
  if (mode == RareEventMode::approx) {
    Pmf f = poisson_pmf(p.lambda_a * hit(W - (i - 1) * g.T_tilde), opt.tail_tol);
    if (f.size() > opt.k_max + 1) throw InfeasibleError("interval_event_pmf: support exceeds k_max");
    return f;
  }

  // Elapsed time since release runs over [tau_lo, tau_hi].
  const double tau_lo = (g.k_tilde - i) * g.T_tilde;
  const double tau_hi = tau_lo + g.T_tilde;
  const double tau_peak = std::clamp(p.channel.r * p.channel.r / (6.0 * p.channel.D), tau_lo, tau_hi);
  const double mu_max = p.lambda_a * std::max({hit(tau_lo), hit(tau_hi), hit(tau_peak)});
  const Pmf envelope = poisson_pmf(mu_max, opt.tail_tol, 0.0);
  const std::size_t n = envelope.size();
  if (n > opt.k_max + 1) throw InfeasibleError("interval_event_pmf: support exceeds k_max");

  auto average = [&](std::size_t panels) {
    std::vector<double> acc(n, 0.0);
    quad::gauss_legendre_nodes(tau_lo, tau_hi, panels, [&](double tau, double w) {
      accumulate_poisson(p.lambda_a * hit(tau), w / g.T_tilde, acc);
    });
    return acc;
  };
  std::vector<double> prev = average(1);
  for (std::size_t panels = 2; panels <= 4096; panels *= 2) {
    std::vector<double> cur = average(panels);
    double worst = 0.0;
    double top = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      worst = std::max(worst, std::abs(cur[k] - prev[k]));
      top = std::max(top, cur[k]);
    }
    prev = std::move(cur);
    if (worst <= 1e-9 * top) break;
    if (panels == 4096) throw ConvergenceError("interval_event_pmf: time average did not converge");
  }
  Pmf f;
  f.masses = std::move(prev);
  // Poisson tails grow with the mean, so the envelope tail bounds the average.
  f.tail_bound = envelope.tail_bound;
  return f;
}

/// (1 - lambda_e T_tilde) delta[k] + lambda_e T_tilde f_i[k].
inline Pmf interval_component_pmf(const CpnsParams& p, const RareEventGrid& g, int i, RareEventMode mode,
                                  const PmfOptions& opt = {}) {
  detail::check_grid(p, g);
  if (i < 1 || i > g.k_tilde) throw DomainError("interval_component_pmf: interval index out of range");
  const double q = p.lambda_e * g.T_tilde;
  if (q == 0.0) return Pmf::delta();
  Pmf f = interval_event_pmf(p, g, i, mode, opt);
  for (double& m : f.masses) m *= q;
  f.masses[0] += 1.0 - q;
  f.tail_bound *= q;
  return f;
}

// ============================================================================
// Full rare-event distribution
// ============================================================================

/// Convolution of all interval components, oldest interval first. The order
/// is fixed, so the result is bit-for-bit reproducible.
inline Pmf rare_event_pmf(const CpnsParams& p, const RareEventGrid& g, RareEventMode mode,
                          const PmfOptions& opt = {}) {
  detail::check_grid(p, g);
  if (p.lambda_e == 0.0 || p.lambda_a == 0.0) return Pmf::delta();
  PmfOptions inner = opt;
  inner.tail_tol = opt.tail_tol / (2.0 * g.k_tilde);
  const double trim = opt.tail_tol / (2.0 * g.k_tilde);
  Pmf acc = Pmf::delta();
  for (int i = 1; i <= g.k_tilde; ++i) {
    const Pmf c = interval_component_pmf(p, g, i, mode, inner);
    acc = convolve(acc, c, trim, opt.k_max);
  }
  if (acc.tail_bound > opt.tail_tol)
    throw InfeasibleError("rare_event_pmf: dropped mass " + std::to_string(acc.tail_bound) +
                          " exceeds tolerance; raise k_max");
  return acc;
}

/// The mixture form: every subset S of intervals contributes weight
/// q^|S| (1-q)^(k_tilde-|S|) and mean sum_{i in S} mu_i.
inline PoissonMixture subset_mixture(const CpnsParams& p, const RareEventGrid& g, const PmfOptions& opt = {}) {
  detail::check_grid(p, g);
  if (g.k_tilde > 20) throw InfeasibleError("subset_mixture: enumeration limited to k_tilde <= 20");
  const std::vector<double> mu = interval_means(p, g, detail::resolve_hit(p, opt));
  const double q = p.lambda_e * g.T_tilde;
  const std::uint32_t count = 1u << g.k_tilde;
  PoissonMixture mix_out;
  mix_out.components.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    const int bits = std::popcount(s);
    double mean = 0.0;
    for (int i = 0; i < g.k_tilde; ++i)
      if (s & (1u << i)) mean += mu[static_cast<std::size_t>(i)];
    const double w = std::pow(q, bits) * std::pow(1.0 - q, g.k_tilde - bits);
    mix_out.components.push_back({w, mean});
  }
  return mix_out;
}

inline Pmf subset_mixture_pmf(const CpnsParams& p, const RareEventGrid& g, const PmfOptions& opt = {}) {
  Pmf out = subset_mixture(p, g, opt).to_pmf(opt.tail_tol);
  if (out.size() > opt.k_max + 1) {
    double cut = 0.0;
    for (std::size_t k = opt.k_max + 1; k < out.size(); ++k) cut += out.masses[k];
    out.masses.resize(opt.k_max + 1);
    out.tail_bound += cut;
  }
  return out;
}

/// sum_{i=0}^{k} C(k, i) q^i (1-q)^(k-i), evaluated term by term in log space.
/// Equals one up to rounding; exposed so the identity can be checked.
inline double mixture_weight_total(double q, int k_tilde) {
  if (!(q >= 0.0 && q < 1.0) || k_tilde < 0) throw DomainError("mixture_weight_total: bad arguments");
  double s = 0.0;
  for (int i = 0; i <= k_tilde; ++i) {
    const double log_c = std::lgamma(k_tilde + 1.0) - std::lgamma(i + 1.0) - std::lgamma(k_tilde - i + 1.0);
    const double lt = log_c + (i == 0 ? 0.0 : i * std::log(q)) + (k_tilde - i) * std::log1p(-q);
    s += std::exp(lt);
  }
  return s;
}

// ============================================================================
// Mean, sampling
// ============================================================================

/// E[Y_C] = lambda_e lambda_a int_0^{k_C T} p_C(tau) dtau.
inline double cpns_mean(const CpnsParams& p) {
  p.validate();
  if (p.lambda_e == 0.0 || p.lambda_a == 0.0) return 0.0;
  return p.lambda_e * p.lambda_a * hit_prob_time_integral(p.channel, p.window());
}

/// One draw of Y_C: N_e ~ Poisson(lambda_e k_C T) events placed uniformly on
/// the window, each contributing Poisson(lambda_a p_C(elapsed)) molecules.
template <class Rng>
long long sample_cpns_count(const CpnsParams& p, Rng& rng) {
  if (p.lambda_e == 0.0 || p.lambda_a == 0.0) return 0;
  const double W = p.window();
  std::poisson_distribution<long long> n_events(p.lambda_e * W);
  std::uniform_real_distribution<double> unif(0.0, W);
  const long long n = n_events(rng);
  long long total = 0;
  for (long long e = 0; e < n; ++e) {
    const double mean = p.lambda_a * hit_prob(p.channel, W - unif(rng));
    if (mean > 0.0) total += std::poisson_distribution<long long>(mean)(rng);
  }
  return total;
}

// ============================================================================
// Direct integration over event times (low-rate oracle)
// ============================================================================

struct ExactIntegralResult {
  /// Event times conditioned on the count are uniform order statistics.
  Pmf order_statistics;
  /// Joint time density lambda_e^n exp(-lambda_e theta_n) on the ordered
  /// simplex, exactly as the density is written for the unconditioned
  /// process. Its total mass is below one by P(N(W) < n) terms.
  Pmf literal;
  double literal_total = 0.0;
  /// Largest per-mass standard error of the Monte Carlo terms (n >= 3).
  double mc_std_error = 0.0;
  int n_max = 0;
};

/// Integrates p_{Y_C}[k] = sum_n P(N_e = n) E[Poisson_k(lambda_a sum p_C)]
/// with nested quadrature for n <= 2 and Monte Carlo for 3 <= n <= n_max.
inline ExactIntegralResult exact_integral_pmf(const CpnsParams& p, std::size_t k_max, int n_max,
                                              std::uint64_t mc_samples = 200000, std::uint64_t seed = 1) {
  p.validate();
  if (n_max < 0) throw DomainError("exact_integral_pmf: n_max must be >= 0");
  const double W = p.window();
  const double rate = p.lambda_e * W;
  const double n_tail = rate == 0.0 ? 0.0 : special::regularized_p(n_max + 1.0, rate);
  if (n_tail > 1e-10)
    throw InfeasibleError("exact_integral_pmf: P(N_e > n_max) = " + std::to_string(n_tail) +
                          " exceeds 1e-10; use rare_event_pmf at this rate");
  if (n_max > 2 && rate > 5.0)
    throw InfeasibleError("exact_integral_pmf: event rate too high for the integration oracle");

  const std::size_t n = k_max + 1;
  auto mu = [&](double theta) { return p.lambda_a * hit_prob(p.channel, W - theta); };
  auto p_n = [&](int k) { return std::exp(special::log_poisson_pmf(k, rate)); };

  ExactIntegralResult res;
  res.n_max = n_max;
  std::vector<double> os(n, 0.0), lit(n, 0.0);
  // n = 0: no event, delta at zero. The literal density is 1 for n = 0.
  os[0] += p_n(0);
  lit[0] += p_n(0);
  double literal_mass = p_n(0);
  const double le = p.lambda_e;

  constexpr std::size_t kPanels1 = 256;
  constexpr std::size_t kPanels2 = 48;
  if (n_max >= 1 && rate > 0.0) {
    double lm = 0.0;
    quad::gauss_legendre_nodes(0.0, W, kPanels1, [&](double th, double w) {
      const double m = mu(th);
      accumulate_poisson(m, p_n(1) * w / W, os);
      const double dens = le * std::exp(-le * th);
      accumulate_poisson(m, p_n(1) * w * dens, lit);
      lm += p_n(1) * w * dens;
    });
    literal_mass += lm;
  }
  if (n_max >= 2 && rate > 0.0) {
    double lm = 0.0;
    // Order statistics: (1/W^2) over the square. Literal: ordered triangle
    // theta_1 <= theta_2 with weight lambda_e^2 exp(-lambda_e theta_2).
    quad::gauss_legendre_nodes(0.0, W, kPanels2, [&](double t2, double w2) {
      const double m2 = mu(t2);
      quad::gauss_legendre_nodes(0.0, W, kPanels2, [&](double t1, double w1) {
        accumulate_poisson(m2 + mu(t1), p_n(2) * w1 * w2 / (W * W), os);
      });
      const double dens = le * le * std::exp(-le * t2);
      if (t2 > 0.0) {
        quad::gauss_legendre_nodes(0.0, t2, kPanels2 / 4, [&](double t1, double w1) {
          accumulate_poisson(m2 + mu(t1), p_n(2) * w1 * w2 * dens, lit);
          lm += p_n(2) * w1 * w2 * dens;
        });
      }
    });
    literal_mass += lm;
  }
  if (n_max >= 3 && rate > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, W);
    std::vector<double> sum_os(n, 0.0), sq_os(n, 0.0), one(n);
    for (int events = 3; events <= n_max; ++events) {
      const double pn = p_n(events);
      std::fill(sum_os.begin(), sum_os.end(), 0.0);
      std::fill(sq_os.begin(), sq_os.end(), 0.0);
      std::vector<double> sum_lit(n, 0.0);
      double lit_w_sum = 0.0;
      std::vector<double> th(static_cast<std::size_t>(events));
      for (std::uint64_t s = 0; s < mc_samples; ++s) {
        double m = 0.0;
        for (auto& t : th) {
          t = unif(rng);
          m += mu(t);
        }
        std::fill(one.begin(), one.end(), 0.0);
        accumulate_poisson(m, 1.0, one);
        // Literal density on the ordered simplex; uniform sampling of the
        // cube covers each ordering once, with volume factor W^n / n!.
        const double t_last = *std::max_element(th.begin(), th.end());
        const double lw = std::exp(events * std::log(le) - le * t_last + events * std::log(W) -
                                   std::lgamma(events + 1.0));
        lit_w_sum += lw;
        for (std::size_t k = 0; k < n; ++k) {
          sum_os[k] += one[k];
          sq_os[k] += one[k] * one[k];
          sum_lit[k] += lw * one[k];
        }
      }
      const double ns = static_cast<double>(mc_samples);
      for (std::size_t k = 0; k < n; ++k) {
        const double mean = sum_os[k] / ns;
        const double var = std::max(0.0, sq_os[k] / ns - mean * mean);
        os[k] += pn * mean;
        lit[k] += pn * sum_lit[k] / ns;
        res.mc_std_error = std::max(res.mc_std_error, pn * std::sqrt(var / ns));
      }
      literal_mass += pn * lit_w_sum / ns;
    }
  }

  res.order_statistics.masses = std::move(os);
  double total = res.order_statistics.total();
  res.order_statistics.tail_bound = std::max(0.0, 1.0 - total);
  res.literal.masses = std::move(lit);
  res.literal.tail_bound = std::max(0.0, literal_mass - res.literal.total());
  res.literal_total = literal_mass;
  return res;
}

}  // namespace cpns
