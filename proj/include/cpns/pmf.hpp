// ============================================================================
// pmf.hpp -- truncated count distributions with a certified dropped-mass bound
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cpns/errors.hpp"
#include "cpns/special_functions.hpp"

namespace cpns {

/// Default bound on probability mass dropped by truncation.
inline constexpr double kDefaultTailTol = 1e-10;

/// Probability mass function on k = 0, 1, ..., size()-1. `tail_bound` is an
/// upper bound on the mass that was dropped (beyond the last index or below
/// the negligible-mass floor) while building it.
struct Pmf {
  std::vector<double> masses;
  double tail_bound = 0.0;

  std::size_t size() const { return masses.size(); }
  bool empty() const { return masses.empty(); }
  double operator[](std::size_t k) const { return k < masses.size() ? masses[k] : 0.0; }

  double total() const {
    double s = 0.0;
    for (double m : masses) s += m;
    return s;
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t k = 0; k < masses.size(); ++k) s += static_cast<double>(k) * masses[k];
    return s;
  }

  double variance() const {
    const double mu = mean();
    double s = 0.0;
    for (std::size_t k = 0; k < masses.size(); ++k) {
      const double d = static_cast<double>(k) - mu;
      s += d * d * masses[k];
    }
    return s;
  }

  /// Running sums P(Y <= k).
  std::vector<double> cdf() const {
    std::vector<double> c(masses.size());
    double s = 0.0;
    for (std::size_t k = 0; k < masses.size(); ++k) c[k] = (s += masses[k]);
    return c;
  }

  /// Throws if masses are out of range or normalization fails.
  void validate(double tail_tol = kDefaultTailTol) const {
    for (double m : masses)
      if (!(m >= 0.0 && m <= 1.0 + 1e-12)) throw DomainError("Pmf: mass outside [0, 1]");
    const double s = total() + tail_bound;
    if (!(s >= 1.0 - 1e-9 && s <= 1.0 + 1e-9)) throw DomainError("Pmf: masses + tail_bound != 1");
    if (tail_bound > tail_tol) throw InfeasibleError("Pmf: tail bound exceeds tolerance");
  }

  static Pmf delta() { return Pmf{{1.0}, 0.0}; }
};

// ============================================================================
// Builders
// ============================================================================

/// Poisson(mean) truncated on the right so the dropped tail is below
/// `tail_tol`. Masses below `floor_rel` times the modal mass are zeroed and
/// accounted in tail_bound.
inline Pmf poisson_pmf(double mean, double tail_tol = kDefaultTailTol, double floor_rel = 1e-20) {
  if (!std::isfinite(mean) || mean < 0.0) throw DomainError("poisson_pmf: mean must be finite and >= 0");
  if (mean == 0.0) return Pmf::delta();
  // Smallest K with P(Y > K) <= tail_tol.
  long long k_hi = static_cast<long long>(std::floor(mean));
  const long long step = std::max<long long>(1, static_cast<long long>(std::sqrt(mean) / 4.0));
  while (special::regularized_p(static_cast<double>(k_hi + 1), mean) > tail_tol) k_hi += step;
  while (k_hi > 0 && special::regularized_p(static_cast<double>(k_hi), mean) <= tail_tol) --k_hi;
  const double upper = special::regularized_p(static_cast<double>(k_hi + 1), mean);

  Pmf out;
  out.masses.resize(static_cast<std::size_t>(k_hi) + 1);
  const double log_mode = special::log_poisson_pmf(static_cast<long long>(std::floor(mean)), mean);
  const double log_floor = log_mode + std::log(floor_rel);
  double dropped = 0.0;
  for (long long k = 0; k <= k_hi; ++k) {
    const double lp = special::log_poisson_pmf(k, mean);
    const double m = std::exp(lp);
    if (lp < log_floor) {
      dropped += m;
    } else {
      out.masses[static_cast<std::size_t>(k)] = m;
    }
  }
  out.tail_bound = upper + dropped;
  return out;
}

/// acc[k] += weight * Poisson(mean)[k] for k < acc.size(), evaluated by
/// recurrence outward from the mode so large means do not underflow.
inline void accumulate_poisson(double mean, double weight, std::vector<double>& acc) {
  if (acc.empty() || weight == 0.0) return;
  if (mean == 0.0) {
    acc[0] += weight;
    return;
  }
  const std::size_t n = acc.size();
  const std::size_t mode = std::min(n - 1, static_cast<std::size_t>(std::floor(mean)));
  const double p_mode = std::exp(special::log_poisson_pmf(static_cast<long long>(mode), mean));
  double p = p_mode;
  for (std::size_t k = mode;; --k) {
    acc[k] += weight * p;
    if (k == 0 || p == 0.0) break;
    p *= static_cast<double>(k) / mean;
  }
  p = p_mode;
  for (std::size_t k = mode + 1; k < n; ++k) {
    p *= mean / static_cast<double>(k);
    if (p == 0.0) break;
    acc[k] += weight * p;
  }
}

/// Discrete convolution. The result is cut at index `k_max` and then trimmed
/// from the right while the removed mass stays within `trim_budget`. All
/// removed mass is added to tail_bound, so tail bounds compose additively.
inline Pmf convolve(const Pmf& a, const Pmf& b, double trim_budget = 0.0,
                    std::size_t k_max = std::numeric_limits<std::size_t>::max()) {
  if (a.empty() || b.empty()) throw DomainError("convolve: empty pmf");
  std::size_t b_lo = 0;
  while (b_lo < b.size() && b.masses[b_lo] == 0.0) ++b_lo;
  std::size_t b_hi = b.size();
  while (b_hi > b_lo && b.masses[b_hi - 1] == 0.0) --b_hi;

  Pmf out;
  out.tail_bound = a.tail_bound + b.tail_bound;
  const std::size_t full = a.size() + b.size() - 1;
  const std::size_t n = std::min(full, k_max == std::numeric_limits<std::size_t>::max() ? full : k_max + 1);
  out.masses.assign(n, 0.0);
  double beyond = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a.masses[i];
    if (ai == 0.0) continue;
    const double* bp = b.masses.data();
    double* op = out.masses.data() + i;
    const std::size_t j_end = std::min(b_hi, n > i ? n - i : 0);
    for (std::size_t j = b_lo; j < j_end; ++j) op[j] += ai * bp[j];
    for (std::size_t j = std::max(b_lo, j_end); j < b_hi; ++j) beyond += ai * bp[j];
  }
  out.tail_bound += beyond;

  double removed = 0.0;
  while (out.masses.size() > 1 && removed + out.masses.back() <= trim_budget) {
    removed += out.masses.back();
    out.masses.pop_back();
  }
  out.tail_bound += removed;
  return out;
}

/// Weighted sum of pmfs (weights need not be normalized by the caller).
inline Pmf mix(const std::vector<double>& weights, const std::vector<Pmf>& parts) {
  if (weights.size() != parts.size() || parts.empty()) throw DomainError("mix: size mismatch");
  std::size_t n = 0;
  for (const auto& p : parts) n = std::max(n, p.size());
  Pmf out;
  out.masses.assign(n, 0.0);
  for (std::size_t c = 0; c < parts.size(); ++c) {
    for (std::size_t k = 0; k < parts[c].size(); ++k) out.masses[k] += weights[c] * parts[c].masses[k];
    out.tail_bound += weights[c] * parts[c].tail_bound;
  }
  return out;
}

/// Total variation distance 0.5 * sum |a_k - b_k| over the stored supports.
inline double total_variation(const Pmf& a, const Pmf& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::abs(a[k] - b[k]);
  return 0.5 * s;
}

/// Largest absolute per-mass difference.
inline double max_abs_difference(const Pmf& a, const Pmf& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s = std::max(s, std::abs(a[k] - b[k]));
  return s;
}

// ============================================================================
// Poisson mixtures
// ============================================================================

struct PoissonComponent {
  double weight = 0.0;
  double mean = 0.0;
};

/// Finite mixture of Poisson laws. Weights sum to one.
struct PoissonMixture {
  std::vector<PoissonComponent> components;

  void validate(double tol = 1e-12) const {
    if (components.empty()) throw DomainError("PoissonMixture: no components");
    double s = 0.0;
    for (const auto& c : components) {
      if (!(c.weight >= 0.0) || !(c.mean >= 0.0) || !std::isfinite(c.mean))
        throw DomainError("PoissonMixture: negative weight or mean");
      s += c.weight;
    }
    if (std::abs(s - 1.0) > tol) throw DomainError("PoissonMixture: weights do not sum to 1");
  }

  double mean() const {
    double s = 0.0;
    for (const auto& c : components) s += c.weight * c.mean;
    return s;
  }

  /// P(Y <= k) summed over components with the regularized incomplete gamma.
  double cdf(long long k) const {
    double s = 0.0;
    for (const auto& c : components) s += c.weight * special::poisson_cdf(k, c.mean);
    return s;
  }

  Pmf to_pmf(double tail_tol = kDefaultTailTol) const {
    std::vector<double> w;
    std::vector<Pmf> parts;
    w.reserve(components.size());
    parts.reserve(components.size());
    for (const auto& c : components) {
      w.push_back(c.weight);
      parts.push_back(poisson_pmf(c.mean, tail_tol));
    }
    return mix(w, parts);
  }
};

// ============================================================================
// Serialization
// ============================================================================

/// CSV with columns k,mass and a trailing `# tail_bound=<v>` line. Lines in
/// `header` are emitted first, each prefixed with "# ".
inline void write_pmf_csv(std::ostream& os, const Pmf& p, const std::vector<std::string>& header = {}) {
  char buf[64];
  for (const auto& h : header) os << "# " << h << '\n';
  os << "k,mass\n";
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", p.masses[k]);
    os << k << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g", p.tail_bound);
  os << "# tail_bound=" << buf << '\n';
}

}  // namespace cpns
