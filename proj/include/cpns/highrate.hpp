// ============================================================================
// highrate.hpp -- shot-noise cumulants and the Poisson law with Gaussian rate
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cpns/cpns_dist.hpp"
#include "cpns/errors.hpp"
#include "cpns/pmf.hpp"
#include "cpns/quadrature.hpp"
#include "cpns/special_functions.hpp"

namespace cpns {

// ============================================================================
// Cumulants
// ============================================================================

/// k_n = lambda_e int_0^{k_C T} (lambda_a p_C(tau))^n dtau in closed form:
///   k_n = n^{1 - 3n/2} G1 G2^n Gamma(3n/2 - 1, n d_C^2 / (4 D k_C T))
/// with G1 = lambda_e d_C^2 / (4D), G2 = lambda_a V_R / (pi^{3/2} d_C^3).
inline double cumulant(int n, const CpnsParams& p) {
  p.validate();
  if (n < 1) throw DomainError("cumulant: order must be >= 1");
  if (p.lambda_e == 0.0 || p.lambda_a == 0.0) return 0.0;
  const double D = p.channel.D;
  const double d = p.channel.r;
  const double nd = static_cast<double>(n);
  const double g1 = p.lambda_e * d * d / (4.0 * D);
  const double g2 = p.lambda_a * p.channel.volume() / (std::pow(std::numbers::pi, 1.5) * d * d * d);
  const double s = 1.5 * nd - 1.0;
  const double x = nd * d * d / (4.0 * D * p.window());
  if (n == 1) return g1 * g2 * special::upper_incomplete_gamma(0.5, x);
  const double log_k = std::log(g1) + nd * std::log(g2) + (1.0 - 1.5 * nd) * std::log(nd) +
                       special::log_upper_incomplete_gamma(s, x);
  return std::exp(log_k);
}

struct Cumulants {
  double k1 = 0.0;
  double k2 = 0.0;
};

inline Cumulants cumulants(const CpnsParams& p) { return {cumulant(1, p), cumulant(2, p)}; }

/// N(k1, k2) rate law.
struct GaussianRate {
  double mean = 0.0;
  double variance = 0.0;

  double pdf(double m) const {
    const double z = (m - mean) / std::sqrt(variance);
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi * variance);
  }
  double cdf(double m) const { return special::normal_cdf((m - mean) / std::sqrt(variance)); }
  /// Mass on m >= 0.
  double nonnegative_mass() const { return special::normal_cdf(mean / std::sqrt(variance)); }
};

// ============================================================================
// Closed-form count distribution
// ============================================================================

namespace detail {

inline void check_cumulants(const Cumulants& c) {
  if (!std::isfinite(c.k1) || !std::isfinite(c.k2)) throw DomainError("Cumulants: non-finite value");
  if (c.k1 < 0.0) throw DomainError("Cumulants: k1 must be >= 0");
  if (!(c.k2 > 0.0)) throw DomainError("Cumulants: k2 must be > 0");
}

/// Index past which the Poisson-with-Gaussian-rate law holds negligible mass.
inline std::size_t highrate_support(const Cumulants& c) {
  const double m_hi = c.k1 + 12.0 * std::sqrt(c.k2);
  return static_cast<std::size_t>(std::ceil(m_hi + 12.0 * std::sqrt(m_hi) + 40.0));
}

}  // namespace detail

/// p[k] = l(k1,k2) k2^{(k+1)/2} D_{-k-1}((k2 - k1)/sqrt(k2)), evaluated in
/// the log domain. The Gaussian rate is integrated over m >= 0 only and is
/// not renormalized, so the masses sum to Phi(k1/sqrt(k2)); tail_bound is
/// 1 - sum, i.e. it includes that negative-rate mass.
inline Pmf highrate_pmf(const Cumulants& c, std::size_t k_max = 0) {
  detail::check_cumulants(c);
  if (k_max == 0) k_max = detail::highrate_support(c);
  const double sk2 = std::sqrt(c.k2);
  const double z = (c.k2 - c.k1) / sk2;
  const double log_l = -0.5 * std::log(2.0 * std::numbers::pi * c.k2) - c.k1 * c.k1 / (2.0 * c.k2) + 0.25 * z * z;
  const double log_k2 = std::log(c.k2);
  // Index j of the sequence holds log D_{-j}(z); mass k needs j = k + 1.
  const std::vector<double> log_d = special::log_parabolic_cylinder_d_sequence(0.0, z, k_max + 2);
  Pmf out;
  out.masses.resize(k_max + 1);
  for (std::size_t k = 0; k <= k_max; ++k) {
    const double lp = log_l + 0.5 * static_cast<double>(k + 1) * log_k2 + log_d[k + 1];
    out.masses[k] = std::exp(lp);
  }
  out.tail_bound = std::max(0.0, 1.0 - out.total());
  return out;
}

/// Direct quadrature of int_0^inf Poisson_k(m) N(m; k1, k2) dm. Oracle.
/// The integrand is log-concave in m, so a tail beyond x0 is bounded by
/// f(x0) / |(log f)'(x0)|; tails below 1e-15 of the core are dropped.
inline Pmf highrate_pmf_quadrature(const Cumulants& c, std::size_t k_max = 0) {
  detail::check_cumulants(c);
  if (k_max == 0) k_max = detail::highrate_support(c);
  Pmf out;
  out.masses.resize(k_max + 1);
  for (std::size_t k = 0; k <= k_max; ++k) {
    const double kd = static_cast<double>(k);
    // Mode of m^k e^{-m} exp(-(m-k1)^2 / 2k2).
    const double b = c.k2 - c.k1;
    const double mode = 0.5 * (-b + std::sqrt(b * b + 4.0 * kd * c.k2));
    const double width = 1.0 / std::sqrt(kd / std::max(mode * mode, 1e-300) + 1.0 / c.k2);
    auto f = [&](double m) {
      if (m <= 0.0) return k == 0 ? std::exp(-0.5 * c.k1 * c.k1 / c.k2) / std::sqrt(2.0 * std::numbers::pi * c.k2) : 0.0;
      const double lp = kd * std::log(m) - m - std::lgamma(kd + 1.0) - 0.5 * (m - c.k1) * (m - c.k1) / c.k2 -
                        0.5 * std::log(2.0 * std::numbers::pi * c.k2);
      return std::exp(lp);
    };
    auto slope = [&](double m) { return kd / m - 1.0 - (m - c.k1) / c.k2; };
    const double a = std::max(0.0, mode - 8.0 * width), z = mode + 8.0 * width;
    std::vector<double> br;
    for (double s : {-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0}) br.push_back(mode + s * width);
    double v = quad::integrate(f, a, z, br, 1e-13);
    // Tails on geometrically growing panels, stopping once the remainder
    // bound is negligible.
    for (double x = z, step = width;;) {
      if (f(x) / std::abs(slope(x)) <= 1e-15 * v) break;
      const double nx = x + step;
      v += quad::integrate(f, x, nx, {}, 1e-13);
      x = nx;
      step *= 2.0;
    }
    for (double x = a, step = width; x > 0.0;) {
      if (f(x) / std::abs(slope(x)) <= 1e-15 * v) break;
      const double nx = std::max(0.0, x - step);
      v += quad::integrate(f, nx, x, {}, 1e-13);
      x = nx;
      step *= 2.0;
    }
    out.masses[k] = v;
  }
  out.tail_bound = std::max(0.0, 1.0 - out.total());
  return out;
}

/// Same law drawn by simulation: M ~ N(k1, k2) restricted to m >= 0 by
/// rejection, then Poisson(M).
template <class Rng>
long long sample_highrate_count(const Cumulants& c, Rng& rng) {
  detail::check_cumulants(c);
  std::normal_distribution<double> g(c.k1, std::sqrt(c.k2));
  double m = g(rng);
  for (int tries = 0; m < 0.0; ++tries) {
    if (tries > 1'000'000) throw ConvergenceError("sample_highrate_count: rejection sampling stalled");
    m = g(rng);
  }
  return m > 0.0 ? std::poisson_distribution<long long>(m)(rng) : 0;
}

// ============================================================================
// Shot-noise rate
// ============================================================================

/// One draw of M = sum_i lambda_a p_C(k_C T - Theta_i) with the event times
/// of a rate-lambda_e Poisson process on the memory window.
template <class Rng>
double sample_rate_M(const CpnsParams& p, Rng& rng) {
  if (p.lambda_e == 0.0 || p.lambda_a == 0.0) return 0.0;
  const double W = p.window();
  std::poisson_distribution<long long> n_events(p.lambda_e * W);
  std::uniform_real_distribution<double> unif(0.0, W);
  const long long n = n_events(rng);
  double m = 0.0;
  for (long long e = 0; e < n; ++e) m += hit_prob(p.channel, W - unif(rng));
  return p.lambda_a * m;
}

}  // namespace cpns
