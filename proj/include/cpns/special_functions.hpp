// ============================================================================
// special_functions.hpp -- error functions, incomplete gamma, Kummer's 1F1
// and the parabolic cylinder function D_nu(z) for nu <= 0
//
// Everything here is a deterministic pure function of its arguments. The
// parabolic cylinder routines work in the log domain because the high-rate
// count distribution needs D_{-k-1}(z) for k in the thousands and |z| in the
// hundreds, where the linear-domain values over/underflow.
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cpns/errors.hpp"

namespace cpns::special {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite argument");
}

}  // namespace detail

// ============================================================================
// Error function family
// ============================================================================

/// Scaled complementary error function exp(x^2) erfc(x).
inline double erfcx(double x) {
  detail::require_finite(x, "erfcx");
  if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  // Laplace continued fraction, evaluated bottom-up.
  // erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
  double t = x;
  for (int n = 120; n >= 1; --n) t = x + 0.5 * n / t;
  return 1.0 / (std::sqrt(std::numbers::pi) * t);
}

/// log(erfcx(x)), finite for every finite x.
inline double log_erfcx(double x) {
  detail::require_finite(x, "log_erfcx");
  if (x >= 0.0) return std::log(erfcx(x));
  // erfc(x) lies in (1, 2] for x < 0, so no cancellation here.
  return x * x + std::log(std::erfc(x));
}

/// log(erfc(x)), finite for every finite x.
inline double log_erfc(double x) {
  detail::require_finite(x, "log_erfc");
  if (x < 5.0) return std::log(std::erfc(x));
  return log_erfcx(x) - x * x;
}

/// Inverse complementary error function on (0, 2).
///
/// Newton iteration on log(erfc(x)) - log(y). log(erfc) is concave, so after
/// the first step the iterates approach the root monotonically from above.
inline double erfc_inv(double y) {
  detail::require_finite(y, "erfc_inv");
  if (!(y > 0.0 && y < 2.0)) throw DomainError("erfc_inv: argument must lie in (0, 2)");
  if (y == 1.0) return 0.0;
  if (y > 1.0) return -erfc_inv(2.0 - y);

  const double target = std::log(y);
  double x = std::sqrt(std::max(0.0, -target));
  double last = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    const double g = log_erfc(x) - target;
    const double dg = -2.0 / (std::sqrt(std::numbers::pi) * erfcx(x));
    const double step = g / dg;
    x -= step;
    // Converged, or rounding makes the step stall at the last few ulps.
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) return x;
    if (std::abs(step) <= 8e-16 * std::max(1.0, std::abs(x)) && std::abs(step) >= last) return x;
    last = std::abs(step);
  }
  throw ConvergenceError("erfc_inv: Newton iteration did not converge");
}

// ============================================================================
// Incomplete gamma functions
// ============================================================================
namespace detail {

/// log1p(u) - u without cancellation for small |u|.
inline double log1pmx(double u) {
  if (std::abs(u) > 0.25) return std::log1p(u) - u;
  // -u^2/2 + u^3/3 - u^4/4 + ...
  double term = u;
  double sum = 0.0;
  for (int n = 2; n < 200; ++n) {
    term *= -u;
    const double add = term / n;
    sum += add;
    if (std::abs(add) <= 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

/// lgamma(s) minus its Stirling approximation (s - 1/2) ln s - s + ln(2 pi)/2.
inline double stirling_error(double s) {
  if (s >= 12.0) {
    const double r = 1.0 / s;
    const double r2 = r * r;
    return r * (1.0 / 12 - r2 * (1.0 / 360 - r2 * (1.0 / 1260 - r2 * (1.0 / 1680 - r2 * (1.0 / 1188)))));
  }
  return std::lgamma(s) - ((s - 0.5) * std::log(s) - s + 0.5 * std::log(2.0 * std::numbers::pi));
}

/// log of x^s e^{-x} / Gamma(s), computed without the cancellation that the
/// naive s ln x - x - lgamma(s) suffers when x is close to a large s.
inline double log_gamma_prefix(double s, double x) {
  if (x == 0.0) return -kInf;
  return s * log1pmx((x - s) / s) + 0.5 * std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi) -
         stirling_error(s);
}

/// Regularized lower gamma P(s, x) by its power series (use for x < s + 1).
inline double gamma_p_series(double s, double x) {
  double term = 1.0;
  double sum = 1.0;
  for (int n = 1; n < 100000; ++n) {
    term *= x / (s + n);
    sum += term;
    if (term <= 1e-17 * sum) return std::exp(log_gamma_prefix(s, x) + std::log(sum / s));
  }
  throw ConvergenceError("gamma_p_series: no convergence");
}

/// log Q(s, x) by the Legendre continued fraction (use for x >= s + 1).
inline double log_gamma_q_fraction(double s, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) <= 1e-16) return log_gamma_prefix(s, x) + std::log(h);
  }
  throw ConvergenceError("log_gamma_q_fraction: no convergence");
}

inline void check_gamma_domain(double s, double x, const char* what) {
  require_finite(s, what);
  require_finite(x, what);
  if (!(s > 0.0)) throw DomainError(std::string(what) + ": shape must be positive");
  if (x < 0.0) throw DomainError(std::string(what) + ": argument must be nonnegative");
}

}  // namespace detail

/// log of the regularized upper incomplete gamma function Q(s, x).
inline double log_regularized_q(double s, double x) {
  detail::check_gamma_domain(s, x, "log_regularized_q");
  if (x == 0.0) return 0.0;
  if (s == 0.5) return log_erfc(std::sqrt(x));
  if (x < s + 1.0) return std::log1p(-detail::gamma_p_series(s, x));
  return detail::log_gamma_q_fraction(s, x);
}

/// Regularized upper incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s).
/// For integer s = n this is the Poisson CDF P(Y <= n - 1) with mean x.
inline double regularized_q(double s, double x) { return std::exp(log_regularized_q(s, x)); }

/// Regularized lower incomplete gamma P(s, x) = 1 - Q(s, x).
inline double regularized_p(double s, double x) {
  detail::check_gamma_domain(s, x, "regularized_p");
  if (x == 0.0) return 0.0;
  if (x < s + 1.0 && s != 0.5) return detail::gamma_p_series(s, x);
  return -std::expm1(log_regularized_q(s, x));
}

/// log Gamma(s, x).
inline double log_upper_incomplete_gamma(double s, double x) {
  return std::lgamma(s) + log_regularized_q(s, x);
}

/// Upper incomplete gamma Gamma(s, x) = int_x^inf t^{s-1} e^{-t} dt.
/// Gamma(1/2, x) goes through sqrt(pi) erfc(sqrt(x)) for accuracy at small x.
inline double upper_incomplete_gamma(double s, double x) {
  detail::check_gamma_domain(s, x, "upper_incomplete_gamma");
  if (s == 0.5) return std::sqrt(std::numbers::pi) * std::erfc(std::sqrt(x));
  if (s == 1.0) return std::exp(-x);
  return std::exp(log_upper_incomplete_gamma(s, x));
}

/// Poisson CDF P(Y <= k) for Y ~ Poisson(mean).
inline double poisson_cdf(long long k, double mean) {
  if (k < 0) return 0.0;
  if (mean == 0.0) return 1.0;
  return regularized_q(static_cast<double>(k) + 1.0, mean);
}

// ============================================================================
// Confluent hypergeometric function 1F1(a; b; z)
// ============================================================================

/// Kummer's function by its defining series. Negative z is mapped through
/// Kummer's transformation 1F1(a; b; z) = e^z 1F1(b - a; b; -z) so the series
/// is always summed with a nonnegative argument.
inline double confluent_1f1(double a, double b, double z) {
  detail::require_finite(a, "confluent_1f1");
  detail::require_finite(b, "confluent_1f1");
  detail::require_finite(z, "confluent_1f1");
  if (b <= 0.0 && b == std::floor(b))
    throw DomainError("confluent_1f1: b must not be a nonpositive integer");
  if (z == 0.0) return 1.0;
  if (z < 0.0) return std::exp(z) * confluent_1f1(b - a, b, -z);

  double term = 1.0;
  double sum = 1.0;
  double largest = 1.0;
  for (int n = 0; n < 200000; ++n) {
    term *= (a + n) / (b + n) * z / (n + 1);
    if (term == 0.0) break;  // a is a nonpositive integer: the series terminates
    sum += term;
    largest = std::max(largest, std::abs(term));
    if (n + 1 > z + std::abs(a) && std::abs(term) <= 1e-17 * std::abs(sum)) break;
    if (n == 199999) throw ConvergenceError("confluent_1f1: series did not converge");
  }
  if (largest > 1e8 * std::abs(sum))
    throw ConvergenceError("confluent_1f1: cancellation destroyed the result");
  return sum;
}

// ============================================================================
// Parabolic cylinder function D_nu(z), nu <= 0
// ============================================================================

/// D_nu(z) from its Kummer-function representation. Throws ConvergenceError
/// when the two terms cancel so badly that fewer than ~9 digits survive,
/// which happens for large positive z.
inline double parabolic_cylinder_d_series(double nu, double z) {
  detail::require_finite(nu, "parabolic_cylinder_d_series");
  detail::require_finite(z, "parabolic_cylinder_d_series");
  const double half_z2 = 0.5 * z * z;
  const double g1 = (1.0 - nu) / 2.0;  // >= 1/2 for nu <= 0
  const double g2 = -nu / 2.0;         // >= 0
  const double term1 = std::sqrt(std::numbers::pi) * std::exp(-std::lgamma(g1)) *
                       confluent_1f1(-nu / 2.0, 0.5, half_z2);
  const double term2 = g2 == 0.0 ? 0.0
                                 : std::sqrt(2.0 * std::numbers::pi) * z * std::exp(-std::lgamma(g2)) *
                                       confluent_1f1((1.0 - nu) / 2.0, 1.5, half_z2);
  const double bracket = term1 - term2;
  const double scale = std::max(std::abs(term1), std::abs(term2));
  if (!(std::abs(bracket) > 1e6 * kEps * scale))
    throw ConvergenceError("parabolic_cylinder_d_series: loss of precision");
  return std::exp(0.5 * nu * std::log(2.0) - 0.25 * z * z) * bracket;
}

/// log D_{nu0 - k}(z) for k = 0 .. count-1, with nu0 in (-1, 0].
///
/// Uses the three-term recurrence D_{v+1} = z D_v - v D_{v-1} written for
/// successive ratios q_k = D_{nu0-k-1} / D_{nu0-k}. Every term is positive in
/// the direction taken: forward (increasing k) when z <= 0, backward
/// continued fraction when z > 0. Seeds for nu0 = 0 are closed forms
/// (D_0 = e^{-z^2/4}, D_{-1} via erfcx); other nu0 use the series above.
inline std::vector<double> log_parabolic_cylinder_d_sequence(double nu0, double z, std::size_t count) {
  detail::require_finite(nu0, "log_parabolic_cylinder_d_sequence");
  detail::require_finite(z, "log_parabolic_cylinder_d_sequence");
  if (!(nu0 > -1.0 && nu0 <= 0.0))
    throw DomainError("log_parabolic_cylinder_d_sequence: nu0 must lie in (-1, 0]");
  std::vector<double> out;
  if (count == 0) return out;
  out.reserve(count);

  const double log_d0 = nu0 == 0.0 ? -0.25 * z * z : std::log(parabolic_cylinder_d_series(nu0, z));
  out.push_back(log_d0);
  if (count == 1) return out;

  const std::size_t n_ratios = count - 1;
  auto order_abs = [nu0](std::size_t k) { return static_cast<double>(k) - nu0; };  // |nu0 - k|
  std::vector<double> log_q(n_ratios);

  if (z <= 0.0) {
    double log_q0;
    if (nu0 == 0.0) {
      log_q0 = 0.5 * std::log(std::numbers::pi / 2.0) + log_erfcx(z / std::numbers::sqrt2);
    } else {
      log_q0 = std::log(parabolic_cylinder_d_series(nu0 - 1.0, z)) - log_d0;
    }
    log_q[0] = log_q0;
    double inv_q = std::exp(-log_q0);
    for (std::size_t k = 1; k < n_ratios; ++k) {
      const double q = (inv_q - z) / order_abs(k);
      log_q[k] = std::log(q);
      inv_q = 1.0 / q;
    }
  } else {
    // Backward continued fraction q_{k-1} = 1 / (z + |nu_k| q_k), started from
    // the large-order fixed point and extended until the ratios settle.
    std::vector<double> q(n_ratios, 0.0);
    std::vector<double> previous;
    std::size_t extra = 32;
    for (int attempt = 0; attempt < 30; ++attempt, extra *= 2) {
      const std::size_t top = n_ratios + extra;
      const double v_top = order_abs(top + 1);
      double qk = 2.0 / (z + std::sqrt(z * z + 4.0 * v_top));
      for (std::size_t k = top; k >= 1; --k) {
        const double q_prev = 1.0 / (z + order_abs(k) * qk);
        if (k - 1 < n_ratios) q[k - 1] = q_prev;
        qk = q_prev;
      }
      if (!previous.empty()) {
        double worst = 0.0;
        for (std::size_t k = 0; k < n_ratios; ++k)
          worst = std::max(worst, std::abs(q[k] - previous[k]) / q[k]);
        if (worst <= 4.0 * kEps) break;
      }
      previous = q;
      if (attempt == 29) throw ConvergenceError("log_parabolic_cylinder_d_sequence: fraction did not settle");
    }
    for (std::size_t k = 0; k < n_ratios; ++k) log_q[k] = std::log(q[k]);
  }

  double acc = log_d0;
  for (std::size_t k = 0; k < n_ratios; ++k) {
    acc += log_q[k];
    out.push_back(acc);
  }
  return out;
}

/// log D_nu(z) for nu <= 0.
inline double log_parabolic_cylinder_d(double nu, double z) {
  detail::require_finite(nu, "log_parabolic_cylinder_d");
  detail::require_finite(z, "log_parabolic_cylinder_d");
  if (nu > 0.0) throw DomainError("log_parabolic_cylinder_d: only nu <= 0 is supported");
  if (nu == 0.0) return -0.25 * z * z;
  const double steps = std::floor(-nu);
  const double nu0 = nu + steps;
  if (nu0 == 0.0 || nu0 <= -1.0) {
    const auto seq = log_parabolic_cylinder_d_sequence(0.0, z, static_cast<std::size_t>(std::llround(-nu)) + 1);
    return seq.back();
  }
  constexpr double kSeriesOrderCutoff = 20.0;
  if (-nu <= kSeriesOrderCutoff) {
    try {
      return std::log(parabolic_cylinder_d_series(nu, z));
    } catch (const ConvergenceError&) {
      // fall through to the recurrence
    }
  }
  const auto seq = log_parabolic_cylinder_d_sequence(nu0, z, static_cast<std::size_t>(steps) + 1);
  return seq.back();
}

/// Parabolic cylinder function D_nu(z) for nu <= 0.
inline double parabolic_cylinder_d(double nu, double z) { return std::exp(log_parabolic_cylinder_d(nu, z)); }

// ============================================================================
// Misc
// ============================================================================

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// log of the Poisson pmf; log(0) = -inf handled for mean == 0.
inline double log_poisson_pmf(long long k, double mean) {
  if (k < 0) return -kInf;
  if (mean == 0.0) return k == 0 ? 0.0 : -kInf;
  const double kd = static_cast<double>(k);
  return kd * std::log(mean) - mean - std::lgamma(kd + 1.0);
}

}  // namespace cpns::special
