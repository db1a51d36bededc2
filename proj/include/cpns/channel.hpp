// ============================================================================
// channel.hpp -- free-space diffusion channel seen by a transparent sphere
// ============================================================================
#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "cpns/errors.hpp"
#include "cpns/special_functions.hpp"

namespace cpns {

/// Point source at distance `r` from the centre of a transparent spherical
/// receiver of radius `r_R`, in an unbounded medium with diffusion
/// coefficient `D`. All quantities in SI units.
struct ChannelParams {
  double D = 0.0;    ///< m^2/s
  double r = 0.0;    ///< m
  double r_R = 0.0;  ///< m

  double volume() const { return 4.0 / 3.0 * std::numbers::pi * r_R * r_R * r_R; }

  void validate() const {
    if (!std::isfinite(D) || !std::isfinite(r) || !std::isfinite(r_R))
      throw DomainError("ChannelParams: non-finite field");
    if (!(D > 0.0)) throw DomainError("ChannelParams: diffusion coefficient must be positive");
    if (!(r_R > 0.0)) throw DomainError("ChannelParams: receiver radius must be positive");
    if (!(r > r_R)) throw DomainError("ChannelParams: source must lie outside the receiver (r > r_R)");
  }

  bool operator==(const ChannelParams&) const = default;
};

/// Hitting-probability model p(t). The library ships the uniform-concentration
/// approximation below; other receiver models can be plugged in through this.
using HitProbFn = std::function<double(double)>;

/// Probability that a molecule released at t = 0 is inside the receiver at t,
/// approximating the concentration as uniform over the receiver volume.
/// Throws ModelValidityError when the approximation exceeds one.
inline double hit_prob(const ChannelParams& p, double t) {
  p.validate();
  if (std::isnan(t)) throw DomainError("hit_prob: time is NaN");
  if (t <= 0.0) return 0.0;
  if (std::isinf(t)) return 0.0;
  const double four_dt = 4.0 * p.D * t;
  const double v = p.volume() * std::pow(std::numbers::pi * four_dt, -1.5) * std::exp(-p.r * p.r / four_dt);
  if (v > 1.0)
    throw ModelValidityError("hit_prob: value " + std::to_string(v) +
                             " exceeds 1; the point-receiver approximation needs r >> r_R");
  return v;
}

/// Time at which hit_prob peaks, r^2 / (6 D).
inline double hit_prob_peak_time(const ChannelParams& p) {
  p.validate();
  return p.r * p.r / (6.0 * p.D);
}

/// Integral of hit_prob over [0, t], closed form V_R/(4 pi D r) erfc(r / (2 sqrt(D t))).
inline double hit_prob_time_integral(const ChannelParams& p, double t) {
  p.validate();
  if (std::isnan(t)) throw DomainError("hit_prob_time_integral: time is NaN");
  if (t < 0.0) throw DomainError("hit_prob_time_integral: time must be nonnegative");
  const double scale = p.volume() / (4.0 * std::numbers::pi * p.D * p.r);
  if (t == 0.0) return 0.0;
  if (std::isinf(t)) return scale;
  return scale * std::erfc(p.r / (2.0 * std::sqrt(p.D * t)));
}

// ============================================================================
// Channel memory
// ============================================================================

/// Time by which a fraction `rho` of the eventual exposure has been
/// accumulated, and the equivalent number of whole slots.
struct ChannelMemory {
  double t_m = 0.0;     ///< s
  int k = 0;            ///< floor(t_m / slot_T)
  double rho = 0.0;
  double slot_T = 0.0;  ///< s
};

inline ChannelMemory channel_memory(const ChannelParams& p, double rho, double slot_T) {
  p.validate();
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("channel_memory: rho must lie in (0, 1)");
  if (!(slot_T > 0.0) || !std::isfinite(slot_T)) throw DomainError("channel_memory: slot_T must be positive");
  const double e = special::erfc_inv(rho);
  const double t_m = p.r * p.r / (4.0 * p.D * e * e);
  ChannelMemory m;
  m.t_m = t_m;
  m.rho = rho;
  m.slot_T = slot_T;
  const double slots = std::floor(t_m / slot_T);
  if (slots > 1e9) throw DomainError("channel_memory: memory spans more than 1e9 slots");
  m.k = static_cast<int>(slots);
  return m;
}

// ============================================================================
// Exact occupancy of a Gaussian cloud (used by the particle simulator)
// ============================================================================

/// Probability that X ~ N(c, sigma^2 I_3) with |c| = d lies in the ball of
/// radius a centred at the origin.
inline double sphere_probability_exact(double d, double a, double sigma) {
  if (!(sigma > 0.0)) return d < a ? 1.0 : 0.0;
  const double s2 = sigma * std::numbers::sqrt2;
  // Phi((a-d)/sigma) - Phi((-a-d)/sigma) written with erfc to keep tails.
  const double mass = 0.5 * (std::erfc((d - a) / s2) - std::erfc((d + a) / s2));
  if (d == 0.0) {
    // Limit d -> 0 of the correction term: chi distribution with 3 dof.
    const double u = a / sigma;
    return std::erf(u / std::numbers::sqrt2) - std::sqrt(2.0 / std::numbers::pi) * u * std::exp(-0.5 * u * u);
  }
  const double corr = sigma / (d * std::sqrt(2.0 * std::numbers::pi)) *
                      (std::exp(-(d - a) * (d - a) / (2.0 * sigma * sigma)) -
                       std::exp(-(d + a) * (d + a) / (2.0 * sigma * sigma)));
  return std::max(0.0, mass - corr);
}

}  // namespace cpns
