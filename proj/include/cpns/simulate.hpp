// ============================================================================
// simulate.hpp -- particle-based and count-level simulators of the link
//
// Two particle engines share one timeline:
//   * lazy_exact  Every release is a Poisson number of independent Brownian
//                 particles. Only the particles that are inside the receiver
//                 at one or more sampling instants matter, and those can be
//                 generated directly: propose a particle inside at instant J
//                 (J drawn proportional to the exact occupancy probability),
//                 complete its path with a Brownian bridge / forward steps at
//                 the other instants, and accept with probability 1 / (number
//                 of instants it is inside). Accepted particles have exactly
//                 the law of Brownian paths conditioned on ever being counted.
//   * stepping    Literal per-tick Gaussian steps of variance 2 D dt per axis
//                 for every particle, with a population cap. Slow; used for
//                 small validation runs.
//
// Bits are split into deterministic blocks. Each block owns a generator
// seeded from (seed, block index), simulates its own warm-up, and the block
// results are reduced in index order, so results do not depend on threading.
// ============================================================================
#pragma once
#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cpns/channel.hpp"
#include "cpns/cpns_dist.hpp"
#include "cpns/detector.hpp"
#include "cpns/errors.hpp"
#include "cpns/highrate.hpp"

namespace cpns {

// ============================================================================
// Estimates
// ============================================================================

struct BerEstimate {
  std::uint64_t errors = 0;
  std::uint64_t trials = 0;
  double ber = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;

  /// Binomial standard error sqrt(p (1 - p) / n) at the estimate.
  double std_error() const { return trials ? std::sqrt(ber * (1.0 - ber) / static_cast<double>(trials)) : 0.0; }
};

/// Wilson score interval at 95 % confidence.
inline BerEstimate make_estimate(std::uint64_t errors, std::uint64_t trials) {
  BerEstimate e;
  e.errors = errors;
  e.trials = trials;
  if (trials == 0) return e;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  constexpr double z = 1.959963984540054;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  e.ber = p;
  e.ci_lo = std::max(0.0, centre - half);
  e.ci_hi = std::min(1.0, centre + half);
  return e;
}

/// Generator for block `index` of a run with master `seed`.
inline std::mt19937_64 block_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x63706e73u};
  return std::mt19937_64(seq);
}

namespace detail {

/// Runs fn(block) for block = 0..count-1 on up to `threads` workers.
template <class Fn>
void for_each_block(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t b = 0; b < count; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t b = next++; b < count; b = next++) fn(b);
      } catch (...) {
        failures[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace detail

// ============================================================================
// Particle-based simulation
// ============================================================================

enum class PbsEngine { lazy_exact, stepping };

/// When particles stop being counted.
///   matched  transmitter particles are counted at the k_T + 1 sampling
///            instants after their release, noise particles while their age
///            is at most k_C T; the same windows the analysis uses.
///   uniform  every particle is dropped once its age exceeds
///            (max(k_T, k_C) + 1) slots.
enum class Retirement { matched, uniform };

struct PbsConfig {
  SystemConfig cfg;
  double dt = 1e-3;  ///< step for the stepping engine, s
  std::uint64_t n_bits = 100000;
  std::uint64_t seed = 1;
  int warmup_slots = -1;  ///< < 0: max(k_T, k_C) + 1
  PbsEngine engine = PbsEngine::lazy_exact;
  Retirement retirement = Retirement::matched;
  std::uint64_t block_bits = 10000;
  unsigned threads = 1;
  std::size_t population_cap = 5'000'000;  ///< stepping engine only

  int warmup() const { return warmup_slots >= 0 ? warmup_slots : std::max(cfg.k_T, cfg.cpns.k_C) + 1; }

  void validate() const {
    cfg.validate();
    if (!(dt > 0.0)) throw DomainError("PbsConfig: dt must be positive");
    if (dt > cfg.slot_T() / 10.0 * (1.0 + 1e-12)) throw DomainError("PbsConfig: dt must be <= slot_T / 10");
    if (n_bits < 1) throw DomainError("PbsConfig: n_bits must be >= 1");
    if (block_bits < 1) throw DomainError("PbsConfig: block_bits must be >= 1");
  }
};

/// Observations of one simulated stretch of slots.
struct SlotTrace {
  std::vector<int> bits;            ///< transmitted bit of every counted slot
  std::vector<long long> counts;    ///< molecules inside the receiver at t_s
};

namespace detail {

using Vec3 = std::array<double, 3>;

inline double dist2(const Vec3& a, const Vec3& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Point uniform in the ball of radius a about the origin.
template <class Rng>
Vec3 uniform_in_ball(double a, Rng& rng) {
  std::uniform_real_distribution<double> u(-a, a);
  for (;;) {
    Vec3 x{u(rng), u(rng), u(rng)};
    if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] < a * a) return x;
  }
}

/// X ~ N(c, sigma^2 I) conditioned on |X| < a (|c| > a), by rejection from
/// the uniform law on the ball.
template <class Rng>
Vec3 gaussian_in_ball(const Vec3& c, double a, double sigma, Rng& rng) {
  const double d = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  const double closest2 = std::max(0.0, d - a) * std::max(0.0, d - a);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (long tries = 0; tries < 100'000'000; ++tries) {
    const Vec3 x = uniform_in_ball(a, rng);
    const double log_acc = -(dist2(x, c) - closest2) / (2.0 * sigma * sigma);
    if (std::log(u01(rng)) < log_acc) return x;
  }
  throw ConvergenceError("gaussian_in_ball: rejection sampler stalled");
}

/// One release of Poisson(n_mean) particles at `src`, observed at the given
/// ages (ascending, all > 0). Adds the number inside at each age to out[i].
template <class Rng>
void lazy_release(double n_mean, const Vec3& src, const std::vector<double>& ages, double D, double r_R,
                  Rng& rng, long long* out) {
  if (n_mean <= 0.0 || ages.empty()) return;
  const std::size_t m = ages.size();
  const double d = std::sqrt(src[0] * src[0] + src[1] * src[1] + src[2] * src[2]);
  thread_local std::vector<double> q, cum, sig;
  q.resize(m);
  cum.resize(m);
  sig.resize(m);
  double S = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    sig[j] = std::sqrt(2.0 * D * ages[j]);
    q[j] = sphere_probability_exact(d, r_R, sig[j]);
    S += q[j];
    cum[j] = S;
  }
  if (!(S > 0.0)) return;
  std::poisson_distribution<long long> proposals(n_mean * S);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g01(0.0, 1.0);
  const long long n_prop = proposals(rng);
  thread_local std::vector<Vec3> path;
  thread_local std::vector<char> inside;
  path.resize(m);
  inside.resize(m);
  const double r2 = r_R * r_R;
  for (long long p = 0; p < n_prop; ++p) {
    const double pick = u01(rng) * S;
    std::size_t J = static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    if (J >= m) J = m - 1;
    path[J] = gaussian_in_ball(src, r_R, sig[J], rng);
    // Earlier instants: Brownian bridge between the release point (age 0)
    // and the later known position.
    for (std::size_t j = J; j-- > 0;) {
      const double t1 = ages[j], t2 = ages[j + 1];
      const double frac = t1 / t2;
      const double sd = std::sqrt(2.0 * D * t1 * (t2 - t1) / t2);
      for (int k = 0; k < 3; ++k) path[j][k] = src[k] + frac * (path[j + 1][k] - src[k]) + sd * g01(rng);
    }
    for (std::size_t j = J + 1; j < m; ++j) {
      const double sd = std::sqrt(2.0 * D * (ages[j] - ages[j - 1]));
      for (int k = 0; k < 3; ++k) path[j][k] = path[j - 1][k] + sd * g01(rng);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const auto& x = path[j];
      inside[j] = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] < r2) ? 1 : 0;
    }
    inside[J] = 1;  // the proposal point lies in the ball by construction
    int c = 0;
    for (std::size_t j = 0; j < m; ++j) c += inside[j];
    if (u01(rng) * c < 1.0)
      for (std::size_t j = 0; j < m; ++j) out[j] += inside[j];
  }
}

/// Sampling-instant window of one release. `first` is the index of the first
/// slot whose sampling instant is counted, `ages` the ages at those instants.
struct Window {
  long long first = 0;
  std::vector<double> ages;
};

/// Simulates slots [0, total) of one block with the lazy engine. Slot n
/// starts at n T; its sample is taken at n T + t_s. Noise events start at
/// -window so that the first slot already sees a stationary background.
template <class Rng>
void simulate_block_lazy(const PbsConfig& pc, long long total, Rng& rng, std::vector<int>& bits,
                         std::vector<long long>& counts) {
  const SystemConfig& cfg = pc.cfg;
  const double T = cfg.slot_T(), ts = cfg.t_s();
  const double D = cfg.tx.D, rR = cfg.tx.r_R;
  const int k_T = cfg.k_T, k_C = cfg.cpns.k_C;
  const double W = cfg.cpns.window();
  const double uniform_age = (std::max(k_T, k_C) + 1) * T;
  const bool matched = pc.retirement == Retirement::matched;
  const Vec3 tx_src{cfg.tx.r, 0.0, 0.0};
  const Vec3 c_src{0.0, cfg.cpns.channel.r, 0.0};
  std::bernoulli_distribution coin(0.5);

  bits.assign(static_cast<std::size_t>(total), 0);
  counts.assign(static_cast<std::size_t>(total), 0);
  std::vector<double> ages;
  std::vector<long long> buf;

  auto emit = [&](double n_mean, const Vec3& src, double t_rel, double max_age) {
    // Sampling instants s_n = n T + ts with 0 < s_n - t_rel <= max_age.
    long long n0 = static_cast<long long>(std::ceil((t_rel - ts) / T));
    while (n0 * T + ts - t_rel <= 0.0) ++n0;
    n0 = std::max<long long>(n0, 0);
    ages.clear();
    for (long long n = n0; n < total; ++n) {
      const double age = n * T + ts - t_rel;
      if (age > max_age * (1.0 + 1e-12)) break;
      ages.push_back(age);
    }
    if (ages.empty()) return;
    buf.assign(ages.size(), 0);
    lazy_release(n_mean, src, ages, D, rR, rng, buf.data());
    for (std::size_t i = 0; i < ages.size(); ++i) counts[static_cast<std::size_t>(n0) + i] += buf[i];
  };

  // Transmitter: release at the start of every slot carrying a 1. Under the
  // matched policy the release is seen at its own slot and k_T later ones.
  const double tx_age = matched ? k_T * T + ts : uniform_age;
  for (long long n = 0; n < total; ++n) {
    bits[static_cast<std::size_t>(n)] = coin(rng) ? 1 : 0;
    if (bits[static_cast<std::size_t>(n)] && cfg.N > 0.0) emit(cfg.N, tx_src, n * T, tx_age);
  }
  // Noise source: one continuous Poisson stream with exponential gaps.
  if (cfg.cpns.lambda_e > 0.0 && cfg.cpns.lambda_a > 0.0) {
    const double c_age = matched ? W : uniform_age;
    std::exponential_distribution<double> gap(cfg.cpns.lambda_e);
    const double t_end = (total - 1) * T + ts;
    for (double t = -c_age + gap(rng); t < t_end; t += gap(rng)) emit(cfg.cpns.lambda_a, c_src, t, c_age);
  }
}

/// Same timeline with literal Gaussian stepping of every particle.
template <class Rng>
void simulate_block_stepping(const PbsConfig& pc, long long total, Rng& rng, std::vector<int>& bits,
                             std::vector<long long>& counts) {
  const SystemConfig& cfg = pc.cfg;
  const double T = cfg.slot_T(), ts = cfg.t_s(), dt = pc.dt;
  const double D = cfg.tx.D, rR = cfg.tx.r_R;
  const int k_T = cfg.k_T, k_C = cfg.cpns.k_C;
  const double W = cfg.cpns.window();
  const bool matched = pc.retirement == Retirement::matched;
  const double uniform_age = (std::max(k_T, k_C) + 1) * T;
  const double tx_age = matched ? k_T * T + ts : uniform_age;
  const double c_age = matched ? W : uniform_age;

  const double ticks_per_slot_d = T / dt;
  const long long ticks_per_slot = std::llround(ticks_per_slot_d);
  const double ts_ticks_d = ts / dt;
  const long long ts_ticks = std::llround(ts_ticks_d);
  if (std::abs(ticks_per_slot_d - ticks_per_slot) > 1e-6 || std::abs(ts_ticks_d - ts_ticks) > 1e-6)
    throw DomainError("stepping engine: slot_T and t_s must be multiples of dt");

  struct Particle {
    Vec3 x;
    double born;
    double max_age;
  };
  std::vector<Particle> ps;
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> g01(0.0, 1.0);
  const double sd = std::sqrt(2.0 * D * dt);

  bits.assign(static_cast<std::size_t>(total), 0);
  counts.assign(static_cast<std::size_t>(total), 0);
  for (long long n = 0; n < total; ++n) bits[static_cast<std::size_t>(n)] = coin(rng) ? 1 : 0;

  // Noise events, including the stretch before slot 0 that is still in memory.
  std::vector<double> events;
  if (cfg.cpns.lambda_e > 0.0 && cfg.cpns.lambda_a > 0.0) {
    std::exponential_distribution<double> gap(cfg.cpns.lambda_e);
    const double t_end = (total - 1) * T + ts;
    for (double t = -c_age + gap(rng); t < t_end; t += gap(rng)) events.push_back(t);
  }
  std::size_t next_event = 0;
  auto add = [&](long long n, const Vec3& src, double born, double max_age) {
    if (ps.size() + static_cast<std::size_t>(n) > pc.population_cap)
      throw InfeasibleError("stepping engine: particle population cap exceeded");
    for (long long i = 0; i < n; ++i) ps.push_back({src, born, max_age});
  };
  std::poisson_distribution<long long> n_tx(std::max(cfg.N, 1e-300));
  std::poisson_distribution<long long> n_c(std::max(cfg.cpns.lambda_a, 1e-300));
  const Vec3 tx_src{cfg.tx.r, 0.0, 0.0};
  const Vec3 c_src{0.0, cfg.cpns.channel.r, 0.0};

  // Pre-roll events released before t = 0: advance them to t = 0 exactly.
  const long long start_tick = -static_cast<long long>(std::ceil(c_age / dt));
  const long long end_tick = (total - 1) * ticks_per_slot + ts_ticks;
  for (long long tick = start_tick; tick <= end_tick; ++tick) {
    const double t = tick * dt;
    // Releases in (t - dt, t]: noise events land mid-step and take a partial
    // first step; transmitter releases happen on slot boundaries.
    while (next_event < events.size() && events[next_event] <= t) {
      const double te = events[next_event++];
      const std::size_t before = ps.size();
      add(n_c(rng), c_src, te, c_age);
      const double part = std::sqrt(2.0 * D * (t - te));
      for (std::size_t i = before; i < ps.size(); ++i)
        for (int k = 0; k < 3; ++k) ps[i].x[k] += part * g01(rng);
    }
    if (tick >= 0 && tick % ticks_per_slot == 0) {
      const long long n = tick / ticks_per_slot;
      if (n < total && bits[static_cast<std::size_t>(n)] && cfg.N > 0.0) add(n_tx(rng), tx_src, t, tx_age);
    }
    if (tick >= 0 && (tick - ts_ticks) % ticks_per_slot == 0 && tick >= ts_ticks) {
      const long long n = (tick - ts_ticks) / ticks_per_slot;
      long long c = 0;
      for (const auto& p : ps)
        if (t - p.born > 0.0 && t - p.born <= p.max_age * (1.0 + 1e-12) && p.x[0] * p.x[0] + p.x[1] * p.x[1] + p.x[2] * p.x[2] < rR * rR)
          ++c;
      counts[static_cast<std::size_t>(n)] = c;
    }
    // Retire, then step everyone by dt.
    std::erase_if(ps, [&](const Particle& p) { return t - p.born >= p.max_age + dt; });
    for (auto& p : ps)
      for (int k = 0; k < 3; ++k) p.x[k] += sd * g01(rng);
  }
}

template <class Rng>
void simulate_block(const PbsConfig& pc, long long total, Rng& rng, std::vector<int>& bits,
                    std::vector<long long>& counts) {
  if (pc.engine == PbsEngine::lazy_exact)
    simulate_block_lazy(pc, total, rng, bits, counts);
  else
    simulate_block_stepping(pc, total, rng, bits, counts);
}

}  // namespace detail

/// Per-slot bits and counts of a PBS run (warm-up slots removed), block by
/// block in index order.
inline SlotTrace pbs_trace(const PbsConfig& pc) {
  pc.validate();
  const std::uint64_t n_blocks = (pc.n_bits + pc.block_bits - 1) / pc.block_bits;
  std::vector<SlotTrace> parts(n_blocks);
  const int warm = pc.warmup();
  detail::for_each_block(n_blocks, pc.threads, [&](std::size_t b) {
    const std::uint64_t bits_here = std::min(pc.block_bits, pc.n_bits - b * pc.block_bits);
    auto rng = block_rng(pc.seed, b);
    std::vector<int> bits;
    std::vector<long long> counts;
    detail::simulate_block(pc, static_cast<long long>(bits_here) + warm, rng, bits, counts);
    parts[b].bits.assign(bits.begin() + warm, bits.end());
    parts[b].counts.assign(counts.begin() + warm, counts.end());
  });
  SlotTrace out;
  for (auto& p : parts) {
    out.bits.insert(out.bits.end(), p.bits.begin(), p.bits.end());
    out.counts.insert(out.counts.end(), p.counts.begin(), p.counts.end());
  }
  return out;
}

/// PBS bit error rate of a fixed detector.
inline BerEstimate pbs_run(const PbsConfig& pc, const DetectorSpec& det) {
  const SlotTrace tr = pbs_trace(pc);
  std::uint64_t errors = 0;
  for (std::size_t i = 0; i < tr.bits.size(); ++i)
    if (det.decide(tr.counts[i]) != tr.bits[i]) ++errors;
  return make_estimate(errors, tr.bits.size());
}

/// Fraction of `n_particles` released at distance r that are inside the
/// receiver at time t, by literal Gaussian stepping with step dt.
inline BerEstimate pbs_occupancy(const ChannelParams& ch, double t, std::uint64_t n_particles, double dt,
                                 std::uint64_t seed) {
  ch.validate();
  const long long steps = std::llround(t / dt);
  if (steps < 1 || std::abs(steps * dt - t) > 1e-9 * t) throw DomainError("pbs_occupancy: t must be a multiple of dt");
  auto rng = block_rng(seed, 0);
  std::normal_distribution<double> g(0.0, std::sqrt(2.0 * ch.D * dt));
  std::uint64_t inside = 0;
  for (std::uint64_t i = 0; i < n_particles; ++i) {
    double x = ch.r, y = 0.0, z = 0.0;
    for (long long s = 0; s < steps; ++s) {
      x += g(rng);
      y += g(rng);
      z += g(rng);
    }
    if (x * x + y * y + z * z < ch.r_R * ch.r_R) ++inside;
  }
  return make_estimate(inside, n_particles);
}

// ============================================================================
// Count-level Monte Carlo
// ============================================================================

struct McConfig {
  std::uint64_t n_bits = 1'000'000;
  std::uint64_t seed = 1;
  std::uint64_t block_bits = 100000;
  unsigned threads = 1;
};

/// Draws Y per symbol: Poisson(sum_j b_j a_j) from the bit stream plus one
/// noise draw. Rare-event and high-rate models draw the true noise count
/// (high-rate through Poisson(M) with M the shot-noise rate, which has the
/// same law); the homogeneous model draws Poisson(lambda0).
inline BerEstimate mc_run(const SystemConfig& cfg, const McConfig& mc, const DetectorSpec& det) {
  cfg.validate();
  const std::vector<double> a = signal_means(cfg);
  const std::size_t k_T = static_cast<std::size_t>(cfg.k_T);
  const std::uint64_t n_blocks = (mc.n_bits + mc.block_bits - 1) / mc.block_bits;
  std::vector<std::uint64_t> errs(n_blocks, 0), trials(n_blocks, 0);
  detail::for_each_block(n_blocks, mc.threads, [&](std::size_t b) {
    auto rng = block_rng(mc.seed, b);
    const std::uint64_t n = std::min(mc.block_bits, mc.n_bits - b * mc.block_bits);
    std::bernoulli_distribution coin(0.5);
    std::vector<int> hist(k_T + 1, 0);  // hist[j] = bit j slots ago
    for (std::size_t j = 1; j <= k_T; ++j) hist[j] = coin(rng) ? 1 : 0;
    std::uint64_t e = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      for (std::size_t j = k_T; j >= 1; --j) hist[j] = hist[j - 1];
      hist[0] = coin(rng) ? 1 : 0;
      double mean = 0.0;
      for (std::size_t j = 0; j <= k_T; ++j)
        if (hist[j]) mean += a[j];
      long long y = mean > 0.0 ? std::poisson_distribution<long long>(mean)(rng) : 0;
      switch (cfg.noise.model) {
        case NoiseModel::none: break;
        case NoiseModel::homogeneous_poisson:
          if (cfg.noise.lambda0 > 0.0) y += std::poisson_distribution<long long>(cfg.noise.lambda0)(rng);
          break;
        case NoiseModel::rare_event_approx:
        case NoiseModel::rare_event_exact: y += sample_cpns_count(cfg.cpns, rng); break;
        case NoiseModel::high_rate: {
          const double m = sample_rate_M(cfg.cpns, rng);
          if (m > 0.0) y += std::poisson_distribution<long long>(m)(rng);
          break;
        }
      }
      if (det.decide(y) != hist[0]) ++e;
    }
    errs[b] = e;
    trials[b] = n;
  });
  std::uint64_t e = 0, t = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    e += errs[b];
    t += trials[b];
  }
  return make_estimate(e, t);
}

}  // namespace cpns
