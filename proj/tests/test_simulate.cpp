// Count-level Monte Carlo and particle-based simulation.
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cpns/errors.hpp"
#include "cpns/simulate.hpp"

using namespace cpns;

namespace {

constexpr double kD = 1.14e-9;

SystemConfig low_rate(NoiseModel model = NoiseModel::rare_event_approx) {
  SystemConfig c;
  c.tx = {kD, 4e-6, 0.5e-6};
  c.cpns = {2.0, 1e5, {kD, 8e-6, 0.5e-6}, 15, 0.02, 0.02};
  c.N = 5e4;
  c.k_T = 10;
  c.noise.model = model;
  c.noise.T_tilde = 1e-4;
  c.noise.lambda0 = cpns_mean(c.cpns);
  return c;
}

/// True when `x` lies within `sigmas` standard errors of the estimate.
bool consistent(const BerEstimate& e, double x, double sigmas = 4.5) {
  const double se = std::sqrt(x * (1.0 - x) / static_cast<double>(e.trials));
  return std::abs(e.ber - x) <= sigmas * se + 1e-12;
}

}  // namespace

TEST(Wilson, KnownIntervals) {
  const BerEstimate a = make_estimate(10, 100);
  EXPECT_DOUBLE_EQ(a.ber, 0.1);
  EXPECT_NEAR(a.ci_lo, 0.0552291370606751, 1e-14);
  EXPECT_NEAR(a.ci_hi, 0.17436566150491345, 1e-14);
  const BerEstimate z = make_estimate(0, 50);
  EXPECT_NEAR(z.ci_lo, 0.0, 1e-15);
  EXPECT_NEAR(z.ci_hi, 0.07134759913335872, 1e-14);
  const BerEstimate f = make_estimate(50, 50);
  EXPECT_NEAR(f.ci_lo, 0.9286524008666414, 1e-14);
  EXPECT_EQ(f.ci_hi, 1.0);
  const BerEstimate big = make_estimate(204406, 1000000);
  EXPECT_NEAR(big.ci_lo, 0.20361674762341242, 1e-14);
  EXPECT_NEAR(big.ci_hi, 0.20519752339222092, 1e-14);
  EXPECT_EQ(make_estimate(0, 0).trials, 0u);
}

TEST(MonteCarlo, DeterministicAcrossThreads) {
  const SystemConfig c = low_rate();
  McConfig mc;
  mc.n_bits = 200000;
  mc.block_bits = 30000;
  mc.seed = 99;
  const BerEstimate one = mc_run(c, mc, DetectorSpec::single(5));
  mc.threads = 3;
  const BerEstimate three = mc_run(c, mc, DetectorSpec::single(5));
  EXPECT_EQ(one.errors, three.errors);
  EXPECT_EQ(one.trials, 200000u);
  mc.seed = 100;
  EXPECT_NE(mc_run(c, mc, DetectorSpec::single(5)).errors, one.errors);
}

TEST(MonteCarlo, SilentLinkIsCoinFlip) {
  SystemConfig c = low_rate(NoiseModel::rare_event_approx);
  c.N = 0.0;
  c.cpns.lambda_e = 0.0;
  McConfig mc;
  mc.n_bits = 100000;
  const BerEstimate e = mc_run(c, mc, DetectorSpec::single(1));
  EXPECT_TRUE(consistent(e, 0.5)) << e.ber;
}

TEST(MonteCarlo, NoiselessMatchesClosedForm) {
  SystemConfig c = low_rate(NoiseModel::none);
  c.k_T = 0;
  c.N = 2.0 / hit_prob(c.tx, c.t_s());
  McConfig mc;
  mc.n_bits = 400000;
  const BerEstimate e = mc_run(c, mc, DetectorSpec::single(1));
  EXPECT_TRUE(consistent(e, 0.5 * std::exp(-2.0))) << e.ber;
}

TEST(MonteCarlo, MatchesAnalysisPerModel) {
  for (auto m : {NoiseModel::homogeneous_poisson, NoiseModel::rare_event_approx}) {
    const SystemConfig c = low_rate(m);
    McConfig mc;
    mc.n_bits = 300000;
    for (long long z : {4, 6}) {
      const double want = ber_std(c, z);
      const BerEstimate e = mc_run(c, mc, DetectorSpec::single(z));
      EXPECT_TRUE(consistent(e, want)) << to_string(m) << " zeta=" << z << " mc=" << e.ber << " analysis=" << want;
    }
  }
}

TEST(MonteCarlo, HighRateMatchesAnalysis) {
  SystemConfig c = low_rate(NoiseModel::high_rate);
  c.cpns.channel.r = 25e-6;
  c.cpns.lambda_e = 500.0;
  const ThresholdResult r = optimal_threshold(c, ThresholdSearch::bisection);
  McConfig mc;
  mc.n_bits = 200000;
  const BerEstimate e = mc_run(c, mc, DetectorSpec::single(r.zeta));
  // The analysis replaces the shot-noise rate by a Gaussian; allow that gap.
  EXPECT_NEAR(e.ber, r.ber, 0.01) << r.zeta;
}

TEST(Particles, FreeDiffusionOccupancy) {
  const ChannelParams ch{1.14e-9, 2e-6, 1e-6};
  const double t = 1e-3, dt = 1e-5;
  const BerEstimate e = pbs_occupancy(ch, t, 100000, dt, 5);
  const double want = sphere_probability_exact(ch.r, ch.r_R, std::sqrt(2.0 * ch.D * t));
  EXPECT_TRUE(consistent(e, want)) << e.ber << " vs " << want;
  // The uniform-concentration approximation is close at this geometry.
  EXPECT_NEAR(hit_prob(ch, t) / want, 1.0, 0.2);
  EXPECT_THROW(pbs_occupancy(ch, 1.5e-5, 10, 1e-5, 1), DomainError);
}

TEST(Particles, ThinnedReleaseMean) {
  SystemConfig c = low_rate(NoiseModel::none);
  c.k_T = 0;
  c.cpns.lambda_e = 0.0;
  PbsConfig pc;
  pc.cfg = c;
  pc.n_bits = 20000;
  const SlotTrace tr = pbs_trace(pc);
  double sum = 0.0;
  long long ones = 0;
  for (std::size_t i = 0; i < tr.bits.size(); ++i) {
    if (tr.bits[i]) {
      sum += static_cast<double>(tr.counts[i]);
      ++ones;
    } else {
      EXPECT_EQ(tr.counts[i], 0);
    }
  }
  const double q = c.N * sphere_probability_exact(c.tx.r, c.tx.r_R, std::sqrt(2.0 * c.tx.D * c.t_s()));
  EXPECT_NEAR(sum / ones, q, 4.5 * std::sqrt(q / ones));
}

TEST(Particles, DeterministicAcrossThreads) {
  PbsConfig pc;
  pc.cfg = low_rate();
  pc.n_bits = 3000;
  pc.block_bits = 1000;
  pc.seed = 7;
  const SlotTrace a = pbs_trace(pc);
  pc.threads = 3;
  const SlotTrace b = pbs_trace(pc);
  EXPECT_EQ(a.bits, b.bits);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.bits.size(), 3000u);
}

TEST(Particles, AgreesWithCountLevelSimulation) {
  const SystemConfig c = low_rate();
  PbsConfig pc;
  pc.cfg = c;
  pc.n_bits = 40000;
  McConfig mc;
  mc.n_bits = 400000;
  const DetectorSpec det = DetectorSpec::single(5);
  const BerEstimate p = pbs_run(pc, det);
  const BerEstimate m = mc_run(c, mc, det);
  const double se = std::hypot(p.std_error(), m.std_error());
  // The particle model counts a ball exactly; the analysis uses the
  // uniform-concentration hit probability. Allow for that modelling gap.
  EXPECT_LT(std::abs(p.ber - m.ber), 4.5 * se + 0.005) << p.ber << " vs " << m.ber;
}

TEST(Particles, NoiseOnlyCountsFollowCpnsLaw) {
  SystemConfig c = low_rate();
  c.N = 0.0;
  c.cpns.channel.r = 25e-6;
  c.cpns.lambda_a = 8e6;
  c.cpns.lambda_e = 5.0;
  c.cpns.slot_T = 0.1;
  c.cpns.t_s = 0.1;
  c.noise.model = NoiseModel::rare_event_approx;
  PbsConfig pc;
  pc.cfg = c;
  pc.n_bits = 200000;  // about 290 support points; sampling TV alone is ~0.008
  const SlotTrace tr = pbs_trace(pc);
  std::vector<double> hist;
  for (long long y : tr.counts) {
    if (static_cast<std::size_t>(y) >= hist.size()) hist.resize(static_cast<std::size_t>(y) + 1, 0.0);
    hist[static_cast<std::size_t>(y)] += 1.0 / static_cast<double>(tr.counts.size());
  }
  const Pmf model = noise_pmf(c);
  EXPECT_LT(total_variation(Pmf{hist, 0.0}, model), 0.02);
}

TEST(Particles, SteppingAgreesWithLazyEngine) {
  SystemConfig c;
  c.tx = {kD, 2e-6, 1e-6};
  c.cpns = {200.0, 300.0, {kD, 3e-6, 1e-6}, 2, 2e-3, 2e-3};
  c.N = 500;
  c.k_T = 2;
  c.noise.model = NoiseModel::none;
  PbsConfig pc;
  pc.cfg = c;
  pc.n_bits = 3000;
  pc.dt = 1e-4;
  const SlotTrace lazy = pbs_trace(pc);
  pc.engine = PbsEngine::stepping;
  const SlotTrace step = pbs_trace(pc);
  auto mean_var = [](const std::vector<long long>& v) {
    double m = 0.0, s = 0.0;
    for (long long x : v) m += static_cast<double>(x);
    m /= static_cast<double>(v.size());
    for (long long x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size())};
  };
  const auto [ml, vl] = mean_var(lazy.counts);
  const auto [ms, vs] = mean_var(step.counts);
  EXPECT_NEAR(ml, ms, 4.5 * std::sqrt((vl + vs) / 3000.0));
  EXPECT_GT(ml, 1.0);
}

TEST(Particles, Validation) {
  PbsConfig pc;
  pc.cfg = low_rate();
  pc.dt = 0.0;
  EXPECT_THROW(pbs_trace(pc), DomainError);
  pc.dt = pc.cfg.slot_T() / 5.0;
  EXPECT_THROW(pbs_trace(pc), DomainError);
  pc.dt = 1e-3;
  pc.n_bits = 0;
  EXPECT_THROW(pbs_trace(pc), DomainError);
  pc.n_bits = 100;
  pc.engine = PbsEngine::stepping;
  pc.population_cap = 1000;
  EXPECT_THROW(pbs_trace(pc), InfeasibleError);
}
