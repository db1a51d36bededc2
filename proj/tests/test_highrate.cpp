// Shot-noise cumulants and the Poisson law with a Gaussian rate.
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cpns/cpns_dist.hpp"
#include "cpns/errors.hpp"
#include "cpns/highrate.hpp"
#include "cpns/quadrature.hpp"

using namespace cpns;

namespace {

CpnsParams params(double lambda_e, double lambda_a, double d_c_um, double T, int k_C = 15) {
  return {lambda_e, lambda_a, {1.14e-9, d_c_um * 1e-6, 0.5e-6}, k_C, T, T};
}

double cumulant_by_quadrature(int n, const CpnsParams& p) {
  std::vector<double> br;
  const double peak = p.channel.r * p.channel.r / (6.0 * p.channel.D);
  for (double s = peak / 64; s < p.window(); s *= 2) br.push_back(s);
  const double v = quad::integrate([&](double t) { return std::pow(p.lambda_a * hit_prob(p.channel, t), n); }, 0.0,
                                   p.window(), br, 1e-11);
  return p.lambda_e * v;
}

}  // namespace

TEST(Cumulant, TrivialCases) {
  EXPECT_EQ(cumulant(3, params(200, 0.0, 8, 0.1)), 0.0);
  EXPECT_EQ(cumulant(1, params(0.0, 1e5, 8, 0.1)), 0.0);
  EXPECT_THROW(cumulant(0, params(200, 2e4, 8, 0.1)), DomainError);
}

TEST(Cumulant, Goldens) {
  // mpmath quadrature at 40 digits, lambda_e = 200, lambda_a = 2e4, d_C = 8 um.
  const CpnsParams p = params(200, 2e4, 8, 0.1);
  EXPECT_NEAR(cumulant(1, p) / 16.286388252928127966, 1.0, 1e-12);
  EXPECT_NEAR(cumulant(2, p) / 9.466244634006269077, 1.0, 1e-12);
  EXPECT_NEAR(cumulant(3, p) / 9.8854934430121437277, 1.0, 1e-12);
}

TEST(Cumulant, ClosedFormMatchesQuadrature) {
  for (double dc : {6.0, 8.0, 12.0, 25.0, 50.0, 100.0})
    for (double la : {8e6, 1e5, 2e4})
      for (double T : {0.5, 0.2, 0.1, 0.02}) {
        const CpnsParams p = params(100, la, dc, T);
        for (int n = 1; n <= 6; ++n) {
          const double q = cumulant_by_quadrature(n, p);
          if (q < 1e-300) continue;
          EXPECT_NEAR(cumulant(n, p) / q, 1.0, 1e-8) << "n=" << n << " dC=" << dc << " la=" << la << " T=" << T;
        }
        EXPECT_NEAR(cumulant(1, p) / cpns_mean(p), 1.0, 1e-10);
      }
}

TEST(HighratePmf, Goldens) {
  const Pmf p = highrate_pmf({50.0, 25.0});
  // mpmath quadrature of the Poisson-Gaussian integral.
  EXPECT_NEAR(p[0] / 5.1755535222208907745e-17, 1.0, 1e-10);
  EXPECT_NEAR(p[20] / 0.000024589672273360098249, 1.0, 1e-10);
  EXPECT_NEAR(p[50] / 0.045940689103726889082, 1.0, 1e-10);
  EXPECT_NEAR(p[80] / 0.00024405259566756625201, 1.0, 1e-10);
}

TEST(HighratePmf, MatchesQuadratureOracle) {
  for (const Cumulants& c : {Cumulants{50, 25}, Cumulants{5, 6.25}, Cumulants{300, 900}, Cumulants{500, 62500}}) {
    const Pmf a = highrate_pmf(c), b = highrate_pmf_quadrature(c);
    for (std::size_t k = 0; k < a.size(); ++k)
      if (b[k] > 1e-12) EXPECT_NEAR(a[k] / b[k], 1.0, 1e-6) << c.k1 << "," << c.k2 << " k=" << k;
  }
}

TEST(HighratePmf, MassIsGaussianNonnegativePart) {
  for (const Cumulants& c : {Cumulants{5, 9}, Cumulants{2, 16}, Cumulants{50, 25}, Cumulants{1000, 4e4}}) {
    const Pmf p = highrate_pmf(c);
    EXPECT_NEAR(p.total(), (GaussianRate{c.k1, c.k2}.nonnegative_mass()), 1e-6) << c.k1;
    EXPECT_NEAR(p.total() + p.tail_bound, 1.0, 1e-12);
  }
}

TEST(HighratePmf, CollapsesToPoissonForTinyVariance) {
  const double k1 = 30.0;
  const Pmf h = highrate_pmf({k1, 1e-6 * k1 * k1});
  EXPECT_LT(total_variation(h, poisson_pmf(k1, 1e-14)), 1e-4);
}

TEST(HighratePmf, LargeScaleStaysFinite) {
  const Pmf p = highrate_pmf({3900.0, 2.5e5});
  double top = 0.0;
  for (double m : p.masses) {
    ASSERT_TRUE(std::isfinite(m));
    top = std::max(top, m);
  }
  EXPECT_GT(top, 0.0);
  EXPECT_NEAR(p.total(), 1.0, 1e-6);
  EXPECT_NEAR(p.mean() / 3900.0, 1.0, 1e-6);
}

TEST(HighratePmf, RejectsBadCumulants) {
  EXPECT_THROW(highrate_pmf({5.0, 0.0}), DomainError);
  EXPECT_THROW(highrate_pmf({-1.0, 1.0}), DomainError);
  EXPECT_THROW(highrate_pmf({NAN, 1.0}), DomainError);
}

TEST(HighratePmf, MatchesSampledHistogram) {
  const Cumulants c{40.0, 100.0};
  std::mt19937_64 rng(5);
  const int n = 1'000'000;
  std::vector<double> hist(200, 0.0);
  for (int i = 0; i < n; ++i)
    hist[std::min<std::size_t>(static_cast<std::size_t>(sample_highrate_count(c, rng)), 199)] += 1.0 / n;
  Pmf h = highrate_pmf(c);
  // The sampler draws from the rate law restricted to m >= 0.
  const double z = h.total();
  for (double& m : h.masses) m /= z;
  EXPECT_LT(total_variation(Pmf{hist, 0.0}, h), 5e-3);
}

TEST(RateSampler, MomentsMatchCumulants) {
  for (double le : {2.0, 50.0, 400.0}) {
    const CpnsParams p = params(le, 1e5, 8, 0.02);
    std::mt19937_64 rng(17);
    const int n = le > 100 ? 200'000 : 1'000'000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double m = sample_rate_M(p, rng);
      s += m;
      s2 += m * m;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    const Cumulants c = cumulants(p);
    EXPECT_NEAR(mean, c.k1, 3 * std::sqrt(var / n)) << le;
    // Standard error of the sample variance via the fourth cumulant.
    const double k4 = cumulant(4, p);
    EXPECT_NEAR(var, c.k2, 3 * std::sqrt((k4 + 2 * c.k2 * c.k2) / n)) << le;
  }
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_rate_M(params(0.0, 1e5, 8, 0.02), rng), 0.0);
}

TEST(GaussianRate, DensityAndCdf) {
  const GaussianRate g{3.0, 4.0};
  EXPECT_NEAR(g.pdf(3.0), 1.0 / std::sqrt(8.0 * M_PI), 1e-15);
  EXPECT_NEAR(g.cdf(3.0), 0.5, 1e-15);
  const double total = quad::integrate([&](double m) { return g.pdf(m); }, -40.0, 46.0, {3.0}, 1e-14);
  EXPECT_NEAR(total, 1.0, 1e-13);
}
