// Truncated pmfs, convolution with tail tracking, Poisson mixtures.
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cpns/errors.hpp"
#include "cpns/pmf.hpp"
#include "cpns/special_functions.hpp"

using namespace cpns;

TEST(PoissonPmf, NormalizedWithinTolerance) {
  for (double mean : {0.0, 1e-6, 0.3, 2.0, 17.5, 400.0, 25000.0}) {
    const Pmf p = poisson_pmf(mean, 1e-12);
    EXPECT_NO_THROW(p.validate(1e-12)) << mean;
    EXPECT_LE(p.tail_bound, 1e-12);
    EXPECT_NEAR(p.mean(), mean, 1e-9 * std::max(1.0, mean));
    EXPECT_NEAR(p.variance(), mean, 1e-7 * std::max(1.0, mean));
  }
}

TEST(PoissonPmf, MassesMatchDirectFormula) {
  const Pmf p = poisson_pmf(2.0, 1e-14);
  EXPECT_NEAR(p[0], std::exp(-2.0), 1e-16);
  EXPECT_NEAR(p[1], 2.0 * std::exp(-2.0), 1e-16);
  EXPECT_NEAR(p[5], std::pow(2.0, 5) / 120.0 * std::exp(-2.0), 1e-16);
  EXPECT_EQ(p[100000], 0.0);
  EXPECT_THROW(poisson_pmf(-1.0), DomainError);
}

TEST(Convolve, PoissonAdditivity) {
  const Pmf a = poisson_pmf(2.0, 1e-15), b = poisson_pmf(3.5, 1e-15);
  const Pmf c = convolve(a, b);
  const Pmf d = poisson_pmf(5.5, 1e-15);
  EXPECT_LT(max_abs_difference(c, d), 1e-15);
  EXPECT_LE(c.tail_bound, 2e-15);
}

TEST(Convolve, CutAndTrimGoToTailBound) {
  const Pmf a = poisson_pmf(20.0, 1e-14), b = poisson_pmf(20.0, 1e-14);
  const Pmf cut = convolve(a, b, 0.0, 30);
  EXPECT_EQ(cut.size(), 31u);
  EXPECT_NEAR(cut.total() + cut.tail_bound, 1.0, 1e-12);
  EXPECT_NEAR(cut.tail_bound, special::regularized_q(31.0, 40.0) == 0 ? 0 : 1.0 - special::poisson_cdf(30, 40.0),
              1e-12);
  const Pmf trimmed = convolve(a, b, 1e-6);
  EXPECT_LT(trimmed.size(), convolve(a, b).size());
  EXPECT_LE(trimmed.tail_bound, 1e-6 + 2e-14);
  EXPECT_NEAR(trimmed.total() + trimmed.tail_bound, 1.0, 1e-12);
}

TEST(Convolve, DeltaIsIdentity) {
  const Pmf a = poisson_pmf(7.0);
  const Pmf c = convolve(Pmf::delta(), a);
  EXPECT_EQ(c.masses, a.masses);
  EXPECT_THROW(convolve(Pmf{}, a), DomainError);
}

TEST(Mix, WeightsCombineMassesAndTails) {
  const Pmf m = mix({0.25, 0.75}, {poisson_pmf(1.0, 1e-13), poisson_pmf(9.0, 1e-13)});
  EXPECT_NEAR(m[3], 0.25 * std::exp(-1.0) / 6.0 + 0.75 * std::exp(-9.0) * 729.0 / 6.0, 1e-16);
  EXPECT_NO_THROW(m.validate(1e-13));
  EXPECT_THROW(mix({1.0}, {}), DomainError);
}

TEST(PoissonMixture, CdfMatchesPmf) {
  const PoissonMixture mx{{{0.2, 0.5}, {0.5, 4.0}, {0.3, 30.0}}};
  EXPECT_NO_THROW(mx.validate());
  EXPECT_NEAR(mx.mean(), 0.1 + 2.0 + 9.0, 1e-14);
  const Pmf p = mx.to_pmf(1e-14);
  const std::vector<double> f = p.cdf();
  for (long long k : {0, 1, 3, 10, 29, 45}) EXPECT_NEAR(mx.cdf(k), f[static_cast<std::size_t>(k)], 1e-13) << k;
  EXPECT_THROW((PoissonMixture{{{0.5, 1.0}}}.validate()), DomainError);
  EXPECT_THROW((PoissonMixture{{{1.0, -1.0}}}.validate()), DomainError);
}

TEST(PmfInvariant, ValidateDetectsViolations) {
  EXPECT_THROW((Pmf{{0.5, 0.4}, 0.0}.validate()), DomainError);
  EXPECT_THROW((Pmf{{0.5, 0.5 - 1e-6}, 1e-6}.validate(1e-10)), InfeasibleError);
  EXPECT_THROW((Pmf{{1.5, -0.5}, 0.0}.validate()), DomainError);
  EXPECT_NO_THROW((Pmf{{0.5, 0.5 - 1e-11}, 1e-11}.validate()));
}

TEST(PmfCsv, ColumnsAndTailComment) {
  std::ostringstream os;
  write_pmf_csv(os, Pmf{{0.75, 0.25}, 0.0}, {"note"});
  EXPECT_EQ(os.str(), "# note\nk,mass\n0,0.75\n1,0.25\n# tail_bound=0\n");
}

TEST(TotalVariation, Basic) {
  EXPECT_DOUBLE_EQ(total_variation(Pmf{{1.0}, 0}, Pmf{{0.0, 1.0}, 0}), 1.0);
  EXPECT_DOUBLE_EQ(total_variation(poisson_pmf(3.0), poisson_pmf(3.0)), 0.0);
}
