#include "lorid/analysis.hpp"
#include "lorid/denoiser.hpp"
#include "lorid/purify.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace lorid {
namespace {

const Schedule kSchedule = make_linear_schedule();

std::vector<int> loops_1_to_10() {
  std::vector<int> l(10);
  std::iota(l.begin(), l.end(), 1);
  return l;
}

std::vector<double> curve_values(int effective_t) {
  std::vector<double> v;
  for (const auto& p : loop_bound_curve(kSchedule, effective_t, loops_1_to_10())) v.push_back(p.value);
  return v;
}

TEST(Mmse, Gaussian) {
  EXPECT_DOUBLE_EQ(mmse_gaussian(0), 1.0);
  EXPECT_DOUBLE_EQ(mmse_gaussian(1), 0.5);
  EXPECT_DOUBLE_EQ(mmse_gaussian(3), 0.25);
  EXPECT_THROW(mmse_gaussian(-1), std::invalid_argument);
  Vectord ev(2);
  ev << 1.0, 3.0;
  EXPECT_DOUBLE_EQ(mmse_gaussian_spectrum(1.0, ev), 0.5 * (0.5 + 0.75));
}

TEST(Mmse, BinaryFrozenValues) {
  // Arbitrary-precision quadrature of the same integral.
  EXPECT_DOUBLE_EQ(mmse_binary(0), 1.0);
  EXPECT_NEAR(mmse_binary(0.1), 0.908659398795122, 1e-9);
  EXPECT_NEAR(mmse_binary(1.0), 0.449599509206673, 1e-9);
  EXPECT_NEAR(mmse_binary(10.0), 0.00241131473541226, 1e-9);
}

TEST(Mmse, BinaryMatchesMonteCarlo) {
  // x uniform on {-1, 1}, y = sqrt(snr) x + z, E[x | y] = tanh(sqrt(snr) y).
  Rng rng = make_rng(1);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin;
  for (double snr : {0.5, 2.0}) {
    const int n = 1000000;
    double sum = 0, sum_sq = 0;
    for (int i = 0; i < n; ++i) {
      const double x = coin(rng) ? 1.0 : -1.0;
      const double y = std::sqrt(snr) * x + normal(rng);
      const double e = std::pow(x - std::tanh(std::sqrt(snr) * y), 2);
      sum += e;
      sum_sq += e * e;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    EXPECT_NEAR(mmse_binary(snr), mean, 5 * se) << snr;
  }
}

TEST(Mmse, BinaryBelowGaussian) {
  for (double snr : {0.1, 0.5, 1.0, 4.0}) EXPECT_LT(mmse_binary(snr), mmse_gaussian(snr));
}

TEST(LoopCurve, FrozenValues) {
  const std::vector<std::pair<int, std::vector<double>>> frozen = {
      {200, {0.3409614917682059, 0.20596370865008007, 0.14446031139903537, 0.11593710824223935,
             0.09676817716597896, 0.0823567869975399, 0.07195164631951823, 0.06753469696981718,
             0.06101678433592406, 0.05769048313842173}},
      {400, {0.8048535550665676, 0.6819229835364118, 0.5149742881416711, 0.41192741730016014,
             0.342629544918609, 0.28892062279807074, 0.25769027025612257, 0.2318742164844787,
             0.20685199788583797, 0.19353635433195793}},
      {600, {0.9741206105766651, 1.2071604810834948, 1.0228844753046178, 0.8467145964503873,
             0.715165843670475, 0.6178911259502402, 0.5359984847117285, 0.48703278158935337,
             0.4333809341971061, 0.4043577059769088}},
      {900, {0.9997247940880966, 1.7460202809773873, 1.8107407216252422, 1.6344491047846628,
             1.4387494484413055, 1.270071894675581, 1.1229970248169732, 1.0111600567132104,
             0.9268366889253603, 0.8500362080449153}},
  };
  for (const auto& [et, want] : frozen) {
    const auto got = curve_values(et);
    for (std::size_t i = 0; i < want.size(); ++i)
      EXPECT_NEAR(got[i], want[i], 1e-12) << "effective_t=" << et << " L=" << i + 1;
  }
}

TEST(LoopCurve, Metadata) {
  const auto c = loop_bound_curve(kSchedule, 600, {1, 7});
  EXPECT_EQ(c[1].t_over_L, 85);
  EXPECT_EQ(c[1].effective_t, 595);
  EXPECT_THROW(loop_bound_curve(kSchedule, 5, {6}), std::invalid_argument);
  EXPECT_THROW(loop_bound_curve(kSchedule, 5, {0}), std::invalid_argument);
}

TEST(LoopCurve, StrictlyDecreasingForModerateT) {
  for (int et : {200, 400}) {
    const auto v = curve_values(et);
    EXPECT_LT(max_increase(v), 0.0) << et;
  }
}

TEST(LoopCurve, LargeTDecreasesOnlyAfterInitialRise) {
  // Near saturation the per-loop MMSE stays close to 1, so L = 2 costs more.
  const auto v600 = curve_values(600);
  EXPECT_GT(v600[1], v600[0]);
  EXPECT_TRUE(non_increasing({v600.begin() + 1, v600.end()}));
  const auto v900 = curve_values(900);
  EXPECT_GT(v900[2], v900[1]);
  EXPECT_TRUE(non_increasing({v900.begin() + 2, v900.end()}));
}

TEST(LoopCurve, SmallerTIsBelowLargerT) {
  const auto low = curve_values(300);
  const auto high = curve_values(900);
  for (std::size_t i = 0; i < low.size(); ++i) EXPECT_LT(low[i], high[i]) << i;
}

TEST(Sequences, Helpers) {
  EXPECT_TRUE(non_increasing({3, 2, 2, 1}));
  EXPECT_FALSE(non_increasing({3, 2, 2.1}));
  EXPECT_TRUE(non_increasing({3, 2, 2.1}, 0.2));
  EXPECT_DOUBLE_EQ(max_increase({3, 1, 4, 2}), 3.0);
}

TEST(Kl, UnitShift) {
  GaussianDist p{Vectord::Zero(1), Matrixd::Identity(1, 1)};
  GaussianDist q{Vectord::Ones(1), Matrixd::Identity(1, 1)};
  EXPECT_NEAR(kl_gaussian(p, q), 0.5, 1e-15);
  EXPECT_NEAR(kl_gaussian(p, p), 0.0, 1e-15);
  q.cov(0, 0) = -1;
  EXPECT_THROW(kl_gaussian(p, q), std::invalid_argument);
}

TEST(Kl, MatchesMonteCarlo) {
  Rng rng = make_rng(2);
  const GaussianDist p = random_gaussian(3, rng);
  const GaussianDist q = random_gaussian(3, rng);
  const GaussianPrior prior(p.mean, p.cov);
  auto logpdf = [](const GaussianDist& g, const Vectord& x) {
    Eigen::LLT<Matrixd> l(g.cov);
    const Vectord z = l.matrixL().solve(x - g.mean);
    const Matrixd lm = l.matrixL();
    return -0.5 * z.squaredNorm() - lm.diagonal().array().log().sum();
  };
  const int n = 200000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    const Vectord x = prior.sample(rng);
    const double r = logpdf(p, x) - logpdf(q, x);
    sum += r;
    sum_sq += r * r;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_NEAR(kl_gaussian(p, q), mean, 5 * se);
}

TEST(Kl, ForwardSequenceNonIncreasing) {
  Rng rng = make_rng(3);
  const GaussianDist p = random_gaussian(4, rng);
  const GaussianDist q = random_gaussian(4, rng);
  std::vector<int> steps(1001);
  std::iota(steps.begin(), steps.end(), 0);
  const auto kl = kl_forward_sequence(p, q, kSchedule, steps);
  EXPECT_NEAR(kl[0], kl_gaussian(p, q), 1e-12);
  EXPECT_TRUE(non_increasing(kl, 1e-12));
  EXPECT_LT(kl.back(), 1e-3 * kl.front());
}

TEST(Kl, QuadratureMatchesClosedForm) {
  const Grid1D grid;
  const Vectord p = tabulate_density(grid, [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); });
  const Vectord q = tabulate_density(grid, [](double x) {
    return std::exp(-0.5 * std::pow((x - 1) / 2, 2)) / (2 * std::sqrt(2 * M_PI));
  });
  const GaussianDist gp{Vectord::Zero(1), Matrixd::Identity(1, 1)};
  const GaussianDist gq{Vectord::Ones(1), Matrixd::Constant(1, 1, 4.0)};
  for (int t : {0, 10, 200, 600}) {
    const double closed = kl_gaussian_forward(gp, gq, kSchedule, t);
    EXPECT_NEAR(kl_quadrature_forward(grid, p, q, kSchedule, t), closed, 1e-7) << t;
  }
}

TEST(Kl, QuadratureRejectsTruncatedGrid) {
  const Grid1D narrow{-1, 1, 201};
  const Vectord p = tabulate_density(narrow, [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); });
  EXPECT_THROW(forward_density(narrow, p, kSchedule, 10), std::runtime_error);
  const Grid1D grid;
  EXPECT_THROW(forward_density(grid, Vectord::Ones(5), kSchedule, 10), std::invalid_argument);
}

TEST(Kl, ReferencePairsAreNormalizedAndDecay) {
  const Grid1D grid;
  const auto pairs = reference_density_pairs(grid);
  ASSERT_EQ(pairs.size(), 5u);
  for (const auto& [p, q] : pairs) {
    EXPECT_NEAR(grid.weights().dot(p), 1.0, 1e-12);
    EXPECT_NEAR(grid.weights().dot(q), 1.0, 1e-12);
    const auto kl = kl_quadrature_sequence(grid, p, q, kSchedule, {0, 100, 300, 600, 1000});
    EXPECT_GT(kl[0], 0.0);
    EXPECT_TRUE(non_increasing(kl, 1e-9));
  }
}

TEST(RandomTuckerBasis, OrthonormalFactors) {
  Rng rng = make_rng(4);
  const TuckerBasis b = random_tucker_basis({8, 8, 1, 4}, {1, 2, 3, 1}, rng);
  for (const auto& u : b.factors)
    EXPECT_LT((u.transpose() * u - Matrixd::Identity(u.cols(), u.cols())).norm(), 1e-12);
  EXPECT_THROW(random_tucker_basis({8, 8, 1, 4}, {3, 1, 1, 1}, rng), std::invalid_argument);
}

TEST(TuckerPrior, CovarianceIsScaledProjector) {
  Rng rng = make_rng(5);
  const TuckerBasis b = random_tucker_basis({8, 8, 1, 4}, {1, 1, 4, 1}, rng);
  const GaussianPrior prior = tucker_gaussian_prior(b, 1.0, 0.1);
  const Vectord ev = prior.eigenvalues();
  // 4 eigenvalues at 1 + 0.01, the remaining 60 at 0.01.
  EXPECT_EQ((ev.array() > 0.5).count(), 4);
  EXPECT_NEAR(ev.maxCoeff(), 1.01, 1e-10);
  EXPECT_NEAR(ev.minCoeff(), 0.01, 1e-10);
}

TEST(VerifyBounds, CleanOneShotMatchesMmse) {
  const GaussianPrior prior = GaussianPrior::standard(8);
  const GaussianOracleDenoiser den(prior, kSchedule);
  BoundSetup setup{&prior, &den, &kSchedule};
  Rng rng = make_rng(6);
  const BoundReport r = verify_bounds(setup, 200, 20000, rng);
  EXPECT_NEAR(r.mmse, 1 - 0.6590385082317941, 1e-12);
  EXPECT_NEAR(r.clean_empirical, r.mmse, r.tolerance + 0.01);
  EXPECT_DOUBLE_EQ(r.empirical, r.clean_empirical);
  EXPECT_TRUE(r.holds());
}

TEST(VerifyBounds, PerturbedInputStaysInsideBounds) {
  const GaussianPrior prior = GaussianPrior::standard(8);
  const GaussianOracleDenoiser den(prior, kSchedule);
  Rng noise_rng = make_rng(7);
  BoundSetup setup{&prior, &den, &kSchedule};
  setup.eps_a = l2_sphere_noise({8}, 0.5 * std::sqrt(8.0), noise_rng).delta.values();
  Rng rng = make_rng(8);
  const BoundReport r = verify_bounds(setup, 200, 5000, rng);
  EXPECT_NEAR(r.eps_norm, 0.5, 1e-12);
  EXPECT_TRUE(r.lower_ok);
  EXPECT_TRUE(r.upper_ok);
  EXPECT_GT(r.empirical, r.clean_empirical);
}

TEST(VerifyBounds, RejectsIncompleteSetup) {
  Rng rng = make_rng(9);
  EXPECT_THROW(verify_bounds(BoundSetup{}, 10, 10, rng), std::invalid_argument);
  const GaussianPrior prior = GaussianPrior::standard(2);
  const GaussianOracleDenoiser den(prior, kSchedule);
  BoundSetup setup{&prior, &den, &kSchedule};
  setup.loops = 20;
  EXPECT_THROW(verify_bounds(setup, 10, 10, rng), std::invalid_argument);
}

}  // namespace
}  // namespace lorid
