#include "lorid/analysis.hpp"
#include "lorid/purify.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace lorid {
namespace {

const Schedule kSchedule = make_linear_schedule();
const TensorizationLayout kLayout{8, 8, 1, 4};

class PurifyTest : public ::testing::Test {
 protected:
  PurifyTest()
      : prior_(GaussianPrior::standard(64)), den_(prior_, kSchedule) {}

  GaussianPrior prior_;
  GaussianOracleDenoiser den_;
};

// Mean squared error of ancestral LoRID on standard normal data of dim 64.
double purify_mse(const Denoiser& den, int t, int loops, int trials, std::uint64_t seed) {
  LoridConfig cfg;
  cfg.t = t;
  cfg.loops = loops;
  Rng rng = make_rng(seed);
  double acc = 0;
  for (int i = 0; i < trials; ++i) {
    const Tensord x = standard_normal({8, 8, 1}, rng);
    acc += mse(lorid_purify(x, cfg, den, kSchedule, rng).output, x);
  }
  return acc / trials;
}

TEST(LoridConfig, Validation) {
  LoridConfig cfg;
  EXPECT_NO_THROW(cfg.validate(kSchedule));
  cfg.t = 0;
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
  cfg.t = 1001;
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
  cfg = {};
  cfg.t = 5;
  cfg.loops = 6;
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
  cfg.loops = 0;
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
  cfg = {};
  cfg.use_tucker = true;
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
  cfg = {};
  cfg.sampler = Sampler::skip;
  cfg.skip_k = 0;
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
  cfg = {};
  cfg.clamp = std::pair{1.0, 0.0};
  EXPECT_THROW(cfg.validate(kSchedule), std::invalid_argument);
}

TEST(LoridConfig, StepPerLoopFloors) {
  LoridConfig cfg;
  cfg.t = 100;
  cfg.loops = 3;
  EXPECT_EQ(cfg.step_per_loop(), 33);
}

TEST_F(PurifyTest, SingleLoopIsBitIdenticalToSinglePurification) {
  const Tensord x = test::random_tensor({8, 8, 1}, 1);
  LoridConfig cfg;
  cfg.t = 120;
  Rng a = make_rng(2), b = make_rng(2);
  EXPECT_EQ(lorid_purify(x, cfg, den_, kSchedule, a).output,
            purify_single(x, 120, den_, kSchedule, b));
}

TEST_F(PurifyTest, FullRankTfMatchesLoopOnly) {
  const Tensord data = test::random_tensor({10, 8, 8, 1}, 3);
  LoridConfig cfg;
  cfg.t = 60;
  cfg.loops = 3;
  LoridConfig with_tf = cfg;
  with_tf.use_tucker = true;
  with_tf.basis = fit_basis(data, kLayout, EnergyFraction{1.0});
  const Tensord x = test::random_tensor({8, 8, 1}, 4);
  Rng a = make_rng(5), b = make_rng(5);
  const Tensord plain = lorid_purify(x, cfg, den_, kSchedule, a).output;
  const Tensord tf = lorid_purify(x, with_tf, den_, kSchedule, b).output;
  EXPECT_LT((plain.values() - tf.values()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(PurifyTest, DeterministicForFixedSeed) {
  const Tensord x = test::random_tensor({8, 8, 1}, 6);
  LoridConfig cfg;
  cfg.t = 80;
  cfg.loops = 4;
  Rng a = make_rng(7), b = make_rng(7), c = make_rng(8);
  const Tensord ya = lorid_purify(x, cfg, den_, kSchedule, a).output;
  EXPECT_EQ(ya, lorid_purify(x, cfg, den_, kSchedule, b).output);
  EXPECT_NE(ya, lorid_purify(x, cfg, den_, kSchedule, c).output);
}

TEST_F(PurifyTest, TraceHasOneEntryPerLoop) {
  const Tensord x = test::random_tensor({8, 8, 1}, 9);
  LoridConfig cfg;
  cfg.t = 40;
  cfg.loops = 5;
  Rng rng = make_rng(10);
  const PurifyResult r = lorid_purify(x, cfg, den_, kSchedule, rng, &x);
  ASSERT_EQ(r.trace.loop_outputs.size(), 5u);
  ASSERT_EQ(r.trace.loop_distances.size(), 5u);
  EXPECT_EQ(r.trace.loop_outputs.back(), r.output);
  EXPECT_DOUBLE_EQ(r.trace.loop_distances.back(), distance(r.output, x));
  EXPECT_GE(r.trace.wall_seconds, 0.0);
}

TEST_F(PurifyTest, ClampAppliesToFinalOutputOnly) {
  const Tensord x = test::random_tensor({8, 8, 1}, 11);
  LoridConfig cfg;
  cfg.t = 300;
  cfg.loops = 2;
  cfg.clamp = std::pair{-0.1, 0.1};
  Rng a = make_rng(12), b = make_rng(12);
  const PurifyResult clamped = lorid_purify(x, cfg, den_, kSchedule, a);
  cfg.clamp.reset();
  const PurifyResult raw = lorid_purify(x, cfg, den_, kSchedule, b);
  EXPECT_EQ(raw.trace.loop_outputs[0], clamped.trace.loop_outputs[0]);
  EXPECT_LE(linf_norm(clamped.output), 0.1);
  EXPECT_EQ(clamped.output.values(), raw.output.values().cwiseMax(-0.1).cwiseMin(0.1));
}

TEST_F(PurifyTest, SkipSamplerIsDeterministicGivenDiffusion) {
  const Tensord x = test::random_tensor({8, 8, 1}, 13);
  LoridConfig cfg;
  cfg.t = 100;
  cfg.sampler = Sampler::skip;
  cfg.skip_k = 10;
  Rng a = make_rng(14), b = make_rng(14);
  EXPECT_EQ(lorid_purify(x, cfg, den_, kSchedule, a).output,
            lorid_purify(x, cfg, den_, kSchedule, b).output);
}

TEST_F(PurifyTest, LoopingReducesErrorAtLargeT) {
  const double looped = purify_mse(den_, 400, 8, 300, 15);
  const double single = purify_mse(den_, 400, 1, 300, 15);
  EXPECT_LT(looped, single);
}

TEST_F(PurifyTest, ErrorGrowsWithT) {
  double prev = 0;
  for (int t : {10, 100, 300, 700}) {
    const double e = purify_mse(den_, t, 1, 200, 16);
    EXPECT_GT(e, prev) << t;
    prev = e;
  }
}

TEST_F(PurifyTest, BatchMatchesPerSampleStreams) {
  const Tensord batch = test::random_tensor({3, 8, 8, 1}, 17);
  LoridConfig cfg;
  cfg.t = 30;
  cfg.loops = 2;
  cfg.seed = 99;
  const Tensord out = lorid_purify_batch(batch, cfg, den_, kSchedule);
  for (std::size_t i = 0; i < 3; ++i) {
    Tensord x({8, 8, 1}, batch.values().segment(static_cast<Eigen::Index>(i * 64), 64));
    Rng rng = make_rng(99, i);
    const Tensord y = lorid_purify(x, cfg, den_, kSchedule, rng).output;
    EXPECT_EQ(Vectord(out.values().segment(static_cast<Eigen::Index>(i * 64), 64)), y.values());
  }
}

TEST(Perturbations, SignNoiseHasExactBudget) {
  Rng rng = make_rng(18);
  const Perturbation p = uniform_sign_noise({8, 8, 3}, 8.0 / 255.0, rng);
  EXPECT_DOUBLE_EQ(p.linf, 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(p.delta.values().cwiseAbs().minCoeff(), 8.0 / 255.0);
  EXPECT_NEAR(p.l2, 8.0 / 255.0 * std::sqrt(192.0), 1e-12);
  EXPECT_THROW(uniform_sign_noise({2}, -1.0, rng), std::invalid_argument);
}

TEST(Perturbations, SphereNoiseHasRadius) {
  Rng rng = make_rng(19);
  const Perturbation p = l2_sphere_noise({10}, 0.7, rng);
  EXPECT_NEAR(p.l2, 0.7, 1e-12);
  EXPECT_EQ(add_adversarial(Tensord::constant({10}, 1.0), p.delta),
            Tensord::constant({10}, 1.0) + p.delta);
}

TEST(Perturbations, DiscardedNoiseSurvivesTfBarely) {
  Rng rng = make_rng(20);
  const TuckerBasis basis = random_tucker_basis(kLayout, {1, 1, 4, 1}, rng);
  const Perturbation p = discarded_subspace_noise(basis, 1.0, rng);
  EXPECT_LT(frobenius_norm(tf_apply(p.delta, basis)) / p.l2, 0.2);
  // Generic noise keeps about sqrt(4/64) of its norm.
  const Perturbation g = l2_sphere_noise({8, 8, 1}, 1.0, rng);
  EXPECT_GT(frobenius_norm(tf_apply(g.delta, basis)), 0.05);

  LoridConfig full;
  full.basis = fit_basis(test::random_tensor({5, 8, 8, 1}, 21), kLayout, EnergyFraction{1.0});
  EXPECT_THROW(discarded_subspace_noise(*full.basis, 1.0, rng), std::invalid_argument);
}

}  // namespace
}  // namespace lorid
