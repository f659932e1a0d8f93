#include "lorid/analysis.hpp"
#include "lorid/purify.hpp"
#include "lorid/tucker.hpp"
#include "test_support.hpp"

#include <Eigen/SVD>
#include <gtest/gtest.h>

namespace lorid {
namespace {

const TensorizationLayout kLayout{8, 8, 2, 4};

TEST(Tensorize, IndexMapping) {
  const Tensord img = test::random_tensor({8, 8, 2}, 1);
  const Tensord t = tensorize(img, kLayout);
  ASSERT_EQ(t.shape(), (Shape{2, 2, 16, 2}));
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t bj = 0; bj < 2; ++bj)
      for (std::size_t di = 0; di < 4; ++di)
        for (std::size_t dj = 0; dj < 4; ++dj)
          for (std::size_t c = 0; c < 2; ++c)
            EXPECT_EQ(t({bi, bj, di * 4 + dj, c}), img({bi * 4 + di, bj * 4 + dj, c}));
}

TEST(Tensorize, RoundTripSingleAndBatch) {
  const Tensord img = test::random_tensor({8, 8, 2}, 2);
  EXPECT_EQ(detensorize(tensorize(img, kLayout), kLayout), img);
  const Tensord batch = test::random_tensor({3, 8, 8, 2}, 3);
  const Tensord t = tensorize(batch, kLayout);
  EXPECT_EQ(t.shape(), (Shape{3, 2, 2, 16, 2}));
  EXPECT_EQ(detensorize(t, kLayout), batch);
}

TEST(Tensorize, RejectsBadLayouts) {
  EXPECT_THROW(tensorize(Tensord({6, 8, 2}), kLayout), std::invalid_argument);
  EXPECT_THROW((TensorizationLayout{10, 8, 1, 4}.validate()), std::invalid_argument);
  EXPECT_THROW((TensorizationLayout{8, 8, 1, 0}.validate()), std::invalid_argument);
}

TEST(Hosvd, FullRankIsExact) {
  const Tensord x = test::random_tensor({4, 5, 3}, 4);
  const Hosvd h = truncated_hosvd(x, {0, 1, 2}, EnergyFraction{1.0});
  EXPECT_EQ(h.ranks, (std::vector<std::size_t>{4, 5, 3}));
  const Tensord y = tucker_project(x, h.modes, h.factors);
  EXPECT_LT(distance(x, y), 1e-10);
}

TEST(Hosvd, ErrorBoundedByDiscardedEnergy) {
  const Tensord x = test::random_tensor({6, 5, 7}, 5);
  const Hosvd h = truncated_hosvd(x, {0, 1, 2}, ExplicitRanks{{3, 2, 4}});
  const Tensord y = tucker_project(x, h.modes, h.factors);
  const double err2 = squared_norm(x - y);
  EXPECT_GT(err2, 0.0);
  EXPECT_LE(err2, h.discarded_total() * (1 + 1e-12));
  for (std::size_t k = 0; k < 3; ++k) {
    const Vectord& s = h.singular_values[k];
    EXPECT_NEAR(h.discarded_energy[k], s.tail(s.size() - static_cast<Eigen::Index>(h.ranks[k])).squaredNorm(),
                1e-10);
  }
}

TEST(Hosvd, MatrixCaseIsEckartYoung) {
  const Tensord x = test::random_tensor({9, 6}, 6);
  const Hosvd h = truncated_hosvd(x, {0}, ExplicitRanks{{2}});
  const Tensord y = tucker_project(x, h.modes, h.factors);
  Eigen::JacobiSVD<Matrixd> ref(unfold(x, 0));
  const double best = ref.singularValues().tail(4).squaredNorm();
  EXPECT_NEAR(squared_norm(x - y), best, 1e-10);
}

TEST(Hosvd, EnergyPolicyPicksSmallestSufficientRank) {
  // Mode-0 singular values are exactly 3, 2, 1 (orthogonal rows scaled).
  Matrixd m = Matrixd::Zero(3, 4);
  m(0, 0) = 3;
  m(1, 1) = 2;
  m(2, 2) = 1;
  const Tensord x = fold(m, 0, {3, 4});
  // Energies 9, 4, 1 of 14: 9/14 = 0.643, 13/14 = 0.929.
  EXPECT_EQ(truncated_hosvd(x, {0}, EnergyFraction{0.6}).ranks[0], 1u);
  EXPECT_EQ(truncated_hosvd(x, {0}, EnergyFraction{0.9}).ranks[0], 2u);
  EXPECT_EQ(truncated_hosvd(x, {0}, EnergyFraction{0.95}).ranks[0], 3u);
  EXPECT_THROW(truncated_hosvd(x, {0}, EnergyFraction{0.0}), std::invalid_argument);
  EXPECT_THROW(truncated_hosvd(x, {0}, ExplicitRanks{{4}}), std::invalid_argument);
  EXPECT_THROW(truncated_hosvd(x, {0, 1}, ExplicitRanks{{1}}), std::invalid_argument);
}

TEST(Hosvd, NarrowUnfoldingCompletesFactor) {
  // Mode-1 unfolding of a (1, 6) tensor has a single column.
  const Tensord x = test::random_tensor({1, 6}, 7);
  const Hosvd h = truncated_hosvd(x, {1}, ExplicitRanks{{3}});
  const Matrixd& u = h.factors[0];
  EXPECT_LT((u.transpose() * u - Matrixd::Identity(3, 3)).norm(), 1e-12);
}

class BasisTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Tensord data = test::random_tensor({20, 8, 8, 2}, 8);
    basis = fit_basis(data, kLayout, ExplicitRanks{{1, 2, 5, 1}});
  }
  TuckerBasis basis;
};

TEST_F(BasisTest, Shapes) {
  EXPECT_NO_THROW(basis.validate());
  ASSERT_EQ(basis.factors.size(), 4u);
  EXPECT_EQ(basis.factors[2].rows(), 16);
  EXPECT_EQ(basis.factors[2].cols(), 5);
}

TEST_F(BasisTest, TfIsAnOrthogonalProjection) {
  const Tensord x = test::random_tensor({8, 8, 2}, 9);
  const Tensord y = test::random_tensor({8, 8, 2}, 10);
  const Tensord px = tf_apply(x, basis);
  EXPECT_LT(distance(tf_apply(px, basis), px), 1e-12);
  // <TF x, y> = <x, TF y>
  EXPECT_NEAR(px.values().dot(y.values()), x.values().dot(tf_apply(y, basis).values()), 1e-10);
  EXPECT_LE(frobenius_norm(px), frobenius_norm(x));
  const Tensord r = tf_residual(x, basis);
  EXPECT_NEAR(r.values().dot(px.values()), 0.0, 1e-10);
}

TEST_F(BasisTest, BatchMatchesPerImage) {
  const Tensord batch = test::random_tensor({3, 8, 8, 2}, 11);
  const Tensord out = tf_apply(batch, basis);
  const std::size_t n = 8 * 8 * 2;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensord img({8, 8, 2}, batch.values().segment(static_cast<Eigen::Index>(i * n), n));
    const Tensord want = tf_apply(img, basis);
    EXPECT_LT((out.values().segment(static_cast<Eigen::Index>(i * n), n) - want.values())
                  .cwiseAbs()
                  .maxCoeff(),
              1e-13);
  }
}

TEST_F(BasisTest, MisalignedNoiseIsRemoved) {
  Rng rng = make_rng(12);
  const Perturbation p = discarded_subspace_noise(basis, 2.0, rng);
  EXPECT_NEAR(p.l2, 2.0, 1e-12);
  EXPECT_LT(frobenius_norm(tf_apply(p.delta, basis)), 1e-10);

  const Tensord x = test::random_tensor({8, 8, 2}, 13);
  const Tensord clean = tf_apply(x, basis);
  const auto terms = tucker_error_terms(clean, p.delta, basis);
  EXPECT_LT(terms.e_tucker, 1e-10);
  EXPECT_LT(terms.residual_noise, 1e-10);
}

TEST_F(BasisTest, GenericNoiseContracts) {
  Rng rng = make_rng(14);
  double ratio = 0;
  for (int i = 0; i < 50; ++i) {
    const Tensord e = standard_normal({8, 8, 2}, rng);
    ratio += frobenius_norm(tf_apply(e, basis)) / frobenius_norm(e) / 50.0;
  }
  // The projector keeps 1*2*5*1 = 10 of 128 dimensions: expected ratio ~ sqrt(10/128).
  EXPECT_NEAR(ratio, std::sqrt(10.0 / 128.0), 0.05);
}

TEST(Basis, FullRankTfIsIdentity) {
  const Tensord data = test::random_tensor({10, 8, 8, 2}, 15);
  const TuckerBasis b = fit_basis(data, kLayout, EnergyFraction{1.0});
  const Tensord x = test::random_tensor({8, 8, 2}, 16);
  EXPECT_LT(distance(tf_apply(x, b), x), 1e-10);
}

TEST(Basis, LowRankDataIsReproduced) {
  Rng rng = make_rng(17);
  const TuckerBasis truth = random_tucker_basis(kLayout, {1, 1, 3, 1}, rng);
  Tensord data({30, 8, 8, 2});
  const std::size_t n = 128;
  for (std::size_t i = 0; i < 30; ++i)
    data.values().segment(static_cast<Eigen::Index>(i * n), n) =
        tf_apply(standard_normal({8, 8, 2}, rng), truth).values();
  const TuckerBasis fitted = fit_basis(data, kLayout, EnergyFraction{0.999999});
  EXPECT_EQ(fitted.ranks, (std::vector<std::size_t>{1, 1, 3, 1}));
  EXPECT_LT(distance(tf_apply(data, fitted), data), 1e-9);
}

}  // namespace
}  // namespace lorid
