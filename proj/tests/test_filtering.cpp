#include <cmath>

#include <gtest/gtest.h>

#include "rsd/filtering.hpp"
#include "rsd/rng.hpp"

using namespace rsd;

namespace {

MatrixXd gaussian(int n, int k, std::uint64_t seed) {
  Philox rng(seed);
  MatrixXd y(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) y(i, j) = rng.normal();
  return y;
}

// Recomputes the score of the weight filter from its definition.
VectorXd weight_scores(const WeightedSample& s) {
  const MatrixXd u = s.weights.cwiseSqrt().asDiagonal() * s.data;
  const VectorXd total = u.colwise().sum().transpose();
  return (u * total - s.k * s.weights).cwiseAbs();
}

}  // namespace

TEST(Params, BudgetAndVanishingLogTerms) {
  const auto p = make_params(200, 10, 0.05, 0.05);
  EXPECT_EQ(p.budget(), 10);
  EXPECT_EQ(make_params(99, 10, 0.1, 0.05).budget(), 9);
  const auto z = make_params(200, 10, 0.0, 0.05);
  EXPECT_EQ(z.beta1, 0.0);
  EXPECT_EQ(z.beta2, 0.0);
  EXPECT_NEAR(z.gamma2, 2.0 * (std::sqrt(2000.0) + std::sqrt(200 * std::log(20.0)) + std::log(20.0)), 1e-9);
  EXPECT_THROW(make_params(10, 1, 0.5, 0.05), std::invalid_argument);
  EXPECT_THROW(make_params(10, 1, 0.1, 0.0), std::invalid_argument);
}

TEST(Prefilter, CleanDataRarelyRejected) {
  const auto p = make_params(200, 10, 0.05, 0.05);
  int rejections = 0;
  for (int t = 0; t < 500; ++t) rejections += prefilter(WeightedSample(gaussian(200, 10, derive_seed(1, t))), p).rejected;
  EXPECT_LE(rejections, 25);
}

TEST(Prefilter, BudgetBoundary) {
  const auto p = make_params(200, 10, 0.05, 0.05);
  MatrixXd y = gaussian(200, 10, 3);
  const MatrixXd clean = y;
  for (int i = 0; i < p.budget(); ++i) y(i, 0) = 1e6;
  const auto ok = prefilter(WeightedSample(y), p);
  ASSERT_FALSE(ok.rejected);
  for (int i = 0; i < 200; ++i) {
    const bool clean_row_survives = std::abs(clean.row(i).squaredNorm() - 10.0) <= p.gamma1;
    EXPECT_EQ(ok.sample.weights(i), i < p.budget() ? 0.0 : (clean_row_survives ? 1.0 : 0.0)) << i;
  }
  y(p.budget(), 0) = 1e6;
  EXPECT_TRUE(prefilter(WeightedSample(y), p).rejected);
}

TEST(SampleFilterLowdim, CleanDataRarelyRejected) {
  const auto p = make_params(300, 5, 0.05, 0.05);
  int rejections = 0;
  for (int t = 0; t < 500; ++t)
    rejections += sample_filter_lowdim(WeightedSample(gaussian(300, 5, derive_seed(2, t))), p).rejected;
  EXPECT_LE(rejections, 25);
}

TEST(SampleFilterLowdim, CoordinatedOutliersRemoved) {
  const auto p = make_params(300, 5, 0.05, 0.05);
  MatrixXd y = gaussian(300, 5, 4);
  for (int i = 0; i < p.budget(); ++i) y.row(i) = 50.0 * Eigen::RowVectorXd::Unit(5, 0);
  FilterTrace trace;
  const auto r = sample_filter_lowdim(WeightedSample(y), p, &trace);
  ASSERT_FALSE(r.rejected);
  ASSERT_FALSE(trace.rows.empty());
  EXPECT_LT(trace.rows.back().lambda, p.gamma2);
  const MatrixXd m = y.transpose() * r.sample.weights.asDiagonal() * y - 300.0 * MatrixXd::Identity(5, 5);
  EXPECT_LT(symmetric_op_norm(m).value, p.gamma2);
  for (int i = 0; i < p.budget(); ++i) EXPECT_LT(r.sample.weights(i), 0.05) << i;
  // Weights never increase.
  EXPECT_LE(r.sample.weights.maxCoeff(), 1.0);
}

TEST(SampleFilterHighdim, CleanDataRarelyRejected) {
  const auto p = make_params(50, 200, 0.05, 0.05);
  int rejections = 0;
  for (int t = 0; t < 500; ++t)
    rejections += sample_filter_highdim(WeightedSample(gaussian(50, 200, derive_seed(3, t))), p).rejected;
  EXPECT_LE(rejections, 25);
}

TEST(SampleFilterHighdim, DuplicatedOutliersDownweighted) {
  const auto p = make_params(50, 200, 0.1, 0.05);
  MatrixXd y = gaussian(50, 200, 5);
  for (int i = 0; i < p.budget(); ++i) y.row(i) = 50.0 * std::sqrt(200.0) * Eigen::RowVectorXd::Unit(200, 0);
  const auto r = sample_filter_highdim(WeightedSample(y), p);
  ASSERT_FALSE(r.rejected);
  for (int i = 0; i < p.budget(); ++i) EXPECT_LT(r.sample.weights(i), 1e-6) << i;
}

TEST(WeightFilter, ZeroEpsilonLeavesWeights) {
  const auto p = make_params(40, 3, 0.0, 0.05);
  const WeightedSample s(gaussian(40, 3, 6));
  EXPECT_EQ(weight_filter(s, p).weights, s.weights);
}

TEST(WeightFilter, HandCraftedRanking) {
  MatrixXd y(3, 1);
  y << 10, 1, -1;
  WeightedSample s(y);
  // Scores |<Y_i, sum Y> - k|: 99, 9, 11.
  EXPECT_NEAR(weight_scores(s)(0), 99.0, 1e-12);
  const auto p = make_params(3, 1, 0.34, 0.05);
  ASSERT_EQ(p.budget(), 1);
  const auto out = weight_filter(s, p);
  EXPECT_EQ(out.weights(0), 0.0);
  EXPECT_EQ(out.weights(1), 1.0);
  EXPECT_EQ(out.weights(2), 1.0);
}

TEST(WeightFilter, RemovesTopScoresOnRandomData) {
  Philox rng(7);
  for (int t = 0; t < 20; ++t) {
    WeightedSample s(gaussian(30, 4, derive_seed(8, t)));
    for (int i = 0; i < 30; ++i) s.weights(i) = 0.5 + 0.5 * rng.uniform();
    s.k = 4;
    const auto p = make_params(30, 4, 0.1, 0.05);
    const VectorXd tau = weight_scores(s);
    const auto out = weight_filter(s, p);
    int zeroed = 0;
    double min_removed = 1e300, max_kept = 0.0;
    for (int i = 0; i < 30; ++i) {
      if (out.weights(i) == 0.0) {
        ++zeroed;
        min_removed = std::min(min_removed, tau(i));
      } else {
        EXPECT_EQ(out.weights(i), s.weights(i));
        max_kept = std::max(max_kept, tau(i));
      }
    }
    EXPECT_EQ(zeroed, p.budget());
    EXPECT_GE(min_removed, max_kept);
  }
}

TEST(Pipeline, CleanDataAuditsRegular) {
  const auto p = make_params(200, 5, 0.05, 0.05);
  int clean = 0, total = 0;
  for (int t = 0; t < 50; ++t) {
    const auto r = run_filters(WeightedSample(gaussian(200, 5, derive_seed(9, t))), p, 5);
    if (r.rejected) continue;
    ++total;
    clean += check_omega_regularity(r.sample, p, 200, derive_seed(10, t)).ok();
  }
  EXPECT_GE(total, 45);
  EXPECT_GE(clean, total * 95 / 100);
}

TEST(Pipeline, WeightFilterPostCondition) {
  const auto p = make_params(200, 5, 0.05, 0.05);
  for (int t = 0; t < 20; ++t) {
    const auto r = run_filters(WeightedSample(gaussian(200, 5, derive_seed(11, t))), p, 5);
    if (r.rejected) continue;
    const VectorXd tau = weight_scores(r.sample);
    Philox rng(derive_seed(12, t));
    for (int s = 0; s < 200; ++s) {
      const int size = 1 + static_cast<int>(rng.below(p.budget()));
      double lhs = 0.0;
      for (int i : sample_without_replacement(rng, 200, size)) lhs += tau(i);
      EXPECT_LE(lhs, weight_filter_bound(p, p.gamma2));
    }
  }
}

TEST(Regularity, EmptySubsetOnlyAtZeroBudget) {
  const auto p = make_params(10, 3, 0.0, 0.05);
  const auto r = check_omega_regularity(WeightedSample(gaussian(10, 3, 13)), p, 10, 1);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.subsets_checked, 1);
  for (double s : r.worst_slack) EXPECT_EQ(s, 0.0);
}

TEST(Regularity, ExhaustiveDominatesSampling) {
  const auto p = make_params(10, 3, 0.2, 0.05);
  for (int t = 0; t < 10; ++t) {
    const WeightedSample s(gaussian(10, 3, derive_seed(14, t)));
    const auto ex = check_omega_regularity(s, p, 50, 1);
    const auto sa = check_omega_regularity(s, p, 50, 1, true);
    ASSERT_TRUE(ex.exhaustive);
    ASSERT_FALSE(sa.exhaustive);
    for (int c = 0; c < 3; ++c) EXPECT_LE(ex.worst_slack[c], sa.worst_slack[c] + 1e-12);
    // Linear conditions are solved exactly by the sorted prefixes.
    EXPECT_NEAR(ex.worst_slack[0], sa.worst_slack[0], 1e-9);
    EXPECT_NEAR(ex.worst_slack[2], sa.worst_slack[2], 1e-9);
  }
}

TEST(Regularity, DetectsGrossViolation) {
  const auto p = make_params(100, 3, 0.05, 0.05);
  MatrixXd y = gaussian(100, 3, 15);
  for (int i = 0; i < 5; ++i) y.row(i) = 100.0 * Eigen::RowVectorXd::Unit(3, 0);
  const auto r = check_omega_regularity(WeightedSample(y), p, 100, 1);
  EXPECT_FALSE(r.ok());
}

TEST(Trace, CsvHeader) {
  FilterTrace t;
  t.rows.push_back({"prefilter", 0, 1.0, 2.0, 0.0, 10.0});
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "stage,iteration,lambda,threshold,mass_removed,weight_sum");
}
