#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rsd/rng.hpp"
#include "rsd/tail_check.hpp"

using namespace rsd;

TEST(HansonWright, IdentityMatchesChiSquareTail) {
  TailParams p;
  p.d = 20;
  const auto r = empirical_tail_check(TailLemma::HansonWright, p, 2000, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.exact_ok);
  EXPECT_GE(r.fitted_constant, 1.0 / 16.0);
  // Independent chi-square tail at t = 3 sqrt(2d): P(chi2_d - d >= t).
  const double t = 3.0 * std::sqrt(40.0);
  const double exact = 1.0 - oracle::chi2_cdf(20.0 + t, 20.0);
  EXPECT_NEAR(r.exact_tail, exact, 1e-9);
  const double se = std::sqrt(exact * (1 - exact) / 1000.0);
  EXPECT_NEAR(r.empirical_tail, exact, 4.0 * se + 1e-3);
  for (const auto& row : r.rows) EXPECT_LE(row.exceedance, row.allowed);
  // Exceedance at t = 3 sqrt(2d) lies below 2 exp(-c min(t^2/d, t)).
  EXPECT_LE(r.empirical_tail, 2.0 * std::exp(-r.fitted_constant * std::min(t * t / 20.0, t)));
}

TEST(HansonWright, ZeroMatrixHasNoDeviation) {
  TailParams p;
  p.d = 10;
  p.hw_matrix = HwMatrix::Zero;
  const auto r = empirical_tail_check(TailLemma::HansonWright, p, 200, 2);
  EXPECT_TRUE(r.pass);
  for (const auto& row : r.rows) EXPECT_EQ(row.exceedance, 0.0);
}

TEST(OpNormCov, FourTimesTraceSampleSize) {
  TailParams p;
  p.d = 20;
  p.k = 10;
  p.n = 40;
  const auto r = empirical_tail_check(TailLemma::OpNormCov, p, 2000, 3);
  EXPECT_TRUE(r.pass);
  ASSERT_EQ(r.rows.size(), 1u);
  const double shape = std::sqrt(40.0 * 10) + std::sqrt(40.0 * std::log(20.0)) + std::log(20.0);
  EXPECT_NEAR(r.rows[0].bound, r.fitted_constant * shape, 1e-9 * r.rows[0].bound);
  EXPECT_LE(r.rows[0].exceedance, r.rows[0].allowed);
  EXPECT_NEAR(r.level, 2.0 * p.delta, 1e-15);
}

TEST(OpNormGram, DefaultGrid) {
  TailParams p;
  p.d = 40;
  const auto r = empirical_tail_check(TailLemma::OpNormGram, p, 1000, 4);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.fitted_constant, r.reference_constant);
}

TEST(WeightedCov, DefaultGrid) {
  TailParams p;
  p.d = 20;
  const auto r = empirical_tail_check(TailLemma::WeightedCov, p, 1000, 5);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.level, p.delta, 1e-15);
}

// The weighted norm search is a lower bound on the exact maximum, which for
// integer m is attained at a 0/1 weight vector; brute force over subsets.
TEST(WeightedCov, SearchMatchesSubsetEnumeration) {
  Philox rng(6);
  for (int t = 0; t < 10; ++t) {
    MatrixXd x(8, 3);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    double best = 0.0;
    for (unsigned mask = 0; mask < 256; ++mask) {
      if (__builtin_popcount(mask) != 2) continue;
      MatrixXd m = MatrixXd::Zero(3, 3);
      for (int i = 0; i < 8; ++i)
        if (mask >> i & 1u) m += x.row(i).transpose() * x.row(i);
      best = std::max(best, Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().maxCoeff());
    }
    const double got = weighted_cov_norm(x, 2.0);
    EXPECT_LE(got, best + 1e-9);
    EXPECT_GE(got, 0.95 * best);
  }
}

TEST(TailCheck, SerialEqualsParallel) {
  TailParams p;
  p.d = 10;
  const auto a = empirical_tail_check(TailLemma::OpNormCov, p, 200, 7);
  p.parallel = false;
  const auto b = empirical_tail_check(TailLemma::OpNormCov, p, 200, 7);
  EXPECT_EQ(a.fitted_constant, b.fitted_constant);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].exceedance, b.rows[i].exceedance);
}

TEST(TailCheck, RejectsOutOfRangeParameters) {
  TailParams p;
  p.d = 201;
  EXPECT_THROW(empirical_tail_check(TailLemma::HansonWright, p, 100, 1), std::invalid_argument);
  p.d = 10;
  EXPECT_THROW(empirical_tail_check(TailLemma::HansonWright, p, 10001, 1), std::invalid_argument);
  p.delta = 0.7;
  EXPECT_THROW(empirical_tail_check(TailLemma::HansonWright, p, 100, 1), std::invalid_argument);
  EXPECT_THROW(tail_lemma_from_string("markov"), std::invalid_argument);
  for (auto l : {TailLemma::HansonWright, TailLemma::OpNormCov, TailLemma::OpNormGram, TailLemma::WeightedCov})
    EXPECT_EQ(tail_lemma_from_string(to_string(l)), l);
}
