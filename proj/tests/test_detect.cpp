#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rsd/detect.hpp"
#include "rsd/sim.hpp"

using namespace rsd;

namespace {

VectorXd axes_power(int d, double scale, double exponent) {
  VectorXd a(d);
  for (int j = 0; j < d; ++j) a(j) = scale * std::pow(j + 1.0, exponent);
  return a;
}

DetectConfig make_cfg(const ConstraintSet& k, int n, double eps, std::shared_ptr<const WidthProfile> prof) {
  DetectConfig c;
  c.n = n;
  c.d = k.dim;
  c.epsilon = eps;
  c.constraint = k;
  c.profile = std::move(prof);
  return c;
}

double tolerance(double alpha, int trials) { return alpha + oracle::monte_carlo_margin(alpha, trials); }

}  // namespace

TEST(RawRates, PExample) {
  const double l = std::log(2000.0);
  const double expect = std::max({0.1 * l / 10.0, 0.01 * l, std::sqrt(0.01 * 4 * l / 100), 2.0 * std::log(20.0) / 100});
  EXPECT_NEAR(expect, 0.0760, 5e-5);
  EXPECT_NEAR(p_raw(0.1, 100, 4, 0.05, 1.0), expect, 1e-15);
  EXPECT_NEAR(p_raw(0.0, 100, 4, 0.05, 1.0), 2.0 * std::log(20.0) / 100, 1e-15);
  EXPECT_NEAR(p_raw(0.1, 100, 4, 0.05, 2.0), 4.0 * expect, 1e-14);
}

TEST(RawRates, EExample) {
  const double l = std::log(10.0);
  const double expect = std::max({0.02, 0.01 * l, std::sqrt(0.01 * l * 4 / 100)});
  EXPECT_NEAR(expect, 0.0303, 5e-5);
  EXPECT_NEAR(e_raw(0.1, 100, 4, 1.0), expect, 1e-15);
  EXPECT_NEAR(e_raw(0.0, 100, 4, 1.0), 0.02, 1e-15);
  EXPECT_NEAR(e_raw(0.1, 100, 4, 3.0), 9.0 * expect, 1e-14);
}

TEST(ChiSquare, ZeroObservationAccepts) {
  EXPECT_EQ(chi_square_test(VectorXd::Zero(5), 5, 1.0, -4.9), Decision::Accept);
}

TEST(ChiSquare, ThresholdMatchesQuantileOracle) {
  for (double k : {1.0, 4.0, 10.0, 50.0})
    for (double a : {0.01, 0.05, 0.2})
      EXPECT_NEAR(chi_square_threshold(k, 2.0, a), 4.0 * (oracle::chi2_quantile(1.0 - a, k) - k), 1e-6 * k);
}

TEST(ChiSquare, LevelAndPower) {
  const int k = 10, trials = 2000;
  const double t = chi_square_threshold(k, 1.0, 0.05);
  VectorXd mu = VectorXd::Zero(k);
  mu(0) = 3.0 * std::pow(k, 0.25);
  int type1 = 0, power = 0;
  Philox rng(77);
  for (int i = 0; i < trials; ++i) {
    VectorXd y(k);
    for (int j = 0; j < k; ++j) y(j) = rng.normal();
    type1 += chi_square_test(y, k, 1.0, t) == Decision::Reject;
    power += chi_square_test(y + mu, k, 1.0, t) == Decision::Reject;
  }
  EXPECT_NEAR(type1 / double(trials), 0.05, 0.02);
  EXPECT_GE(power / double(trials), 0.9);
}

TEST(Projection, MinimumBranchWithTiesToFirst) {
  WidthProfile p;
  p.dim = 4;
  p.widths = {1.0, std::sqrt(0.75), std::sqrt(0.5), 0.5, 0.0};
  p.values = {1.0, 0.75, 0.5, 0.25, 0.0};
  for (int k = 0; k <= 4; ++k) {
    MatrixXd x = MatrixXd::Zero(4, 4);
    for (int i = 0; i < 4 - k; ++i) x(i, i) = 1.0;
    p.minimizers.push_back(x);
  }
  const auto a = choose_projection(p, 100, 1.0, 0.0);
  EXPECT_EQ(a.k2, 4);
  EXPECT_EQ(a.k, std::min(a.k1, a.k2));
  EXPECT_EQ(a.branch, a.k1 <= a.k2 ? Branch::First : Branch::Second);
  EXPECT_EQ(a.k1, 4);
  EXPECT_EQ(a.branch, Branch::First);
  EXPECT_NEAR(detection_boundary(p, 100, 1.0, 0.0, 0.05), p_raw(0.0, 100, 4, 0.05, 1.0), 1e-15);
}

TEST(Config, ValidationNamesTheField) {
  auto c = make_cfg(ConstraintSet::ball(3), 10, 0.1, nullptr);
  EXPECT_NO_THROW(c.validate());
  auto expect_msg = [](DetectConfig c, const std::string& key) {
    try {
      c.validate();
      ADD_FAILURE() << "no error for " << key;
    } catch (const std::invalid_argument& e) {
      EXPECT_EQ(std::string(e.what()).rfind(key, 0), 0u) << e.what();
    }
  };
  auto bad = c;
  bad.epsilon = 0.6;
  expect_msg(bad, "epsilon");
  bad = c;
  bad.n = 0;
  expect_msg(bad, "N");
  bad = c;
  bad.sigma = -1;
  expect_msg(bad, "sigma");
  bad = c;
  bad.d = 4;
  expect_msg(bad, "constraint");
}

// With eps = 0 and the full dimension chosen, the projection is the identity
// and no filter has a budget, so the robust test is a chi-square test on the
// scaled mean at the matched threshold c2 N sqrt(P_raw^2).
TEST(RobustTest, ReducesToChiSquareAtZeroContamination) {
  const auto k = ConstraintSet::ball(4);
  auto prof = std::make_shared<const WidthProfile>(width_profile(k));
  auto cfg = make_cfg(k, 100, 0.0, prof);
  const auto pr = choose_projection(*prof, 100, 1.0, 0.0);
  ASSERT_EQ(pr.k, 4);
  const double t = cfg.c2 * 100 * std::sqrt(p_raw(0.0, 100, 4, cfg.alpha, 1.0));
  int agree = 0;
  for (int i = 0; i < 100; ++i) {
    VectorXd mu = VectorXd::Zero(4);
    mu(0) = 0.05 * (i % 10);
    const MatrixXd y = generate_clean(100, 4, mu, 1.0, derive_seed(31, i));
    const VectorXd scaled = y.colwise().mean().transpose() * std::sqrt(100.0);
    agree += robust_test(y, cfg, *prof).decision == chi_square_test(scaled, 4, 1.0, t);
  }
  EXPECT_GE(agree, 95);
}

TEST(RobustTest, ZeroDimensionAccepts) {
  const auto k = ConstraintSet::ball(2, 1e-6);
  auto prof = std::make_shared<const WidthProfile>(width_profile(k));
  auto cfg = make_cfg(k, 50, 0.05, prof);
  const auto out = robust_test(generate_clean(50, 2, VectorXd::Zero(2), 1.0, 3), cfg, *prof);
  EXPECT_EQ(out.chosen_k, 0);
  EXPECT_EQ(out.decision, Decision::Accept);
}

TEST(RobustTest, RejectsBadShape) {
  const auto k = ConstraintSet::ball(3);
  auto prof = std::make_shared<const WidthProfile>(width_profile(k));
  auto cfg = make_cfg(k, 10, 0.1, prof);
  EXPECT_THROW(robust_test(MatrixXd::Zero(9, 3), cfg, *prof), std::invalid_argument);
  MatrixXd y = MatrixXd::Zero(10, 3);
  y(0, 0) = std::nan("");
  EXPECT_THROW(robust_test(y, cfg, *prof), std::invalid_argument);
}

class Twenty : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    profile_ = std::make_shared<const WidthProfile>(width_profile(ConstraintSet::ellipsoid(axes_power(20, 1.0, -1.0))));
  }
  static std::shared_ptr<const WidthProfile> profile_;
};
std::shared_ptr<const WidthProfile> Twenty::profile_;

TEST_F(Twenty, CleanNullTypeOne) {
  auto cfg = make_cfg(ConstraintSet::ellipsoid(axes_power(20, 1.0, -1.0)), 200, 0.05, profile_);
  const auto t = estimate_error_rates(cfg, *profile_, AdversarySpec{}, {VectorXd::Zero(20)}, 500, 41);
  EXPECT_EQ(t.rows[0].failures, 0);
  EXPECT_LE(t.rows[0].rate, tolerance(cfg.alpha, 500));
}

TEST_F(Twenty, PowerAtTenTimesTheBoundary) {
  const auto k = ConstraintSet::ellipsoid(axes_power(20, 1.0, -1.0));
  auto cfg = make_cfg(k, 200, 0.05, profile_);
  VectorXd mu = VectorXd::Zero(20);
  mu(0) = std::sqrt(10.0 * detection_boundary(*profile_, 200, 1.0, 0.05, cfg.alpha));
  ASSERT_TRUE(contains(k, mu));
  AdversarySpec adv;
  adv.strategy = AdversaryStrategy::MeanShift;
  adv.epsilon = 0.05;
  adv.scale = 3.0;
  const auto t = estimate_error_rates(cfg, *profile_, adv, {mu}, 500, 42);
  EXPECT_LE(t.rows[0].rate, tolerance(cfg.alpha, 500));
}

class Small : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    profile_ = std::make_shared<const WidthProfile>(width_profile(set()));
  }
  static ConstraintSet set() { return ConstraintSet::ellipsoid(axes_power(6, 3.0, -0.5)); }
  static std::shared_ptr<const WidthProfile> profile_;
};
std::shared_ptr<const WidthProfile> Small::profile_;

TEST_F(Small, TheoreticalZeroEpsilonUsesFullSample) {
  auto cfg = make_cfg(set(), 10, 0.0, profile_);
  const MatrixXd y = generate_clean(10, 6, VectorXd::Zero(6), 1.0, 5);
  const auto out = theoretical_test(y, cfg, *profile_);
  EXPECT_EQ(out.consistent_subset_size, 10);
  const auto pr = choose_projection(*profile_, 10, 1.0, 0.0);
  const VectorXd s = (y * pr.a.matrix).colwise().sum().transpose();
  EXPECT_NEAR(out.statistic, s.squaredNorm() - pr.k * 10.0, 1e-9);
  EXPECT_EQ(out.decision, out.statistic >= cfg.c_theory * 100 * e_raw(0.0, 10, pr.k, 1.0) ? Decision::Reject
                                                                                            : Decision::Accept);
}

TEST_F(Small, TheoreticalCleanNullAccepts) {
  auto cfg = make_cfg(set(), 10, 0.1, profile_);
  const auto t = estimate_error_rates(cfg, *profile_, AdversarySpec{}, {VectorXd::Zero(6)}, 500, 43,
                                      RunOptions{true, TestKind::Theoretical});
  EXPECT_LE(t.rows[0].rate, 0.10);
}

// One corrupted row: the decision matches phi_e on the clean rows alone.
TEST_F(Small, TheoreticalConsistencyChain) {
  auto cfg = make_cfg(set(), 10, 0.1, profile_);
  const auto pr = choose_projection(*profile_, 10, 1.0, 0.1);
  VectorXd mu = VectorXd::Zero(6);
  mu(0) = 2.9;
  for (int t = 0; t < 20; ++t) {
    MatrixXd y = generate_clean(10, 6, mu, 1.0, derive_seed(51, t));
    const MatrixXd clean_rows = y.bottomRows(9);
    y.row(0) = -y.row(0) * 5.0;
    const VectorXd s = (clean_rows * pr.a.matrix).colwise().sum().transpose();
    const bool phi_clean = s.squaredNorm() - pr.k * 9.0 >= cfg.c_theory * 81.0 * e_raw(0.1, 10, pr.k, 1.0);
    const auto out = theoretical_test(y, cfg, *profile_);
    EXPECT_EQ(out.decision == Decision::Reject, phi_clean) << t;
  }
}

TEST_F(Small, TheoreticalRejectsLargeN) {
  auto cfg = make_cfg(set(), 15, 0.1, profile_);
  EXPECT_THROW(theoretical_test(MatrixXd::Zero(15, 6), cfg, *profile_), std::invalid_argument);
}

TEST_F(Small, CalibrationHoldsOnFreshSeeds) {
  auto cfg = make_cfg(set(), 100, 0.05, profile_);
  const auto r = calibrate_constant(cfg, *profile_, CalibTarget::C2, 1000, 61);
  EXPECT_EQ(r.target, cfg.alpha / 2.0);
  EXPECT_LE(r.rate, r.target);
  const double fresh = stage_rejection_rate(cfg, *profile_, CalibTarget::C2, r.constant, 2000, 62);
  EXPECT_GE(fresh, r.target / 2.0);
  EXPECT_LE(fresh, r.target * 2.0);
  EXPECT_EQ(stage_rejection_rate(cfg, *profile_, CalibTarget::C2, 1e6, 200, 63), 0.0);
  EXPECT_GE(stage_rejection_rate(cfg, *profile_, CalibTarget::C2, 1e-6, 200, 63), 0.95);
}

// The dataset overload on the same clean draws reproduces the seeded run;
// an inflated first row in every dataset does not lower the constant.
TEST_F(Small, CalibrationOnSuppliedData) {
  auto cfg = make_cfg(set(), 10, 0.1, profile_);
  std::vector<MatrixXd> ys;
  for (int t = 0; t < 300; ++t) ys.push_back(generate_clean(10, 6, VectorXd::Zero(6), 1.0, derive_seed(64, 0, t)));
  const auto seeded = calibrate_constant(cfg, *profile_, CalibTarget::CTheory, 300, 64);
  const auto supplied = calibrate_constant(cfg, *profile_, CalibTarget::CTheory, ys);
  EXPECT_EQ(seeded.constant, supplied.constant);
  EXPECT_EQ(seeded.rate, supplied.rate);
  for (auto& y : ys) y.row(0) *= 8.0;
  EXPECT_GE(calibrate_constant(cfg, *profile_, CalibTarget::CTheory, ys).constant, seeded.constant);
  ys.resize(99);
  EXPECT_THROW(calibrate_constant(cfg, *profile_, CalibTarget::CTheory, ys), std::invalid_argument);
  EXPECT_THROW(calibrate_constant(cfg, *profile_, CalibTarget::CTheory, std::vector<MatrixXd>(100, MatrixXd::Zero(10, 5))),
               std::invalid_argument);
}

TEST(Calibration, TargetStringsRoundTrip) {
  for (auto t : {CalibTarget::C2, CalibTarget::CPre, CalibTarget::CLow, CalibTarget::CHigh, CalibTarget::CTheory})
    EXPECT_EQ(calib_target_from_string(to_string(t)), t);
  EXPECT_THROW(calib_target_from_string("c9"), std::invalid_argument);
}
