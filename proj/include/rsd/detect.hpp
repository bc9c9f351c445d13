#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsd/filtering.hpp"
#include "rsd/geometry.hpp"
#include "rsd/widths.hpp"

namespace rsd {

struct DetectConfig {
  int n = 0;
  int d = 0;
  double sigma = 1.0;
  double epsilon = 0.0;
  double alpha = 0.05;
  ConstraintSet constraint;
  std::shared_ptr<const WidthProfile> profile;  // computed on demand when empty
  double c2 = 0.19;  // calibrated on clean null draws at N = 200, d = 20
  double c_theory = 2.0;  // calibrated on clean null draws at N = 10, d = 6
  FilterConstants filters;
  SolverOptions solver;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Returns the cached profile, computing it first if needed.
  const WidthProfile& ensure_profile();
};

enum class Decision { Accept, Reject };
enum class Stage { Prefilter, SampleFilter, FinalStatistic, NoConsistentSubset, SubsetStatistic };
enum class Branch { First, Second };

std::string to_string(Decision d);
std::string to_string(Stage s);
std::string to_string(Branch b);

struct TestOutcome {
  Decision decision = Decision::Accept;
  Stage stage = Stage::FinalStatistic;
  double statistic = 0.0;
  double threshold = 0.0;
  int chosen_k = 0;
  Branch chosen_branch = Branch::First;
  int k1 = 0, k2 = 0;
  double weight_sum = 0.0;
  int consistent_subset_size = 0;  // theoretical test only
  FilterTrace trace;
};

nlohmann::json to_json(const TestOutcome& o);

/// P_raw^2: sigma^2 max{eps ln(N/a)/sqrt(N), eps^2 ln(N/a), sqrt(eps^2 k ln(N/a)/N), sqrt(k) ln(1/a)/N}.
double p_raw(double epsilon, int n, double k, double alpha, double sigma);
/// E_raw^2: sigma^2 max{sqrt(k)/N, eps^2 ln(1/eps), sqrt(eps^2 ln(1/eps) k/N)}; log terms vanish at eps = 0.
double e_raw(double epsilon, int n, double k, double sigma);

/// Detectable ||mu||^2 for the robust test: p_raw at min{k~1*, k~2*}.
double detection_boundary(const WidthProfile& profile, int n, double sigma, double epsilon, double alpha);

/// Reject iff ||y||^2 - k sigma^2 >= t.
Decision chi_square_test(const VectorXd& y, double k, double sigma, double t);
/// sigma^2 (q_{1-alpha}(chi^2_k) - k): the level-alpha threshold for y ~ N(0, sigma^2 I_k).
double chi_square_threshold(double k, double sigma, double alpha);

/// Chosen dimension, branch and projection for a profile.
struct Projection {
  int k1 = 0, k2 = 0, k = 0;
  Branch branch = Branch::First;
  ApproxProjection a;
};
Projection choose_projection(const WidthProfile& profile, int n, double sigma, double epsilon);

/// Filtering-based robust test on N x d observations.
TestOutcome robust_test(const MatrixXd& y, DetectConfig& cfg);
TestOutcome robust_test(const MatrixXd& y, const DetectConfig& cfg, const WidthProfile& profile);

/// Exhaustive consistent-subset test; N <= 14.
TestOutcome theoretical_test(const MatrixXd& y, const DetectConfig& cfg, const WidthProfile& profile);

enum class CalibTarget { C2, CPre, CLow, CHigh, CTheory };
std::string to_string(CalibTarget t);
CalibTarget calib_target_from_string(const std::string& s);

/// Share of alpha allotted to the stage governed by each constant.
double alpha_share(CalibTarget t, double alpha);

struct CalibrationResult {
  double constant = 0.0;
  double rate = 0.0;    // stage rejection rate at `constant` on the calibration draws
  double target = 0.0;  // alpha share
  int evaluations = 0;
};

/// Smallest constant (bisection on log c over [1e-3, 1e3]) whose clean-H0
/// rejection rate at the governed stage is at most the alpha share. Trials
/// reuse the same draws at every candidate. Throws std::runtime_error if
/// the rate is not monotone in the constant.
CalibrationResult calibrate_constant(const DetectConfig& cfg, const WidthProfile& profile, CalibTarget target,
                                     int trials, std::uint64_t seed);

/// Same bisection on caller-supplied null datasets, for instance contaminated
/// ones. Requires at least 100 datasets of shape N x d.
CalibrationResult calibrate_constant(const DetectConfig& cfg, const WidthProfile& profile, CalibTarget target,
                                     const std::vector<MatrixXd>& null_data);

/// Clean-H0 rejection rate of the governed stage at a given constant.
double stage_rejection_rate(const DetectConfig& cfg, const WidthProfile& profile, CalibTarget target,
                            double constant, int trials, std::uint64_t seed);

}  // namespace rsd
