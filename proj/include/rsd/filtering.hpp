#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsd/linalg.hpp"

namespace rsd {

/// Filter malfunction (iteration cap, degenerate scores); distinct from a
/// statistical rejection.
struct FilterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Projected, sigma-normalised observations with per-row weights. Filters
/// only ever lower weights; rows are never modified.
struct WeightedSample {
  MatrixXd data;     // N x p, row i is the projected observation
  VectorXd weights;  // in [0, 1]
  MatrixXd cov;      // population covariance of a clean row (p x p)
  double k = 0.0;    // tr(cov), the effective dimension

  WeightedSample() = default;
  /// Unit weights; cov defaults to the identity and k to p.
  explicit WeightedSample(MatrixXd rows);
  WeightedSample(MatrixXd rows, MatrixXd covariance);

  int n() const { return static_cast<int>(data.rows()); }
  int active_count() const;
};

struct FilterConstants {
  double c_pre = 2.0;
  double c_low = 2.0;
  double c_high = 2.0;
  double c_weight = 2.0;
  double c_regularity = 2.0;
};

struct RegularityParams {
  int n = 0;
  double k = 0.0;
  double epsilon = 0.0;
  double alpha = 0.05;
  double mu_norm = 0.0;  // ||A mu||, enters beta1 and beta2
  double beta1 = 0.0, beta2 = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0, gamma3 = 0.0;
  FilterConstants c;

  /// floor(eps N), the number of rows the adversary may replace.
  int budget() const;
};

/// Thresholds for N rows of effective dimension k. Terms carrying
/// eps ln(1/eps) vanish at eps = 0.
RegularityParams make_params(int n, double k, double epsilon, double alpha,
                             const FilterConstants& c = {}, double mu_norm = 0.0);

struct TraceRow {
  std::string stage;
  int iteration = 0;
  double lambda = 0.0;
  double threshold = 0.0;
  double mass_removed = 0.0;
  double weight_sum = 0.0;
};

struct FilterTrace {
  std::vector<TraceRow> rows;
  void write_csv(std::ostream& os) const;
};

enum class FilterStage { Prefilter, SampleFilter, WeightFilter };

struct FilterResult {
  bool rejected = false;
  WeightedSample sample;
  int iterations = 0;
};

/// Zeroes rows with | ||Y_i||^2 - k | > gamma1; rejects if more than
/// floor(eps N) rows violate.
FilterResult prefilter(const WeightedSample& s, const RegularityParams& p, FilterTrace* trace = nullptr);

/// Spectral filtering for N > k on lambda = || Y' D(w) Y - N Sigma ||.
FilterResult sample_filter_lowdim(const WeightedSample& s, const RegularityParams& p,
                                  FilterTrace* trace = nullptr);

/// Spectral filtering for N <= k on lambda = || D^{1/2} Y Y' D^{1/2} - k D ||.
FilterResult sample_filter_highdim(const WeightedSample& s, const RegularityParams& p,
                                   FilterTrace* trace = nullptr);

/// Zeroes the floor(eps N) active rows with the largest
/// | <sqrt(w_i) Y_i, sum_j sqrt(w_j) Y_j> - k w_i |. Never rejects.
WeightedSample weight_filter(const WeightedSample& s, const RegularityParams& p, FilterTrace* trace = nullptr);

struct PipelineResult {
  bool rejected = false;
  FilterStage stage = FilterStage::WeightFilter;  // deciding stage when rejected
  WeightedSample sample;
  FilterTrace trace;
};

/// prefilter, then the low- or high-dimensional sample filter (N > k picks
/// low), then weight_filter.
PipelineResult run_filters(const WeightedSample& s, const RegularityParams& p, int k_int);

/// Bound of the weight-filter post-condition: c_weight (sqrt(N) b1 + b2 + eps N gamma).
double weight_filter_bound(const RegularityParams& p, double gamma);

struct RegularityReport {
  std::array<double, 3> worst_slack{};  // bound - |lhs|, minimum over subsets
  std::array<int, 3> violations{};      // subsets with negative slack
  long subsets_checked = 0;
  bool exhaustive = false;
  bool ok() const { return violations[0] == 0 && violations[1] == 0 && violations[2] == 0; }
};

/// Audits conditions (i)-(iii) of (eps, beta1, beta2)-regularity with
/// constant c_regularity. Subsets have size <= floor(eps N). Condition (i)
/// counts only rows with positive weight. Exhaustive when N <= 15 unless
/// `force_sampling`; otherwise random subsets plus greedy worst-case
/// candidates (exact for (i) and (iii)).
RegularityReport check_omega_regularity(const WeightedSample& s, const RegularityParams& p, int subset_trials,
                                        std::uint64_t seed, bool force_sampling = false);

}  // namespace rsd
