#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsd/detect.hpp"
#include "rsd/rng.hpp"

namespace rsd {

/// N x d matrix with i.i.d. N(mu, sigma^2 I) rows, filled row by row from
/// Philox(seed).
MatrixXd generate_clean(int n, int d, const VectorXd& mu, double sigma, std::uint64_t seed);

enum class AdversaryStrategy { None, LargeNorm, MeanShift, CollinearCluster, AntiFilter, Replay };

std::string to_string(AdversaryStrategy s);
AdversaryStrategy strategy_from_string(const std::string& s);

/// The shipped zoo of contamination strategies; each replaces exactly
/// floor(eps N) rows.
///   LargeNorm        scale * sqrt(d) * u for a random unit u per row
///   MeanShift        clean row + scale * direction
///   CollinearCluster scale * direction, identical rows
///   AntiFilter       projected rows of squared norm k + 0.9 gamma1 along the
///                    clean projected sum (towards rejection under mu = 0,
///                    away from it otherwise)
///   Replay           the fixed `rows` cyclically, or copies of the clean row
///                    of largest norm
struct AdversarySpec {
  AdversaryStrategy strategy = AdversaryStrategy::None;
  double epsilon = 0.0;
  double scale = 1.0;
  std::optional<VectorXd> direction;  // default: -mu/|mu| if mu != 0, else e_1
  MatrixXd rows;                      // Replay only

  int budget(int n) const;
};

nlohmann::json to_json(const AdversarySpec& a);
AdversarySpec adversary_from_json(const nlohmann::json& j, int d);

/// What a strong adversary may inspect besides the clean sample.
struct AdversaryInfo {
  VectorXd mu;
  double sigma = 1.0;
  const DetectConfig* cfg = nullptr;
  const WidthProfile* profile = nullptr;
};

struct Contamination {
  MatrixXd data;
  std::vector<int> corrupted;  // ascending
};

Contamination contaminate(const MatrixXd& clean, const AdversarySpec& adv, const AdversaryInfo& info,
                          std::uint64_t seed);

enum class TestKind { Robust, Theoretical };

struct TrialRecord {
  std::uint64_t seed = 0;
  int mu_index = 0;
  double mu_norm = 0.0;
  AdversaryStrategy adversary = AdversaryStrategy::None;
  TestOutcome outcome;
  double runtime = 0.0;  // seconds
  bool failed = false;
  std::string error;
};

struct RateRow {
  int mu_index = 0;
  double mu_norm = 0.0;
  bool null = true;  // rate is Type I when true, Type II otherwise
  AdversaryStrategy adversary = AdversaryStrategy::None;
  long trials = 0;
  long errors = 0;
  double rate = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  long failures = 0;
  double mean_runtime = 0.0;
};

struct ErrorRateTable {
  std::vector<RateRow> rows;
  std::vector<TrialRecord> records;  // mu-major, then trial order
};

struct RunOptions {
  bool parallel = true;
  TestKind test = TestKind::Robust;
};

/// Wilson score interval at normal quantile z.
std::pair<double, double> wilson_interval(long successes, long n, double z = 1.959963984540054);

/// Per (mu, trial) seeds are derive_seed(seed, mu_index, trial); results do
/// not depend on the thread count.
ErrorRateTable estimate_error_rates(const DetectConfig& cfg, const WidthProfile& profile, const AdversarySpec& adv,
                                    const std::vector<VectorXd>& mu_list, int trials, std::uint64_t seed,
                                    const RunOptions& opt = {});

}  // namespace rsd
