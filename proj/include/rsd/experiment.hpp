#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsd/detect.hpp"
#include "rsd/sim.hpp"

namespace rsd {

/// How the signal means are specified.
///   zero    the null only
///   vector  explicit means (`values`, a list of d-vectors)
///   radial  points on a ray: `direction` (a d-vector or "top_axis") at
///           `norms`, or at sqrt(multiple * detection boundary) for each of
///           `boundary_multiples`; the null is prepended when `include_null`
struct MuSpec {
  std::string kind = "zero";
  std::vector<std::vector<double>> values;
  std::optional<std::vector<double>> direction;  // empty with kind radial means top_axis
  std::vector<double> norms;
  std::vector<double> boundary_multiples;
  bool include_null = true;
};

struct ExperimentConfig {
  ConstraintSet constraint;
  int n = 0;
  int d = 0;
  double sigma = 1.0;
  double epsilon = 0.0;
  double alpha = 0.05;
  AdversarySpec adversary;  // epsilon defaults to the config epsilon
  MuSpec mu;
  int trials = 100;
  std::uint64_t seed = 0;
  SolverOptions solver;
  double c2 = 0.19;  // calibrated on clean null draws at N = 200, d = 20
  double c_theory = 2.0;  // calibrated on clean null draws at N = 10, d = 6
  FilterConstants filters;
  TestKind test = TestKind::Robust;
  bool record_timings = false;
  std::string output = "out";

  DetectConfig detect_config() const;
};

/// Parses and range-checks a config; unknown keys and bad values raise
/// std::invalid_argument naming the key. A run manifest is accepted too.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical form: every semantic field with defaults filled in. `output`
/// is excluded.
nlohmann::json canonical_json(const ExperimentConfig& c);
/// FNV-1a 64 of the compact canonical form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// Mean vectors for the config; needs the profile for boundary multiples.
std::vector<VectorXd> mu_list(const ExperimentConfig& c, const WidthProfile& profile);

struct ExperimentResult {
  WidthProfile profile;
  ErrorRateTable table;
  std::vector<VectorXd> mus;
  std::string hash;
};

/// Widths, trials and rates; when `out` is set, writes widths.csv,
/// outcomes.csv, rates.csv and manifest.json there. A precomputed profile
/// skips the width solve.
ExperimentResult run_experiment(const ExperimentConfig& c, const std::optional<std::filesystem::path>& out,
                                std::shared_ptr<const WidthProfile> profile = nullptr);

enum class SweepAxis { Rho, Epsilon, N };
SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis a);

struct SweepRow {
  double value = 0.0;
  RateRow rate;
};

/// One estimate_error_rates run per value, all from the config's master
/// seed. Rho values are boundary multiples of ||mu||^2 along the config
/// direction. Values must be sorted ascending.
std::vector<SweepRow> sweep(const ExperimentConfig& c, SweepAxis axis, const std::vector<double>& values,
                            std::shared_ptr<const WidthProfile> profile = nullptr);

void write_widths_csv(std::ostream& os, const WidthProfile& p);
void write_outcomes_csv(std::ostream& os, const ErrorRateTable& t, bool timings);
void write_rates_csv(std::ostream& os, const ErrorRateTable& t, bool timings);
void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRow>& rows, bool timings);

/// Formats a double with 17 significant digits.
std::string fmt(double x);

struct RegularityAudit {
  int trials = 0;
  int clean_trials = 0;   // zero violations
  int filtered_out = 0;   // rejected by the filters; nothing left to audit
  std::array<int, 3> violating_trials{};
};

/// Runs the filters on contaminated null data and audits omega-regularity of
/// the output weights with `subset_trials` sampled subsets.
RegularityAudit regularity_audit(const DetectConfig& cfg, const WidthProfile& profile, const AdversarySpec& adv,
                                 int trials, int subset_trials, std::uint64_t seed);

/// Smallest c_regularity under which a `coverage` fraction of clean-null
/// trials (filters applied, no adversary) audits as regular. Each trial's
/// own minimal constant is max over conditions of |lhs| / unit bound.
double calibrate_regularity_constant(const DetectConfig& cfg, const WidthProfile& profile, int trials,
                                     int subset_trials, std::uint64_t seed, double coverage = 0.975);

}  // namespace rsd
