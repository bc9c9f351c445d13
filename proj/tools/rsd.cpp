// Command-line front end for width profiles, detection experiments, sweeps,
// calibration and audits.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsd/ellipsoid.hpp"
#include "rsd/experiment.hpp"
#include "rsd/tail_check.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kBadConfig = 2, kSolverFailure = 3 };

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("RSD_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) omp_set_num_threads(threads);
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
};

rsd::ExperimentConfig load(const Common& c) {
  rsd::ExperimentConfig cfg = rsd::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.trials) {
    if (*c.trials < 1) throw std::invalid_argument("--trials: must be positive");
    cfg.trials = *c.trials;
  }
  return cfg;
}

fs::path out_dir(const Common& c, const rsd::ExperimentConfig& cfg) { return c.out.empty() ? fs::path(cfg.output) : fs::path(c.out); }

void add_common(CLI::App* sub, Common& c, bool trials) {
  sub->add_option("--config", c.config, "Experiment config (JSON) or run manifest")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "Output directory (default: the config's output)");
  sub->add_option("--seed", c.seed, "Override the master seed");
  if (trials) sub->add_option("--trials", c.trials, "Override the trial count");
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> v;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find(',', pos);
    const std::string tok = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw std::invalid_argument("--values: cannot parse '" + tok + "'");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust constrained signal detection"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (default: RSD_THREADS or the runtime default)");

  Common widths_opts, detect_opts, sweep_opts, calib_opts, reg_opts;
  auto* widths = app.add_subcommand("widths", "Compute the approximate width profile");
  add_common(widths, widths_opts, false);

  auto* detect = app.add_subcommand("detect", "Run an error-rate experiment and write its artifacts");
  add_common(detect, detect_opts, true);

  auto* sw = app.add_subcommand("sweep", "Error rates along rho, epsilon or N");
  add_common(sw, sweep_opts, true);
  std::string axis, values;
  sw->add_option("--axis", axis, "rho | epsilon | N")->required();
  sw->add_option("--values", values, "Comma-separated ascending values")->required();

  auto* calib = app.add_subcommand("calibrate", "Calibrate a constant on clean null draws");
  add_common(calib, calib_opts, true);
  std::string constant = "c2";
  calib->add_option("--constant", constant, "c2 | c_pre | c_low | c_high | c_theory");

  auto* reg = app.add_subcommand("check-regularity", "Audit omega-regularity after filtering contaminated data");
  add_common(reg, reg_opts, true);
  int subsets = 500;
  reg->add_option("--subsets", subsets, "Sampled subsets per trial");

  auto* tail = app.add_subcommand("tail-check", "Empirical audit of a concentration inequality");
  std::string lemma = "hanson_wright", hw_matrix = "identity", tail_out;
  rsd::TailParams tp;
  int tail_trials = 2000;
  std::uint64_t tail_seed = 1;
  tail->add_option("--lemma", lemma, "hanson_wright | opnorm_cov | opnorm_gram | weighted_cov");
  tail->add_option("--d", tp.d, "Dimension");
  tail->add_option("--k", tp.k, "Trace of the covariance (0: d/2)");
  tail->add_option("--n", tp.n, "Sample size (0: default grid)");
  tail->add_option("--delta", tp.delta, "Failure probability");
  tail->add_option("--epsilon", tp.epsilon, "Weight budget fraction");
  tail->add_option("--matrix", hw_matrix, "identity | zero | projection");
  tail->add_option("--trials", tail_trials, "Trials");
  tail->add_option("--seed", tail_seed, "Master seed");
  tail->add_option("--out", tail_out, "Write the JSON report here");

  CLI11_PARSE(app, argc, argv);
  apply_threads(threads);

  try {
    if (*widths) {
      const auto cfg = load(widths_opts);
      const auto prof = rsd::width_profile(cfg.constraint, cfg.solver);
      const fs::path dir = out_dir(widths_opts, cfg);
      fs::create_directories(dir);
      std::ofstream(dir / "widths.csv", std::ios::binary) << [&] {
        std::ostringstream os;
        rsd::write_widths_csv(os, prof);
        return os.str();
      }();
      std::ofstream(dir / "profile.json", std::ios::binary) << rsd::to_json(prof).dump() << '\n';
      rsd::write_widths_csv(std::cout, prof);
    } else if (*detect) {
      const auto cfg = load(detect_opts);
      const fs::path dir = out_dir(detect_opts, cfg);
      const auto res = rsd::run_experiment(cfg, dir);
      rsd::write_rates_csv(std::cout, res.table, cfg.record_timings);
      for (const auto& r : res.table.rows)
        if (r.failures > 0) {
          std::cerr << "error: " << r.failures << " trials failed at mu index " << r.mu_index << '\n';
          return kSolverFailure;
        }
    } else if (*sw) {
      const auto cfg = load(sweep_opts);
      const auto ax = rsd::sweep_axis_from_string(axis);
      const auto rows = rsd::sweep(cfg, ax, parse_values(values));
      const fs::path dir = out_dir(sweep_opts, cfg);
      fs::create_directories(dir);
      std::ofstream os(dir / "sweep.csv", std::ios::binary);
      rsd::write_sweep_csv(os, ax, rows, cfg.record_timings);
      rsd::write_sweep_csv(std::cout, ax, rows, cfg.record_timings);
    } else if (*calib) {
      const auto cfg = load(calib_opts);
      rsd::DetectConfig dc = cfg.detect_config();
      const auto& prof = dc.ensure_profile();
      const auto target = rsd::calib_target_from_string(constant);
      const auto r = rsd::calibrate_constant(dc, prof, target, cfg.trials, cfg.seed);
      std::cout << json{{"constant", constant}, {"value", r.constant}, {"rate", r.rate}, {"target", r.target},
                        {"evaluations", r.evaluations}}
                       .dump(2)
                << '\n';
    } else if (*reg) {
      const auto cfg = load(reg_opts);
      rsd::DetectConfig dc = cfg.detect_config();
      const auto& prof = dc.ensure_profile();
      const auto a = rsd::regularity_audit(dc, prof, cfg.adversary, cfg.trials, subsets, cfg.seed);
      std::cout << json{{"trials", a.trials},
                        {"clean_trials", a.clean_trials},
                        {"filtered_out", a.filtered_out},
                        {"violating_trials", a.violating_trials}}
                       .dump(2)
                << '\n';
    } else if (*tail) {
      if (hw_matrix == "identity") tp.hw_matrix = rsd::HwMatrix::Identity;
      else if (hw_matrix == "zero") tp.hw_matrix = rsd::HwMatrix::Zero;
      else if (hw_matrix == "projection") tp.hw_matrix = rsd::HwMatrix::Projection;
      else throw std::invalid_argument("--matrix: expected identity, zero or projection");
      const auto rep = rsd::empirical_tail_check(rsd::tail_lemma_from_string(lemma), tp, tail_trials, tail_seed);
      const std::string text = rsd::to_json(rep).dump(2);
      if (!tail_out.empty()) std::ofstream(tail_out, std::ios::binary) << text << '\n';
      std::cout << text << '\n';
      return rep.pass ? kOk : kFailure;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const rsd::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
