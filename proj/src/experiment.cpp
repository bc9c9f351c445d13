#include "rsd/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rsd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed read of j[key]; type errors name the key.
template <class T>
T read(const json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(path + key + ": wrong type");
  }
}

template <class T>
T read_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  return j.contains(key) ? read<T>(j, key, path) : fallback;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw std::invalid_argument(path.empty() ? "config: expected an object" : path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw std::invalid_argument(path + (path.empty() ? "" : ".") + it.key() + ": unknown key");
}

TestKind test_from_string(const std::string& s) {
  if (s == "robust") return TestKind::Robust;
  if (s == "theoretical") return TestKind::Theoretical;
  throw std::invalid_argument("test: expected 'robust' or 'theoretical'");
}

std::string to_string(TestKind t) { return t == TestKind::Robust ? "robust" : "theoretical"; }

}  // namespace

DetectConfig ExperimentConfig::detect_config() const {
  DetectConfig c;
  c.n = n;
  c.d = d;
  c.sigma = sigma;
  c.epsilon = epsilon;
  c.alpha = alpha;
  c.constraint = constraint;
  c.c2 = c2;
  c.c_theory = c_theory;
  c.filters = filters;
  c.solver = solver;
  return c;
}

ExperimentConfig config_from_json(const json& root) {
  if (root.is_object() && root.contains("config_hash") && root.contains("config")) return config_from_json(root.at("config"));
  reject_unknown(root,
                 {"constraint", "N", "d", "sigma", "epsilon", "alpha", "adversary", "mu", "trials", "seed", "solver",
                  "constants", "test", "record_timings", "output"},
                 "");
  ExperimentConfig c;
  if (!root.contains("constraint")) throw std::invalid_argument("constraint: missing");
  c.constraint = constraint_from_json(root.at("constraint"));
  c.d = read_or<int>(root, "d", "", c.constraint.dim);
  if (c.d != c.constraint.dim) throw std::invalid_argument("d: does not match the constraint dimension");
  if (!root.contains("N")) throw std::invalid_argument("N: missing");
  c.n = read<int>(root, "N", "");
  if (c.n < 1) throw std::invalid_argument("N: must be a positive integer");
  c.sigma = read_or<double>(root, "sigma", "", 1.0);
  if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) throw std::invalid_argument("sigma: must be positive");
  c.epsilon = read_or<double>(root, "epsilon", "", 0.0);
  if (!(c.epsilon >= 0.0 && c.epsilon < 0.5)) throw std::invalid_argument("epsilon: must lie in [0, 1/2)");
  c.alpha = read_or<double>(root, "alpha", "", 0.05);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw std::invalid_argument("alpha: must lie in (0, 1)");
  c.trials = read_or<int>(root, "trials", "", 100);
  if (c.trials < 1) throw std::invalid_argument("trials: must be positive");
  c.seed = read_or<std::uint64_t>(root, "seed", "", 0);
  c.test = test_from_string(read_or<std::string>(root, "test", "", "robust"));
  if (c.test == TestKind::Theoretical && c.n > 14) throw std::invalid_argument("N: the theoretical test needs N <= 14");
  c.record_timings = read_or<bool>(root, "record_timings", "", false);
  c.output = read_or<std::string>(root, "output", "", "out");

  if (root.contains("adversary")) {
    json a = root.at("adversary");
    if (a.is_object() && !a.contains("epsilon")) a["epsilon"] = c.epsilon;
    c.adversary = adversary_from_json(a, c.d);
  } else {
    c.adversary.epsilon = c.epsilon;
  }
  if (c.adversary.epsilon > c.epsilon + 1e-12)
    throw std::invalid_argument("adversary.epsilon: exceeds the detector epsilon");

  if (root.contains("solver")) {
    const json& s = root.at("solver");
    reject_unknown(s, {"eps_tol", "budget_scale", "max_iterations"}, "solver");
    c.solver.eps_tol = read_or<double>(s, "eps_tol", "solver.", c.solver.eps_tol);
    c.solver.budget_scale = read_or<double>(s, "budget_scale", "solver.", c.solver.budget_scale);
    c.solver.max_iterations = read_or<long>(s, "max_iterations", "solver.", c.solver.max_iterations);
    if (!(c.solver.eps_tol > 0.0 && c.solver.eps_tol < 1.0)) throw std::invalid_argument("solver.eps_tol: must lie in (0, 1)");
    if (!(c.solver.budget_scale > 0.0)) throw std::invalid_argument("solver.budget_scale: must be positive");
    if (c.solver.max_iterations < 0) throw std::invalid_argument("solver.max_iterations: must be non-negative");
  }

  if (root.contains("constants")) {
    const json& k = root.at("constants");
    reject_unknown(k, {"c2", "c_theory", "c_pre", "c_low", "c_high", "c_weight", "c_regularity"}, "constants");
    c.c2 = read_or<double>(k, "c2", "constants.", c.c2);
    c.c_theory = read_or<double>(k, "c_theory", "constants.", c.c_theory);
    c.filters.c_pre = read_or<double>(k, "c_pre", "constants.", c.filters.c_pre);
    c.filters.c_low = read_or<double>(k, "c_low", "constants.", c.filters.c_low);
    c.filters.c_high = read_or<double>(k, "c_high", "constants.", c.filters.c_high);
    c.filters.c_weight = read_or<double>(k, "c_weight", "constants.", c.filters.c_weight);
    c.filters.c_regularity = read_or<double>(k, "c_regularity", "constants.", c.filters.c_regularity);
    for (auto it = k.begin(); it != k.end(); ++it)
      if (!(it->get<double>() > 0.0)) throw std::invalid_argument("constants." + it.key() + ": must be positive");
  }

  if (root.contains("mu")) {
    const json& m = root.at("mu");
    reject_unknown(m, {"kind", "values", "direction", "norms", "boundary_multiples", "include_null"}, "mu");
    c.mu.kind = read_or<std::string>(m, "kind", "mu.", "zero");
    if (c.mu.kind == "vector") {
      c.mu.values = read<std::vector<std::vector<double>>>(m, "values", "mu.");
      if (c.mu.values.empty()) throw std::invalid_argument("mu.values: must not be empty");
      for (const auto& v : c.mu.values)
        if (static_cast<int>(v.size()) != c.d) throw std::invalid_argument("mu.values: each mean must have d entries");
    } else if (c.mu.kind == "radial") {
      if (m.contains("direction") && !(m.at("direction").is_string() && m.at("direction") == "top_axis")) {
        c.mu.direction = read<std::vector<double>>(m, "direction", "mu.");
        if (static_cast<int>(c.mu.direction->size()) != c.d) throw std::invalid_argument("mu.direction: length must equal d");
        if (VectorXd(Eigen::Map<const VectorXd>(c.mu.direction->data(), c.d)).norm() == 0.0)
          throw std::invalid_argument("mu.direction: must be non-zero");
      }
      c.mu.norms = read_or<std::vector<double>>(m, "norms", "mu.", {});
      c.mu.boundary_multiples = read_or<std::vector<double>>(m, "boundary_multiples", "mu.", {});
      if (c.mu.norms.empty() == c.mu.boundary_multiples.empty())
        throw std::invalid_argument("mu.norms: give exactly one of norms and boundary_multiples");
      for (double x : c.mu.norms)
        if (!(x > 0.0)) throw std::invalid_argument("mu.norms: must be positive");
      for (double x : c.mu.boundary_multiples)
        if (!(x > 0.0)) throw std::invalid_argument("mu.boundary_multiples: must be positive");
      c.mu.include_null = read_or<bool>(m, "include_null", "mu.", true);
    } else if (c.mu.kind != "zero") {
      throw std::invalid_argument("mu.kind: expected 'zero', 'vector' or 'radial'");
    }
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

json canonical_json(const ExperimentConfig& c) {
  json mu{{"kind", c.mu.kind}};
  if (c.mu.kind == "vector") mu["values"] = c.mu.values;
  if (c.mu.kind == "radial") {
    mu["direction"] = c.mu.direction ? json(*c.mu.direction) : json("top_axis");
    if (!c.mu.norms.empty()) mu["norms"] = c.mu.norms;
    if (!c.mu.boundary_multiples.empty()) mu["boundary_multiples"] = c.mu.boundary_multiples;
    mu["include_null"] = c.mu.include_null;
  }
  return json{{"constraint", to_json(c.constraint)},
              {"N", c.n},
              {"d", c.d},
              {"sigma", c.sigma},
              {"epsilon", c.epsilon},
              {"alpha", c.alpha},
              {"adversary", to_json(c.adversary)},
              {"mu", mu},
              {"trials", c.trials},
              {"seed", c.seed},
              {"solver",
               {{"eps_tol", c.solver.eps_tol},
                {"budget_scale", c.solver.budget_scale},
                {"max_iterations", c.solver.max_iterations}}},
              {"constants",
               {{"c2", c.c2},
                {"c_theory", c.c_theory},
                {"c_pre", c.filters.c_pre},
                {"c_low", c.filters.c_low},
                {"c_high", c.filters.c_high},
                {"c_weight", c.filters.c_weight},
                {"c_regularity", c.filters.c_regularity}}},
              {"test", to_string(c.test)},
              {"record_timings", c.record_timings}};
}

std::string config_hash(const ExperimentConfig& c) {
  const std::string s = canonical_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::vector<VectorXd> mu_list(const ExperimentConfig& c, const WidthProfile& profile) {
  std::vector<VectorXd> out;
  if (c.mu.kind == "zero") {
    out.push_back(VectorXd::Zero(c.d));
  } else if (c.mu.kind == "vector") {
    for (const auto& v : c.mu.values) out.push_back(Eigen::Map<const VectorXd>(v.data(), c.d));
  } else {
    VectorXd dir;
    if (c.mu.direction) {
      dir = Eigen::Map<const VectorXd>(c.mu.direction->data(), c.d).normalized();
    } else {
      // Longest axis of K: the first coordinate attaining the outer radius.
      Eigen::Index j = 0;
      if (c.constraint.axes.size() == c.d) c.constraint.axes.maxCoeff(&j);
      dir = VectorXd::Unit(c.d, j);
    }
    if (c.mu.include_null) out.push_back(VectorXd::Zero(c.d));
    for (double r : c.mu.norms) out.push_back(r * dir);
    if (!c.mu.boundary_multiples.empty()) {
      const double b = detection_boundary(profile, c.n, c.sigma, c.epsilon, c.alpha);
      for (double m : c.mu.boundary_multiples) out.push_back(std::sqrt(m * b) * dir);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!contains(c.constraint, out[i], 1e-9))
      throw std::invalid_argument("mu: mean " + std::to_string(i) + " lies outside the constraint set");
  return out;
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_widths_csv(std::ostream& os, const WidthProfile& p) {
  os << "k,width,value\n";
  for (int k = 0; k <= p.dim; ++k) os << k << ',' << fmt(p.widths[k]) << ',' << fmt(p.values[k]) << '\n';
}

void write_outcomes_csv(std::ostream& os, const ErrorRateTable& t, bool timings) {
  os << "mu_index,trial,seed,mu_norm,adversary,decision,stage,statistic,threshold,chosen_k,chosen_branch,k1,k2,"
        "weight_sum,consistent_subset_size,failed,runtime\n";
  int last = -1, trial = 0;
  for (const auto& r : t.records) {
    trial = r.mu_index == last ? trial + 1 : 0;
    last = r.mu_index;
    const auto& o = r.outcome;
    os << r.mu_index << ',' << trial << ',' << r.seed << ',' << fmt(r.mu_norm) << ',' << to_string(r.adversary) << ','
       << (r.failed ? "error" : to_string(o.decision)) << ',' << to_string(o.stage) << ',' << fmt(o.statistic) << ','
       << fmt(o.threshold) << ',' << o.chosen_k << ',' << to_string(o.chosen_branch) << ',' << o.k1 << ',' << o.k2
       << ',' << fmt(o.weight_sum) << ',' << o.consistent_subset_size << ',' << (r.failed ? 1 : 0) << ','
       << (timings ? fmt(r.runtime) : "") << '\n';
  }
}

namespace {

void write_rate(std::ostream& os, const RateRow& r, bool timings) {
  os << r.mu_index << ',' << fmt(r.mu_norm) << ',' << (r.null ? "H0" : "H1") << ',' << (r.null ? "type1" : "type2")
     << ',' << to_string(r.adversary) << ',' << r.trials << ',' << r.errors << ',' << fmt(r.rate) << ','
     << fmt(r.ci_lo) << ',' << fmt(r.ci_hi) << ',' << r.failures << ',' << (timings ? fmt(r.mean_runtime) : "")
     << '\n';
}

constexpr const char* kRateColumns =
    "mu_index,mu_norm,hypothesis,error_type,adversary,trials,errors,rate,ci_lo,ci_hi,failures,mean_runtime";

}  // namespace

void write_rates_csv(std::ostream& os, const ErrorRateTable& t, bool timings) {
  os << kRateColumns << '\n';
  for (const auto& r : t.rows) write_rate(os, r, timings);
}

void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRow>& rows, bool timings) {
  os << "axis,value," << kRateColumns << '\n';
  for (const auto& r : rows) {
    os << to_string(axis) << ',' << fmt(r.value) << ',';
    write_rate(os, r.rate, timings);
  }
}

namespace {

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  body(os);
  if (!os) throw std::runtime_error("write failed for '" + p.string() + "'");
}

std::shared_ptr<const WidthProfile> profile_for(const ExperimentConfig& c, std::shared_ptr<const WidthProfile> p) {
  if (p) {
    if (p->dim != c.d) throw std::invalid_argument("profile: dimension does not match d");
    return p;
  }
  return std::make_shared<const WidthProfile>(width_profile(c.constraint, c.solver));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c, const std::optional<fs::path>& out,
                                std::shared_ptr<const WidthProfile> profile) {
  ExperimentResult res;
  const auto prof = profile_for(c, std::move(profile));
  res.profile = *prof;
  res.hash = config_hash(c);
  res.mus = mu_list(c, res.profile);
  DetectConfig dc = c.detect_config();
  dc.profile = prof;
  RunOptions opt;
  opt.test = c.test;
  res.table = estimate_error_rates(dc, res.profile, c.adversary, res.mus, c.trials, c.seed, opt);

  if (out) {
    fs::create_directories(*out);
    write_file(*out / "widths.csv", [&](std::ostream& os) { write_widths_csv(os, res.profile); });
    write_file(*out / "outcomes.csv", [&](std::ostream& os) { write_outcomes_csv(os, res.table, c.record_timings); });
    write_file(*out / "rates.csv", [&](std::ostream& os) { write_rates_csv(os, res.table, c.record_timings); });
    const json manifest{{"config", canonical_json(c)},
                        {"config_hash", res.hash},
                        {"seed", c.seed},
                        {"files", {"widths.csv", "outcomes.csv", "rates.csv"}}};
    write_file(*out / "manifest.json", [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
  }
  return res;
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "rho") return SweepAxis::Rho;
  if (s == "epsilon") return SweepAxis::Epsilon;
  if (s == "N") return SweepAxis::N;
  throw std::invalid_argument("axis: expected 'rho', 'epsilon' or 'N'");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Rho: return "rho";
    case SweepAxis::Epsilon: return "epsilon";
    case SweepAxis::N: return "N";
  }
  return "unknown";
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values,
                            std::shared_ptr<const WidthProfile> profile) {
  if (values.empty()) throw std::invalid_argument("values: must not be empty");
  if (!std::is_sorted(values.begin(), values.end())) throw std::invalid_argument("values: must be sorted ascending");
  const auto prof = profile_for(base, std::move(profile));
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig c = base;
    switch (axis) {
      case SweepAxis::Rho:
        if (!(v > 0.0)) throw std::invalid_argument("values: rho multiples must be positive");
        if (c.mu.kind != "radial") {
          c.mu.kind = "radial";
          c.mu.direction.reset();
          c.mu.include_null = false;
        }
        c.mu.norms.clear();
        c.mu.boundary_multiples = {v};
        break;
      case SweepAxis::Epsilon:
        if (!(v >= 0.0 && v < 0.5)) throw std::invalid_argument("values: epsilon must lie in [0, 1/2)");
        c.epsilon = v;
        c.adversary.epsilon = v;
        break;
      case SweepAxis::N:
        if (!(v >= 1.0) || v != std::floor(v)) throw std::invalid_argument("values: N must be a positive integer");
        c.n = static_cast<int>(v);
        break;
    }
    const ExperimentResult r = run_experiment(c, std::nullopt, prof);
    for (const auto& row : r.table.rows) rows.push_back({v, row});
  }
  return rows;
}

namespace {

// Filter output audits, one per trial; nullopt where the filters rejected.
std::vector<std::optional<RegularityReport>> filtered_audits(const DetectConfig& cfg, const WidthProfile& profile,
                                                             const AdversarySpec& adv, int trials,
                                                             int subset_trials, std::uint64_t seed) {
  cfg.validate();
  if (trials < 1) throw std::invalid_argument("trials: must be positive");
  const Projection pr = choose_projection(profile, cfg.n, cfg.sigma, cfg.epsilon);
  const VectorXd zero = VectorXd::Zero(cfg.d);
  const RegularityParams params = make_params(cfg.n, pr.k, cfg.epsilon, cfg.alpha, cfg.filters);
  const MatrixXd cov = pr.a.matrix * pr.a.matrix;
  std::vector<std::optional<RegularityReport>> out(trials);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, 0, static_cast<std::uint64_t>(t));
    const MatrixXd clean = generate_clean(cfg.n, cfg.d, zero, cfg.sigma, s);
    const AdversaryInfo info{zero, cfg.sigma, &cfg, &profile};
    const MatrixXd y = contaminate(clean, adv, info, derive_seed(s, 1)).data;
    WeightedSample ws((y / cfg.sigma) * pr.a.matrix, cov);
    ws.k = pr.k;
    const PipelineResult pipe = run_filters(ws, params, pr.k);
    if (!pipe.rejected) out[t] = check_omega_regularity(pipe.sample, params, subset_trials, derive_seed(s, 2));
  }
  return out;
}

}  // namespace

RegularityAudit regularity_audit(const DetectConfig& cfg, const WidthProfile& profile, const AdversarySpec& adv,
                                 int trials, int subset_trials, std::uint64_t seed) {
  RegularityAudit audit;
  audit.trials = trials;
  for (const auto& rep : filtered_audits(cfg, profile, adv, trials, subset_trials, seed)) {
    if (!rep) {
      ++audit.filtered_out;
      continue;
    }
    if (rep->ok()) ++audit.clean_trials;
    for (int i = 0; i < 3; ++i) audit.violating_trials[i] += rep->violations[i] > 0;
  }
  return audit;
}

double calibrate_regularity_constant(const DetectConfig& cfg, const WidthProfile& profile, int trials,
                                     int subset_trials, std::uint64_t seed, double coverage) {
  if (!(coverage > 0.0 && coverage <= 1.0)) throw std::invalid_argument("coverage: must lie in (0, 1]");
  DetectConfig unit = cfg;
  unit.filters.c_regularity = 1.0;
  const Projection pr = choose_projection(profile, cfg.n, cfg.sigma, cfg.epsilon);
  const RegularityParams p = make_params(cfg.n, pr.k, cfg.epsilon, cfg.alpha, unit.filters);
  const std::array<double, 3> bound{p.beta1, p.beta2, std::sqrt(static_cast<double>(cfg.n)) * p.beta1};
  std::vector<double> needed;
  for (const auto& rep : filtered_audits(unit, profile, AdversarySpec{}, trials, subset_trials, seed)) {
    if (!rep) continue;
    double c = 0.0;
    for (int i = 0; i < 3; ++i)
      if (bound[i] > 0.0) c = std::max(c, 1.0 - rep->worst_slack[i] / bound[i]);
    needed.push_back(c);
  }
  if (needed.empty()) throw std::runtime_error("calibrate_regularity_constant: every trial was rejected by the filters");
  std::sort(needed.begin(), needed.end());
  const auto idx = static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(needed.size())));
  return needed[std::min(needed.size(), std::max<std::size_t>(idx, 1)) - 1];
}

}  // namespace rsd
