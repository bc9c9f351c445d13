#include "rsd/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>
#include <stdexcept>

#include "rsd/ellipsoid.hpp"

namespace rsd {

MatrixXd generate_clean(int n, int d, const VectorXd& mu, double sigma, std::uint64_t seed) {
  if (n < 0 || d < 1 || mu.size() != d) throw std::invalid_argument("generate_clean: bad dimensions");
  if (!(sigma >= 0.0)) throw std::invalid_argument("generate_clean: sigma must be non-negative");
  Philox rng(seed);
  MatrixXd y(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) y(i, j) = mu(j) + sigma * rng.normal();
  return y;
}

std::string to_string(AdversaryStrategy s) {
  switch (s) {
    case AdversaryStrategy::None: return "none";
    case AdversaryStrategy::LargeNorm: return "large_norm";
    case AdversaryStrategy::MeanShift: return "mean_shift";
    case AdversaryStrategy::CollinearCluster: return "collinear_cluster";
    case AdversaryStrategy::AntiFilter: return "anti_filter";
    case AdversaryStrategy::Replay: return "replay";
  }
  return "unknown";
}

AdversaryStrategy strategy_from_string(const std::string& s) {
  for (auto a : {AdversaryStrategy::None, AdversaryStrategy::LargeNorm, AdversaryStrategy::MeanShift,
                 AdversaryStrategy::CollinearCluster, AdversaryStrategy::AntiFilter, AdversaryStrategy::Replay})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("adversary.strategy: unknown strategy '" + s + "'");
}

int AdversarySpec::budget(int n) const {
  if (strategy == AdversaryStrategy::None) return 0;
  return std::min(n, static_cast<int>(std::floor(epsilon * n + 1e-12)));
}

nlohmann::json to_json(const AdversarySpec& a) {
  nlohmann::json j;
  j["strategy"] = to_string(a.strategy);
  j["epsilon"] = a.epsilon;
  j["scale"] = a.scale;
  if (a.direction) j["direction"] = std::vector<double>(a.direction->data(), a.direction->data() + a.direction->size());
  if (a.rows.size()) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < a.rows.rows(); ++i) {
      const VectorXd r = a.rows.row(i).transpose();
      rows.push_back(std::vector<double>(r.data(), r.data() + r.size()));
    }
    j["rows"] = rows;
  }
  return j;
}

AdversarySpec adversary_from_json(const nlohmann::json& j, int d) {
  if (!j.is_object()) throw std::invalid_argument("adversary: expected an object");
  static const std::set<std::string> allowed{"strategy", "epsilon", "scale", "direction", "rows"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw std::invalid_argument("adversary." + it.key() + ": unknown key");
  AdversarySpec a;
  a.strategy = strategy_from_string(j.value("strategy", std::string("none")));
  a.epsilon = j.value("epsilon", 0.0);
  a.scale = j.value("scale", 1.0);
  if (!(a.epsilon >= 0.0 && a.epsilon < 0.5)) throw std::invalid_argument("adversary.epsilon: must lie in [0, 1/2)");
  if (!(a.scale > 0.0)) throw std::invalid_argument("adversary.scale: must be positive");
  if (j.contains("direction")) {
    const auto v = j.at("direction").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d) throw std::invalid_argument("adversary.direction: length must equal d");
    a.direction = Eigen::Map<const VectorXd>(v.data(), d);
    if (a.direction->norm() == 0.0) throw std::invalid_argument("adversary.direction: must be non-zero");
  }
  if (j.contains("rows")) {
    const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
    a.rows.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(rows[i].size()) != d) throw std::invalid_argument("adversary.rows: each row must have d entries");
      for (int c = 0; c < d; ++c) a.rows(static_cast<Eigen::Index>(i), c) = rows[i][c];
    }
  }
  return a;
}

namespace {

VectorXd default_direction(const AdversarySpec& adv, const AdversaryInfo& info, int d) {
  if (adv.direction) return adv.direction->normalized();
  if (info.mu.size() == d && info.mu.norm() > 0.0) return -info.mu.normalized();
  return VectorXd::Unit(d, 0);
}

std::vector<int> random_rows(int n, int count, std::uint64_t seed, int exclude = -1) {
  Philox rng(seed, 0x726f7773ull);
  std::vector<int> pool;
  for (int i = 0; i < n; ++i)
    if (i != exclude) pool.push_back(i);
  const auto pick = sample_without_replacement(rng, static_cast<int>(pool.size()), count);
  std::vector<int> rows;
  for (int p : pick) rows.push_back(pool[p]);
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

Contamination contaminate(const MatrixXd& clean, const AdversarySpec& adv, const AdversaryInfo& info,
                          std::uint64_t seed) {
  const int n = static_cast<int>(clean.rows());
  const int d = static_cast<int>(clean.cols());
  Contamination out{clean, {}};
  const int m = adv.budget(n);
  if (m == 0) return out;
  Philox rng(seed, 0x616476ull);

  switch (adv.strategy) {
    case AdversaryStrategy::None: return out;
    case AdversaryStrategy::LargeNorm: {
      out.corrupted = random_rows(n, m, seed);
      for (int i : out.corrupted) {
        VectorXd u(d);
        for (int j = 0; j < d; ++j) u(j) = rng.normal();
        out.data.row(i) = (adv.scale * std::sqrt(static_cast<double>(d)) / u.norm()) * u.transpose();
      }
      return out;
    }
    case AdversaryStrategy::MeanShift: {
      const VectorXd dir = default_direction(adv, info, d);
      out.corrupted = random_rows(n, m, seed);
      for (int i : out.corrupted) out.data.row(i) += adv.scale * dir.transpose();
      return out;
    }
    case AdversaryStrategy::CollinearCluster: {
      const VectorXd dir = default_direction(adv, info, d);
      out.corrupted = random_rows(n, m, seed);
      for (int i : out.corrupted) out.data.row(i) = adv.scale * dir.transpose();
      return out;
    }
    case AdversaryStrategy::Replay: {
      Eigen::Index src;
      clean.rowwise().squaredNorm().maxCoeff(&src);
      out.corrupted = random_rows(n, m, seed, adv.rows.rows() ? -1 : static_cast<int>(src));
      for (std::size_t t = 0; t < out.corrupted.size(); ++t) {
        const int i = out.corrupted[t];
        out.data.row(i) = adv.rows.rows() ? MatrixXd(adv.rows.row(static_cast<Eigen::Index>(t) % adv.rows.rows()))
                                          : MatrixXd(clean.row(src));
      }
      return out;
    }
    case AdversaryStrategy::AntiFilter: {
      if (!info.cfg || !info.profile) throw std::invalid_argument("contaminate: AntiFilter needs the detector config");
      const DetectConfig& cfg = *info.cfg;
      const Projection pr = choose_projection(*info.profile, n, cfg.sigma, cfg.epsilon);
      const MatrixXd& a = pr.a.matrix;
      const MatrixXd z = (clean / cfg.sigma) * a;
      VectorXd u = z.colwise().sum().transpose();
      if (u.norm() == 0.0) u = a.col(0);
      if (u.norm() == 0.0) {
        // A = 0: the statistic ignores the data, any replacement is equivalent.
        out.corrupted = random_rows(n, m, seed);
        for (int i : out.corrupted) out.data.row(i).setZero();
        return out;
      }
      u.normalize();
      const bool null = info.mu.size() != d || info.mu.norm() == 0.0;
      if (!null) u = -u;
      const double gamma1 = make_params(n, pr.k, cfg.epsilon, cfg.alpha, cfg.filters).gamma1;
      const double t = std::sqrt(pr.k + 0.9 * gamma1);
      // Preimage under the projection; u lies in range(A) since it is a sum of projected rows.
      const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(a);
      const VectorXd row = cfg.sigma * cod.solve(t * u);
      // Replace the rows that pull the clean sum hardest against u.
      const VectorXd proj = z * u;
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return proj(x) < proj(y); });
      out.corrupted.assign(order.begin(), order.begin() + m);
      std::sort(out.corrupted.begin(), out.corrupted.end());
      for (int i : out.corrupted) out.data.row(i) = row.transpose();
      return out;
    }
  }
  return out;
}

std::pair<double, double> wilson_interval(long successes, long n, double z) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half), successes == n ? 1.0 : std::min(1.0, centre + half)};
}

namespace {

TrialRecord run_trial(const DetectConfig& cfg, const WidthProfile& profile, const AdversarySpec& adv,
                      const VectorXd& mu, int mu_index, int trial, std::uint64_t seed, TestKind kind) {
  TrialRecord rec;
  rec.seed = derive_seed(seed, static_cast<std::uint64_t>(mu_index), static_cast<std::uint64_t>(trial));
  rec.mu_index = mu_index;
  rec.mu_norm = mu.norm();
  rec.adversary = adv.strategy;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const MatrixXd clean = generate_clean(cfg.n, cfg.d, mu, cfg.sigma, rec.seed);
    const AdversaryInfo info{mu, cfg.sigma, &cfg, &profile};
    const Contamination c = contaminate(clean, adv, info, derive_seed(rec.seed, 1));
    rec.outcome = kind == TestKind::Robust ? robust_test(c.data, cfg, profile) : theoretical_test(c.data, cfg, profile);
  } catch (const SolverError& e) {
    rec.failed = true;
    rec.error = e.what();
  } catch (const FilterError& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  rec.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace

ErrorRateTable estimate_error_rates(const DetectConfig& cfg, const WidthProfile& profile, const AdversarySpec& adv,
                                    const std::vector<VectorXd>& mu_list, int trials, std::uint64_t seed,
                                    const RunOptions& opt) {
  cfg.validate();
  if (trials < 1) throw std::invalid_argument("trials: must be positive");
  for (const auto& mu : mu_list)
    if (mu.size() != cfg.d) throw std::invalid_argument("mu: length must equal d");
  const int groups = static_cast<int>(mu_list.size());
  const long total = static_cast<long>(groups) * trials;
  ErrorRateTable table;
  table.records.resize(total);
  std::vector<std::exception_ptr> errors(total);

  auto body = [&](long idx) {
    const int g = static_cast<int>(idx / trials);
    const int t = static_cast<int>(idx % trials);
    try {
      table.records[idx] = run_trial(cfg, profile, adv, mu_list[g], g, t, seed, opt.test);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  };
  if (opt.parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (long idx = 0; idx < total; ++idx) body(idx);
  } else {
    for (long idx = 0; idx < total; ++idx) body(idx);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (int g = 0; g < groups; ++g) {
    RateRow row;
    row.mu_index = g;
    row.mu_norm = mu_list[g].norm();
    row.null = row.mu_norm == 0.0;
    row.adversary = adv.strategy;
    double runtime = 0.0;
    for (int t = 0; t < trials; ++t) {
      const TrialRecord& r = table.records[static_cast<long>(g) * trials + t];
      runtime += r.runtime;
      if (r.failed) {
        ++row.failures;
        continue;
      }
      ++row.trials;
      const bool reject = r.outcome.decision == Decision::Reject;
      row.errors += row.null ? reject : !reject;
    }
    row.rate = row.trials ? static_cast<double>(row.errors) / row.trials : 0.0;
    std::tie(row.ci_lo, row.ci_hi) = wilson_interval(row.errors, row.trials);
    row.mean_runtime = runtime / trials;
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace rsd
