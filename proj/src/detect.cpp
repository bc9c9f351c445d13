#include "rsd/detect.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "rsd/sim.hpp"

namespace rsd {

void DetectConfig::validate() const {
  if (n < 1) throw std::invalid_argument("N: must be a positive integer");
  if (d < 1) throw std::invalid_argument("d: must be a positive integer");
  if (constraint.dim != d) throw std::invalid_argument("constraint: dimension does not match d");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma: must be positive");
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon: must lie in [0, 1/2)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha: must lie in (0, 1)");
  if (!(c2 >= 0.0)) throw std::invalid_argument("c2: must be non-negative");
  if (!(c_theory >= 0.0)) throw std::invalid_argument("c_theory: must be non-negative");
  if (profile && profile->dim != d) throw std::invalid_argument("profile: dimension does not match d");
}

const WidthProfile& DetectConfig::ensure_profile() {
  if (!profile) profile = std::make_shared<const WidthProfile>(width_profile(constraint, solver));
  return *profile;
}

std::string to_string(Decision d) { return d == Decision::Reject ? "reject" : "accept"; }

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Prefilter: return "prefilter";
    case Stage::SampleFilter: return "sample_filter";
    case Stage::FinalStatistic: return "final_statistic";
    case Stage::NoConsistentSubset: return "no_consistent_subset";
    case Stage::SubsetStatistic: return "subset_statistic";
  }
  return "unknown";
}

std::string to_string(Branch b) { return b == Branch::First ? "first" : "second"; }

nlohmann::json to_json(const TestOutcome& o) {
  nlohmann::json j;
  j["decision"] = to_string(o.decision);
  j["stage"] = to_string(o.stage);
  j["statistic"] = o.statistic;
  j["threshold"] = o.threshold;
  j["chosen_k"] = o.chosen_k;
  j["chosen_branch"] = to_string(o.chosen_branch);
  j["k1"] = o.k1;
  j["k2"] = o.k2;
  j["weight_sum"] = o.weight_sum;
  j["consistent_subset_size"] = o.consistent_subset_size;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : o.trace.rows)
    rows.push_back({{"stage", r.stage}, {"iteration", r.iteration}, {"lambda", r.lambda},
                    {"threshold", r.threshold}, {"mass_removed", r.mass_removed}, {"weight_sum", r.weight_sum}});
  j["trace"] = rows;
  return j;
}

double p_raw(double epsilon, int n, double k, double alpha, double sigma) {
  const double nn = n;
  const double l = std::log(nn / alpha);
  const double la = std::log(1.0 / alpha);
  const double terms[] = {epsilon * l / std::sqrt(nn), epsilon * epsilon * l,
                          std::sqrt(epsilon * epsilon * k * l / nn), std::sqrt(k) * la / nn};
  return sigma * sigma * *std::max_element(std::begin(terms), std::end(terms));
}

double e_raw(double epsilon, int n, double k, double sigma) {
  const double nn = n;
  const double le = epsilon > 0.0 ? std::log(1.0 / epsilon) : 0.0;
  const double terms[] = {std::sqrt(k) / nn, epsilon * epsilon * le, std::sqrt(epsilon * epsilon * le * k / nn)};
  return sigma * sigma * *std::max_element(std::begin(terms), std::end(terms));
}

double detection_boundary(const WidthProfile& profile, int n, double sigma, double epsilon, double alpha) {
  const auto [k1, k2] = first_second_dimensions(profile, n, sigma, epsilon);
  return p_raw(epsilon, n, std::min(k1, k2), alpha, sigma);
}

Decision chi_square_test(const VectorXd& y, double k, double sigma, double t) {
  return y.squaredNorm() - k * sigma * sigma >= t ? Decision::Reject : Decision::Accept;
}

double chi_square_threshold(double k, double sigma, double alpha) {
  if (!(k > 0.0)) throw std::invalid_argument("chi_square_threshold: k must be positive");
  boost::math::chi_squared dist(k);
  return sigma * sigma * (boost::math::quantile(boost::math::complement(dist, alpha)) - k);
}

Projection choose_projection(const WidthProfile& profile, int n, double sigma, double epsilon) {
  Projection p;
  std::tie(p.k1, p.k2) = first_second_dimensions(profile, n, sigma, epsilon);
  p.branch = p.k1 <= p.k2 ? Branch::First : Branch::Second;
  p.k = std::min(p.k1, p.k2);
  p.a = approx_projection(profile, p.k);
  return p;
}

namespace {

void check_shape(const MatrixXd& y, const DetectConfig& cfg, const WidthProfile& profile) {
  cfg.validate();
  if (y.rows() != cfg.n || y.cols() != cfg.d) throw std::invalid_argument("observations: expected an N x d matrix");
  if (profile.dim != cfg.d) throw std::invalid_argument("profile: dimension does not match d");
  if (!y.allFinite()) throw std::invalid_argument("observations: non-finite entries");
}

}  // namespace

TestOutcome robust_test(const MatrixXd& y, DetectConfig& cfg) {
  const WidthProfile& p = cfg.ensure_profile();
  return robust_test(y, cfg, p);
}

TestOutcome robust_test(const MatrixXd& y, const DetectConfig& cfg, const WidthProfile& profile) {
  check_shape(y, cfg, profile);
  const Projection pr = choose_projection(profile, cfg.n, cfg.sigma, cfg.epsilon);
  TestOutcome out;
  out.k1 = pr.k1;
  out.k2 = pr.k2;
  out.chosen_k = pr.k;
  out.chosen_branch = pr.branch;
  out.weight_sum = cfg.n;
  if (pr.k == 0) return out;  // A = 0: the statistic vanishes identically

  const MatrixXd z = (y / cfg.sigma) * pr.a.matrix;
  WeightedSample s(z, pr.a.matrix * pr.a.matrix);
  s.k = pr.k;
  const RegularityParams params = make_params(cfg.n, pr.k, cfg.epsilon, cfg.alpha, cfg.filters);
  PipelineResult pipe = run_filters(s, params, pr.k);
  out.trace = std::move(pipe.trace);
  out.weight_sum = pipe.sample.weights.sum();
  out.threshold = cfg.c2 * static_cast<double>(cfg.n) * cfg.n * std::sqrt(p_raw(cfg.epsilon, cfg.n, pr.k, cfg.alpha, 1.0));
  if (pipe.rejected) {
    out.decision = Decision::Reject;
    out.stage = pipe.stage == FilterStage::Prefilter ? Stage::Prefilter : Stage::SampleFilter;
    return out;
  }
  const VectorXd sum = (pipe.sample.weights.cwiseSqrt().asDiagonal() * z).colwise().sum().transpose();
  out.statistic = std::abs(sum.squaredNorm() - pr.k * out.weight_sum);
  out.decision = out.statistic >= out.threshold ? Decision::Reject : Decision::Accept;
  return out;
}

TestOutcome theoretical_test(const MatrixXd& y, const DetectConfig& cfg, const WidthProfile& profile) {
  check_shape(y, cfg, profile);
  const int n = cfg.n;
  if (n > 14) throw std::invalid_argument("theoretical_test: N must be at most 14");
  const Projection pr = choose_projection(profile, n, cfg.sigma, cfg.epsilon);
  TestOutcome out;
  out.stage = Stage::SubsetStatistic;
  out.k1 = pr.k1;
  out.k2 = pr.k2;
  out.chosen_k = pr.k;
  out.chosen_branch = pr.branch;
  out.weight_sum = n;
  if (pr.k == 0) {
    out.consistent_subset_size = n;
    return out;
  }

  const MatrixXd z = y * pr.a.matrix;
  const double e2 = e_raw(cfg.epsilon, n, pr.k, cfg.sigma);
  const double s2 = cfg.sigma * cfg.sigma;
  const std::uint32_t full = (1u << n) - 1u;
  std::vector<VectorXd> sums(full + 1u);
  sums[0] = VectorXd::Zero(cfg.d);
  std::vector<double> stat(full + 1u, 0.0);
  std::vector<char> phi(full + 1u, 0);
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    const int low = std::countr_zero(mask);
    sums[mask] = sums[mask & (mask - 1u)] + z.row(low).transpose();
    const double size = std::popcount(mask);
    stat[mask] = sums[mask].squaredNorm() - pr.k * size * s2;
    phi[mask] = stat[mask] >= cfg.c_theory * size * size * e2;
  }

  const int b1 = static_cast<int>(std::floor(cfg.epsilon * n + 1e-12));
  const int b2 = static_cast<int>(std::floor(2.0 * cfg.epsilon * n + 1e-12));
  const int min_sub = n - b2;
  auto consistent = [&](std::uint32_t s0) {
    const char ref = phi[s0];
    for (std::uint32_t sub = s0; sub; sub = (sub - 1u) & s0)
      if (std::popcount(sub) >= min_sub && phi[sub] != ref) return false;
    return true;
  };

  // Descending size; within a size, lexicographic order of the index sets.
  for (int size = n; size >= n - b1 && size >= 1; --size) {
    std::vector<int> idx(size);
    for (int i = 0; i < size; ++i) idx[i] = i;
    while (true) {
      std::uint32_t s0 = 0;
      for (int i : idx) s0 |= 1u << i;
      if (consistent(s0)) {
        out.consistent_subset_size = size;
        out.statistic = stat[s0];
        out.threshold = cfg.c_theory * static_cast<double>(size) * size * e2;
        out.decision = phi[s0] ? Decision::Reject : Decision::Accept;
        return out;
      }
      int i = size - 1;
      while (i >= 0 && idx[i] == n - size + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  out.decision = Decision::Reject;
  out.stage = Stage::NoConsistentSubset;
  return out;
}

std::string to_string(CalibTarget t) {
  switch (t) {
    case CalibTarget::C2: return "c2";
    case CalibTarget::CPre: return "c_pre";
    case CalibTarget::CLow: return "c_low";
    case CalibTarget::CHigh: return "c_high";
    case CalibTarget::CTheory: return "c_theory";
  }
  return "unknown";
}

CalibTarget calib_target_from_string(const std::string& s) {
  for (auto t : {CalibTarget::C2, CalibTarget::CPre, CalibTarget::CLow, CalibTarget::CHigh, CalibTarget::CTheory})
    if (to_string(t) == s) return t;
  throw std::invalid_argument("unknown constant '" + s + "' (expected c2, c_pre, c_low, c_high or c_theory)");
}

double alpha_share(CalibTarget t, double alpha) {
  switch (t) {
    case CalibTarget::C2: return alpha / 2.0;
    case CalibTarget::CPre:
    case CalibTarget::CLow:
    case CalibTarget::CHigh: return alpha / 4.0;
    case CalibTarget::CTheory: return alpha;
  }
  return alpha;
}

namespace {

DetectConfig with_constant(DetectConfig cfg, CalibTarget t, double c) {
  switch (t) {
    case CalibTarget::C2: cfg.c2 = c; break;
    case CalibTarget::CPre: cfg.filters.c_pre = c; break;
    case CalibTarget::CLow: cfg.filters.c_low = c; break;
    case CalibTarget::CHigh: cfg.filters.c_high = c; break;
    case CalibTarget::CTheory: cfg.c_theory = c; break;
  }
  return cfg;
}

bool stage_rejects(const TestOutcome& o, CalibTarget t) {
  if (o.decision != Decision::Reject) return false;
  switch (t) {
    case CalibTarget::C2: return o.stage == Stage::FinalStatistic;
    case CalibTarget::CPre: return o.stage == Stage::Prefilter;
    case CalibTarget::CLow:
    case CalibTarget::CHigh: return o.stage == Stage::SampleFilter;
    case CalibTarget::CTheory: return true;
  }
  return false;
}

std::vector<MatrixXd> null_draws(const DetectConfig& cfg, int trials, std::uint64_t seed) {
  std::vector<MatrixXd> ys(trials);
  const VectorXd zero = VectorXd::Zero(cfg.d);
  for (int t = 0; t < trials; ++t) ys[t] = generate_clean(cfg.n, cfg.d, zero, cfg.sigma, derive_seed(seed, 0, t));
  return ys;
}

double rate_on(const std::vector<MatrixXd>& ys, const DetectConfig& cfg, const WidthProfile& profile,
               CalibTarget t) {
  const int trials = static_cast<int>(ys.size());
  long hits = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : hits)
  for (int i = 0; i < trials; ++i) {
    const TestOutcome o =
        t == CalibTarget::CTheory ? theoretical_test(ys[i], cfg, profile) : robust_test(ys[i], cfg, profile);
    hits += stage_rejects(o, t);
  }
  return static_cast<double>(hits) / trials;
}

}  // namespace

double stage_rejection_rate(const DetectConfig& cfg, const WidthProfile& profile, CalibTarget target,
                            double constant, int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("stage_rejection_rate: trials must be positive");
  return rate_on(null_draws(cfg, trials, seed), with_constant(cfg, target, constant), profile, target);
}

CalibrationResult calibrate_constant(const DetectConfig& cfg, const WidthProfile& profile, CalibTarget target,
                                     int trials, std::uint64_t seed) {
  if (trials < 100) throw std::invalid_argument("calibrate_constant: need at least 100 trials");
  return calibrate_constant(cfg, profile, target, null_draws(cfg, trials, seed));
}

CalibrationResult calibrate_constant(const DetectConfig& cfg, const WidthProfile& profile, CalibTarget target,
                                     const std::vector<MatrixXd>& ys) {
  if (ys.size() < 100) throw std::invalid_argument("calibrate_constant: need at least 100 trials");
  for (const auto& y : ys) check_shape(y, cfg, profile);
  CalibrationResult res;
  res.target = alpha_share(target, cfg.alpha);
  auto rate = [&](double c) {
    ++res.evaluations;
    return rate_on(ys, with_constant(cfg, target, c), profile, target);
  };
  double lo = std::log(1e-3), hi = std::log(1e3);
  double r_lo = rate(std::exp(lo)), r_hi = rate(std::exp(hi));
  if (r_lo < r_hi) throw std::runtime_error("calibrate_constant: rejection rate increases with the constant");
  if (r_hi > res.target) throw std::runtime_error("calibrate_constant: target rate not reached at the largest constant");
  if (r_lo <= res.target) {
    res.constant = std::exp(lo);
    res.rate = r_lo;
    return res;
  }
  for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate(std::exp(mid));
    if (r > r_lo || r < r_hi) throw std::runtime_error("calibrate_constant: non-monotone rejection rate");
    if (r <= res.target) {
      hi = mid;
      r_hi = r;
    } else {
      lo = mid;
      r_lo = r;
    }
  }
  res.constant = std::exp(hi);
  res.rate = r_hi;
  return res;
}

}  // namespace rsd
