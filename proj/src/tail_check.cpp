#include "rsd/tail_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "rsd/rng.hpp"

namespace rsd {

std::string to_string(TailLemma l) {
  switch (l) {
    case TailLemma::HansonWright: return "hanson_wright";
    case TailLemma::OpNormCov: return "opnorm_cov";
    case TailLemma::OpNormGram: return "opnorm_gram";
    case TailLemma::WeightedCov: return "weighted_cov";
  }
  return "unknown";
}

TailLemma tail_lemma_from_string(const std::string& s) {
  for (auto l : {TailLemma::HansonWright, TailLemma::OpNormCov, TailLemma::OpNormGram, TailLemma::WeightedCov})
    if (to_string(l) == s) return l;
  throw std::invalid_argument("lemma: unknown lemma '" + s + "'");
}

nlohmann::json to_json(const TailReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"param", row.param}, {"bound", row.bound}, {"exceedance", row.exceedance}, {"allowed", row.allowed}});
  nlohmann::json j{{"lemma", to_string(r.lemma)},
                   {"trials", r.trials},
                   {"fitted_constant", r.fitted_constant},
                   {"reference_constant", r.reference_constant},
                   {"level", r.level},
                   {"rows", rows},
                   {"pass", r.pass}};
  if (r.lemma == TailLemma::HansonWright) {
    j["exact_tail"] = r.exact_tail;
    j["empirical_tail"] = r.empirical_tail;
    j["exact_ok"] = r.exact_ok;
  }
  return j;
}

namespace {

// Largest acceptable fitted constant for the operator-norm lemmas.
constexpr double kMaxConstant = 10.0;
// Smallest acceptable Hanson-Wright constant for Gaussian vectors.
constexpr double kHwReference = 1.0 / 16.0;

// diag(1, ..., 1, frac, 0, ..., 0) with trace k.
VectorXd sigma_diag(int d, double k) {
  VectorXd s = VectorXd::Zero(d);
  for (int j = 0; j < d && k > 0.0; ++j) {
    s(j) = std::min(1.0, k);
    k -= s(j);
  }
  return s;
}

MatrixXd gaussian_rows(Philox& rng, int n, const VectorXd& sd) {
  MatrixXd x(n, sd.size());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < sd.size(); ++j) x(i, j) = sd(j) * rng.normal();
  return x;
}

double op_norm(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double margin(double p, int t) { return 3.0 * std::sqrt(std::max(p, 1.0 / t) * (1.0 - std::min(p, 0.5)) / t) + 1.0 / t; }

// Runs f(trial) -> vector of statistics for every trial.
template <class F>
std::vector<std::vector<double>> simulate(int trials, bool parallel, F f) {
  std::vector<std::vector<double>> out(trials);
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int t = 0; t < trials; ++t) out[t] = f(t);
  } else {
    for (int t = 0; t < trials; ++t) out[t] = f(t);
  }
  return out;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) ;
  return v[std::min(v.size() - 1, idx == 0 ? 0 : idx - 1)];
}

TailReport hanson_wright(const TailParams& p, int trials, std::uint64_t seed) {
  const int d = p.d;
  VectorXd a;  // diagonal of A
  switch (p.hw_matrix) {
    case HwMatrix::Identity: a = VectorXd::Ones(d); break;
    case HwMatrix::Zero: a = VectorXd::Zero(d); break;
    case HwMatrix::Projection: a = sigma_diag(d, p.k > 0 ? p.k : std::max(1, d / 2)); break;
  }
  const double tr = a.sum();
  const double fro2 = a.squaredNorm();
  const double op = a.cwiseAbs().maxCoeff();
  const auto dev = simulate(trials, p.parallel, [&](int t) {
    Philox rng(derive_seed(seed, 0, static_cast<std::uint64_t>(t)));
    double q = 0.0;
    for (int j = 0; j < d; ++j) {
      const double z = rng.normal();
      q += a(j) * z * z;
    }
    return std::vector<double>{std::abs(q - tr)};
  });

  TailReport r;
  r.lemma = TailLemma::HansonWright;
  r.trials = trials;
  r.reference_constant = kHwReference;
  const double t_ref = 3.0 * std::sqrt(2.0 * d);
  const std::vector<double> grid{std::sqrt(2.0 * d), 1.5 * std::sqrt(2.0 * d), t_ref, 4.0 * std::sqrt(2.0 * d)};
  const int half = trials / 2;

  if (fro2 == 0.0) {
    // The deviation is identically zero.
    double worst = 0.0;
    for (const auto& v : dev) worst = std::max(worst, v[0]);
    r.fitted_constant = std::numeric_limits<double>::infinity();
    for (double t : grid) r.rows.push_back({t, 0.0, worst > t ? 1.0 : 0.0, 0.0});
    r.pass = worst == 0.0;
    return r;
  }

  auto exceed = [&](double t, int lo, int hi) {
    int c = 0;
    for (int i = lo; i < hi; ++i) c += dev[i][0] > t;
    return static_cast<double>(c) / std::max(1, hi - lo);
  };
  auto scale = [&](double t) { return std::min(t * t / fro2, t / op); };

  double c_fit = std::numeric_limits<double>::infinity();
  for (double t : grid) {
    const double ph = std::max(exceed(t, 0, half), 1.0 / std::max(1, half));
    c_fit = std::min(c_fit, -std::log(ph / 2.0) / scale(t));
  }
  r.fitted_constant = c_fit;
  bool ok = c_fit >= kHwReference;
  for (double t : grid) {
    const double bound = std::min(1.0, 2.0 * std::exp(-c_fit * scale(t)));
    TailRow row{t, bound, exceed(t, half, trials), bound + margin(bound, trials - half)};
    ok = ok && row.exceedance <= row.allowed;
    r.rows.push_back(row);
  }

  r.empirical_tail = exceed(t_ref, 0, trials);
  if (p.hw_matrix == HwMatrix::Identity) {
    const boost::math::chi_squared chi(d);
    const double upper = boost::math::cdf(boost::math::complement(chi, d + t_ref));
    const double lower = d - t_ref > 0.0 ? boost::math::cdf(chi, d - t_ref) : 0.0;
    r.exact_tail = upper + lower;
    const double se = std::sqrt(std::max(r.exact_tail * (1.0 - r.exact_tail), 1e-12) / trials);
    r.exact_ok = std::abs(r.empirical_tail - r.exact_tail) <= 4.0 * se + 1.0 / trials;
  }
  r.pass = ok && r.exact_ok;
  return r;
}

// Shared fit/holdout logic for the matrix lemmas: stats[t][g] is the
// statistic at grid point g, shape[g] the bound without its constant.
TailReport fit_matrix_lemma(TailLemma lemma, const std::vector<std::vector<double>>& stats,
                            const std::vector<double>& grid, const std::vector<double>& shape, double level) {
  const int trials = static_cast<int>(stats.size());
  const int half = trials / 2;
  TailReport r;
  r.lemma = lemma;
  r.trials = trials;
  r.level = level;
  r.reference_constant = kMaxConstant;
  double c = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> ratio;
    for (int t = 0; t < half; ++t) ratio.push_back(stats[t][g] / shape[g]);
    c = std::max(c, quantile(ratio, 1.0 - level));
  }
  r.fitted_constant = c;
  bool ok = c <= kMaxConstant;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double bound = c * shape[g];
    int over = 0;
    for (int t = half; t < trials; ++t) over += stats[t][g] > bound;
    TailRow row{grid[g], bound, static_cast<double>(over) / std::max(1, trials - half),
                level + margin(level, trials - half)};
    ok = ok && row.exceedance <= row.allowed;
    r.rows.push_back(row);
  }
  r.pass = ok;
  return r;
}

TailReport op_norm_lemma(TailLemma lemma, const TailParams& p, int trials, std::uint64_t seed) {
  const int k = p.k > 0 ? p.k : std::max(1, p.d / 2);
  if (k > p.d) throw std::invalid_argument("k: must not exceed d");
  const VectorXd sd = sigma_diag(p.d, k).cwiseSqrt();
  const VectorXd sig = sd.cwiseAbs2();
  const double l = std::log(1.0 / p.delta);
  std::vector<int> grid;
  if (p.n > 0) {
    grid.push_back(p.n);
  } else if (lemma == TailLemma::OpNormGram) {
    for (int f : {8, 4, 2})
      if (k / f >= 1) grid.push_back(k / f);
    if (grid.empty()) throw std::invalid_argument("k: OpNormGram needs k >= 2");
  } else {
    for (int f : {1, 2, 4, 8}) grid.push_back(f * k);
  }
  std::vector<double> shape, gridd;
  for (int n : grid) {
    if (lemma == TailLemma::OpNormCov && n < k) throw std::invalid_argument("n: OpNormCov needs n >= k");
    if (lemma == TailLemma::OpNormGram && n >= k) throw std::invalid_argument("n: OpNormGram needs n < k");
    const double nk = std::sqrt(static_cast<double>(n) * k);
    shape.push_back(lemma == TailLemma::OpNormCov ? nk + std::sqrt(n * l) + l : nk + std::sqrt(k * l) + l);
    gridd.push_back(n);
  }
  const int gid = lemma == TailLemma::OpNormCov ? 1 : 2;
  const auto stats = simulate(trials, p.parallel, [&](int t) {
    std::vector<double> out;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      Philox rng(derive_seed(seed, gid, static_cast<std::uint64_t>(t)), g);
      const MatrixXd x = gaussian_rows(rng, grid[g], sd);
      if (lemma == TailLemma::OpNormCov) {
        MatrixXd m = x.transpose() * x;
        m.diagonal() -= grid[g] * sig;
        out.push_back(op_norm(m));
      } else {
        MatrixXd m = x * x.transpose();
        m.diagonal().array() -= static_cast<double>(k);
        out.push_back(op_norm(m));
      }
    }
    return out;
  });
  return fit_matrix_lemma(lemma, stats, gridd, shape, 2.0 * p.delta);
}

TailReport weighted_cov_lemma(const TailParams& p, int trials, std::uint64_t seed) {
  const int k = p.k > 0 ? p.k : std::max(1, p.d / 2);
  if (k > p.d) throw std::invalid_argument("k: must not exceed d");
  if (!(p.epsilon > 0.0 && p.epsilon < 0.5)) throw std::invalid_argument("epsilon: must lie in (0, 1/2)");
  const VectorXd sd = sigma_diag(p.d, k).cwiseSqrt();
  const double l = std::log(1.0 / p.delta);
  std::vector<int> grid;
  if (p.n > 0) grid.push_back(p.n);
  else
    for (int f : {2, 4, 8}) grid.push_back(f * std::max(k, static_cast<int>(std::ceil(1.0 / p.epsilon))));
  std::vector<double> shape, gridd;
  for (int n : grid) {
    shape.push_back(p.epsilon * n * std::log(1.0 / p.epsilon) + k + l);
    gridd.push_back(n);
  }
  const auto stats = simulate(trials, p.parallel, [&](int t) {
    std::vector<double> out;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      Philox rng(derive_seed(seed, 3, static_cast<std::uint64_t>(t)), g);
      const MatrixXd x = gaussian_rows(rng, grid[g], sd);
      out.push_back(weighted_cov_norm(x, p.epsilon * grid[g]));
    }
    return out;
  });
  return fit_matrix_lemma(TailLemma::WeightedCov, stats, gridd, shape, p.delta);
}

}  // namespace

double weighted_cov_norm(const MatrixXd& x, double m) {
  const int n = static_cast<int>(x.rows());
  if (n == 0 || m <= 0.0) return 0.0;
  m = std::min(m, static_cast<double>(n));
  std::vector<int> order(n);

  // Optimal weights for a fixed direction: mass on the largest projections.
  auto best_for = [&](const VectorXd& v, VectorXd& w) {
    const VectorXd s = (x * v).cwiseAbs2();
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s(a) > s(b); });
    w.setZero(n);
    double left = m;
    double val = 0.0;
    for (int i : order) {
      if (left <= 0.0) break;
      w(i) = std::min(1.0, left);
      left -= w(i);
      val += w(i) * s(i);
    }
    return val;
  };

  std::vector<VectorXd> starts;
  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(x.transpose() * x);
    starts.push_back(es.eigenvectors().col(x.cols() - 1));
  }
  Eigen::Index top;
  x.rowwise().squaredNorm().maxCoeff(&top);
  if (x.row(top).norm() > 0.0) starts.push_back(x.row(top).transpose().normalized());
  for (Eigen::Index j = 0; j < std::min<Eigen::Index>(x.cols(), 3); ++j) starts.push_back(VectorXd::Unit(x.cols(), j));

  double best = 0.0;
  VectorXd w;
  for (VectorXd v : starts) {
    double prev = -1.0;
    for (int it = 0; it < 50; ++it) {
      const double val = best_for(v, w);
      if (val <= prev * (1.0 + 1e-12)) break;
      prev = val;
      const MatrixXd c = x.transpose() * w.asDiagonal() * x;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(c);
      v = es.eigenvectors().col(c.cols() - 1);
      best = std::max(best, es.eigenvalues()(c.cols() - 1));
    }
    best = std::max(best, prev);
  }
  return best;
}

TailReport empirical_tail_check(TailLemma lemma, const TailParams& params, int trials, std::uint64_t seed) {
  if (params.d < 1 || params.d > 200) throw std::invalid_argument("d: must lie in [1, 200]");
  if (trials < 2 || trials > 10000) throw std::invalid_argument("trials: must lie in [2, 10000]");
  if (!(params.delta > 0.0 && params.delta < 0.5)) throw std::invalid_argument("delta: must lie in (0, 1/2)");
  switch (lemma) {
    case TailLemma::HansonWright: return hanson_wright(params, trials, seed);
    case TailLemma::OpNormCov:
    case TailLemma::OpNormGram: return op_norm_lemma(lemma, params, trials, seed);
    case TailLemma::WeightedCov: return weighted_cov_lemma(params, trials, seed);
  }
  throw std::invalid_argument("lemma: unknown");
}

}  // namespace rsd
