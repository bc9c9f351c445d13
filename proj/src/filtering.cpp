#include "rsd/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsd/rng.hpp"

namespace rsd {

WeightedSample::WeightedSample(MatrixXd rows)
    : data(std::move(rows)),
      weights(VectorXd::Ones(data.rows())),
      cov(MatrixXd::Identity(data.cols(), data.cols())),
      k(static_cast<double>(data.cols())) {}

WeightedSample::WeightedSample(MatrixXd rows, MatrixXd covariance)
    : data(std::move(rows)), weights(VectorXd::Ones(data.rows())), cov(std::move(covariance)), k(cov.trace()) {
  if (cov.rows() != data.cols() || cov.cols() != data.cols())
    throw std::invalid_argument("WeightedSample: covariance does not match the row dimension");
}

int WeightedSample::active_count() const { return static_cast<int>((weights.array() > 0.0).count()); }

int RegularityParams::budget() const { return static_cast<int>(std::floor(epsilon * n + 1e-12)); }

RegularityParams make_params(int n, double k, double epsilon, double alpha, const FilterConstants& c,
                             double mu_norm) {
  if (n < 1) throw std::invalid_argument("make_params: N must be positive");
  if (!(k >= 0.0)) throw std::invalid_argument("make_params: k must be non-negative");
  if (epsilon < 0.0 || epsilon >= 0.5) throw std::invalid_argument("make_params: epsilon must lie in [0, 1/2)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("make_params: alpha must lie in (0, 1)");
  RegularityParams p;
  p.n = n;
  p.k = k;
  p.epsilon = epsilon;
  p.alpha = alpha;
  p.mu_norm = mu_norm;
  p.c = c;
  const double nn = n;
  const double ln_na = std::log(nn / alpha);
  const double ln_a = std::log(1.0 / alpha);
  const double en = epsilon * nn;
  const double ln_e = epsilon > 0.0 ? std::log(1.0 / epsilon) : 0.0;
  p.gamma1 = c.c_pre * (std::sqrt(k * ln_na) + ln_na);
  p.gamma2 = c.c_low * (std::sqrt(nn * k) + std::sqrt(nn * ln_a) + ln_a + en * ln_e);
  p.gamma3 = c.c_high * (std::sqrt(nn * k) + std::sqrt(k * ln_a) + ln_a + en * ln_e);
  const double m = mu_norm;
  p.beta1 = en * (std::sqrt(k) + std::sqrt(nn) * m) * std::sqrt(ln_na) + en * ln_na + en * std::sqrt(nn) * m * m;
  p.beta2 = en * std::sqrt(en * k * ln_e) + en * en * ln_e + m * en * en * std::sqrt(ln_e) + m * m * en * en;
  return p;
}

void FilterTrace::write_csv(std::ostream& os) const {
  os << "stage,iteration,lambda,threshold,mass_removed,weight_sum\n";
  for (const auto& r : rows)
    os << r.stage << ',' << r.iteration << ',' << r.lambda << ',' << r.threshold << ',' << r.mass_removed << ','
       << r.weight_sum << '\n';
}

namespace {

void record(FilterTrace* t, const char* stage, int it, double lambda, double thr, double removed, double sum) {
  if (t) t->rows.push_back(TraceRow{stage, it, lambda, thr, removed, sum});
}

// Indices sorted by decreasing score; ties keep the lower index first.
std::vector<int> order_desc(const VectorXd& score) {
  std::vector<int> idx(score.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return score(a) > score(b); });
  return idx;
}

}  // namespace

FilterResult prefilter(const WeightedSample& s, const RegularityParams& p, FilterTrace* trace) {
  FilterResult out{false, s, 0};
  int count = 0;
  for (int i = 0; i < s.n(); ++i) {
    if (std::abs(s.data.row(i).squaredNorm() - s.k) > p.gamma1) {
      ++count;
      if (count > p.budget()) {
        out.rejected = true;
        break;
      }
      out.sample.weights(i) = 0.0;
    }
  }
  record(trace, "prefilter", 0, count, p.gamma1, s.weights.sum() - out.sample.weights.sum(),
         out.sample.weights.sum());
  return out;
}

FilterResult sample_filter_lowdim(const WeightedSample& s, const RegularityParams& p, FilterTrace* trace) {
  const int n = s.n();
  FilterResult out{false, s, 0};
  VectorXd& w = out.sample.weights;
  const MatrixXd target = static_cast<double>(n) * s.cov;
  const double need = 2.0 * p.epsilon * n;
  const int cap = 50 * n;
  for (int it = 0;; ++it) {
    if (it > cap) throw FilterError("sample_filter_lowdim: iteration cap exceeded");
    const MatrixXd m = s.data.transpose() * w.asDiagonal() * s.data - target;
    const OpNorm op = symmetric_op_norm(m);
    out.iterations = it;
    if (op.value < p.gamma2) {
      record(trace, "sample_lowdim", it, op.value, p.gamma2, 0.0, w.sum());
      return out;
    }
    VectorXd tau = (s.data * op.vector).array().square();
    for (int i = 0; i < n; ++i)
      if (!(w(i) > 0.0)) tau(i) = 0.0;
    const std::vector<int> order = order_desc(tau);
    const double tau1 = tau(order[0]);
    if (!(tau1 > 0.0)) throw FilterError("sample_filter_lowdim: all scores vanish while lambda >= gamma2");
    int cut = n;
    double cum = 0.0;
    for (int pos = 0; pos < n; ++pos) {
      cum += w(order[pos]);
      if (cum >= need) {
        cut = pos + 1;
        break;
      }
    }
    const double before = w.sum();
    for (int pos = 0; pos < cut; ++pos) {
      const int i = order[pos];
      w(i) *= 1.0 - tau(i) / tau1;
    }
    w(order[0]) = 0.0;
    record(trace, "sample_lowdim", it, op.value, p.gamma2, before - w.sum(), w.sum());
    if (w.sum() < n * (1.0 - 2.0 * p.epsilon)) {
      out.rejected = true;
      return out;
    }
  }
}

FilterResult sample_filter_highdim(const WeightedSample& s, const RegularityParams& p, FilterTrace* trace) {
  const int n = s.n();
  FilterResult out{false, s, 0};
  VectorXd& w = out.sample.weights;
  const MatrixXd gram = s.data * s.data.transpose();
  const int cap = 50 * n;
  for (int it = 0;; ++it) {
    if (it > cap) throw FilterError("sample_filter_highdim: iteration cap exceeded");
    const VectorXd sw = w.cwiseSqrt();
    MatrixXd m = sw.asDiagonal() * gram * sw.asDiagonal();
    m.diagonal() -= s.k * w;
    const OpNorm op = symmetric_op_norm(m);
    out.iterations = it;
    if (op.value < p.gamma3) {
      record(trace, "sample_highdim", it, op.value, p.gamma3, 0.0, w.sum());
      return out;
    }
    VectorXd tau = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      if (w(i) > 0.0) tau(i) = op.vector(i) * op.vector(i) / w(i);
    Eigen::Index top;
    const double tmax = tau.maxCoeff(&top);
    if (!(tmax > 0.0)) throw FilterError("sample_filter_highdim: all scores vanish while lambda >= gamma3");
    const double before = w.sum();
    for (int i = 0; i < n; ++i) w(i) *= 1.0 - tau(i) / tmax;
    w(top) = 0.0;
    record(trace, "sample_highdim", it, op.value, p.gamma3, before - w.sum(), w.sum());
    if (w.sum() < n * (1.0 - 6.0 * p.epsilon)) {
      out.rejected = true;
      return out;
    }
  }
}

WeightedSample weight_filter(const WeightedSample& s, const RegularityParams& p, FilterTrace* trace) {
  WeightedSample out = s;
  const int n = s.n();
  const VectorXd sw = s.weights.cwiseSqrt();
  const MatrixXd u = sw.asDiagonal() * s.data;
  const VectorXd total = u.colwise().sum().transpose();
  VectorXd tau = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (s.weights(i) > 0.0) tau(i) = std::abs(u.row(i).dot(total) - s.k * s.weights(i));
  const std::vector<int> order = order_desc(tau);
  int removed = 0;
  for (int pos = 0; pos < n && removed < p.budget(); ++pos) {
    const int i = order[pos];
    if (!(s.weights(i) > 0.0)) continue;
    out.weights(i) = 0.0;
    ++removed;
  }
  record(trace, "weight_filter", 0, tau.size() ? tau.maxCoeff() : 0.0, 0.0, s.weights.sum() - out.weights.sum(),
         out.weights.sum());
  return out;
}

PipelineResult run_filters(const WeightedSample& s, const RegularityParams& p, int k_int) {
  PipelineResult r;
  FilterResult pre = prefilter(s, p, &r.trace);
  if (pre.rejected) {
    r.rejected = true;
    r.stage = FilterStage::Prefilter;
    r.sample = std::move(pre.sample);
    return r;
  }
  FilterResult mid = s.n() > k_int ? sample_filter_lowdim(pre.sample, p, &r.trace)
                                   : sample_filter_highdim(pre.sample, p, &r.trace);
  if (mid.rejected) {
    r.rejected = true;
    r.stage = FilterStage::SampleFilter;
    r.sample = std::move(mid.sample);
    return r;
  }
  r.sample = weight_filter(mid.sample, p, &r.trace);
  r.stage = FilterStage::WeightFilter;
  return r;
}

double weight_filter_bound(const RegularityParams& p, double gamma) {
  return p.c.c_weight * (std::sqrt(static_cast<double>(p.n)) * p.beta1 + p.beta2 + p.epsilon * p.n * gamma);
}

namespace {

struct SubsetAuditor {
  const WeightedSample& s;
  const RegularityParams& p;
  VectorXd excess;  // ||Y_i||^2 - k on active rows, 0 otherwise
  MatrixXd u;       // sqrt(w_i) Y_i
  VectorXd a;       // <u_i, sum_j u_j> - k w_i
  std::array<double, 3> bound{};
  RegularityReport report;

  SubsetAuditor(const WeightedSample& s_, const RegularityParams& p_) : s(s_), p(p_) {
    const int n = s.n();
    excess = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      if (s.weights(i) > 0.0) excess(i) = s.data.row(i).squaredNorm() - s.k;
    u = s.weights.cwiseSqrt().asDiagonal() * s.data;
    const VectorXd total = u.colwise().sum().transpose();
    a = u * total - s.k * s.weights;
    const double c = p.c.c_regularity;
    bound = {c * p.beta1, c * p.beta2, c * std::sqrt(static_cast<double>(n)) * p.beta1};
    report.worst_slack = bound;
  }

  void audit(const std::vector<int>& subset) {
    double lhs1 = 0.0, lhs3 = 0.0, wsum = 0.0;
    VectorXd sum = VectorXd::Zero(s.data.cols());
    for (int i : subset) {
      lhs1 += excess(i);
      lhs3 += a(i);
      wsum += s.weights(i);
      sum += u.row(i).transpose();
    }
    const double lhs2 = sum.squaredNorm() - wsum * s.k;
    const std::array<double, 3> lhs{lhs1, lhs2, lhs3};
    for (int c = 0; c < 3; ++c) {
      const double slack = bound[c] - std::abs(lhs[c]);
      report.worst_slack[c] = std::min(report.worst_slack[c], slack);
      if (slack < 0.0) ++report.violations[c];
    }
    ++report.subsets_checked;
  }

  // Prefixes of the ordering by a linear score, both extremes.
  void linear_extremes(const VectorXd& score, int budget) {
    std::vector<int> order = order_desc(score);
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<int> subset;
      for (int t = 0; t < budget && t < static_cast<int>(order.size()); ++t) {
        subset.push_back(order[t]);
        audit(subset);
      }
      std::reverse(order.begin(), order.end());
    }
  }

  // Greedy growth of ||sum u||^2 - k sum w towards +inf and -inf.
  void quadratic_greedy(int budget) {
    const int n = s.n();
    for (double sign : {1.0, -1.0}) {
      std::vector<int> subset;
      std::vector<char> used(n, 0);
      VectorXd sum = VectorXd::Zero(s.data.cols());
      double wsum = 0.0;
      for (int t = 0; t < budget; ++t) {
        int best = -1;
        double best_val = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
          if (used[i]) continue;
          const double val = sign * ((sum + u.row(i).transpose()).squaredNorm() - (wsum + s.weights(i)) * s.k);
          if (val > best_val) best_val = val, best = i;
        }
        if (best < 0) break;
        used[best] = 1;
        subset.push_back(best);
        sum += u.row(best).transpose();
        wsum += s.weights(best);
        audit(subset);
      }
    }
  }
};

void enumerate_subsets(SubsetAuditor& aud, int n, int budget) {
  std::vector<int> subset;
  auto rec = [&](auto&& self, int start) -> void {
    aud.audit(subset);
    if (static_cast<int>(subset.size()) == budget) return;
    for (int i = start; i < n; ++i) {
      subset.push_back(i);
      self(self, i + 1);
      subset.pop_back();
    }
  };
  rec(rec, 0);
}

}  // namespace

RegularityReport check_omega_regularity(const WeightedSample& s, const RegularityParams& p, int subset_trials,
                                        std::uint64_t seed, bool force_sampling) {
  if (subset_trials < 1) throw std::invalid_argument("check_omega_regularity: subset_trials must be >= 1");
  SubsetAuditor aud(s, p);
  const int n = s.n();
  const int budget = std::min(p.budget(), n);
  if (n <= 15 && !force_sampling) {
    enumerate_subsets(aud, n, budget);
    aud.report.exhaustive = true;
    return aud.report;
  }
  aud.audit({});
  if (budget > 0) {
    Philox rng(seed, 0x72656775ull);
    for (int t = 0; t < subset_trials; ++t) {
      const int size = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(budget)));
      aud.audit(sample_without_replacement(rng, n, size));
    }
    aud.linear_extremes(aud.excess, budget);
    aud.linear_extremes(aud.a, budget);
    aud.quadratic_greedy(budget);
  }
  return aud.report;
}

}  // namespace rsd
