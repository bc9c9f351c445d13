#include "rsd/widths.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>


namespace rsd {

void SymMatrixPoint::cache_eigen() {
  if (eigenvalues) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(matrix);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite())
    throw std::invalid_argument("SymMatrixPoint: eigen-decomposition failed");
  eigenvalues = es.eigenvalues();
  eigenvectors = es.eigenvectors();
}

bool SymMatrixPoint::feasible(double psd_tol) const {
  if (asymmetry(matrix) > 1e-12) return false;
  if (std::abs(matrix.trace() - trace_target) > 1e-9) return false;
  VectorXd ev;
  if (eigenvalues) {
    ev = *eigenvalues;
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(matrix, Eigen::EigenvaluesOnly);
    ev = es.eigenvalues();
  }
  return ev.size() == 0 || (ev.minCoeff() >= -psd_tol && ev.maxCoeff() <= 1.0 + psd_tol);
}

int intrinsic_dim(int d) { return (d - 1) * (d + 2) / 2; }

long iteration_budget(int d, const SolverOptions& opt) {
  if (opt.max_iterations > 0) return opt.max_iterations;
  const double dt = intrinsic_dim(d);
  const double m = std::ceil(opt.budget_scale * dt * dt * std::log(1.0 / opt.eps_tol));
  return std::max(1L, static_cast<long>(m));
}

std::optional<FeasibilityCut> feasibility_cut(const SymMatrixPoint& x, double psd_tol) {
  if (!x.matrix.allFinite()) throw std::invalid_argument("feasibility_cut: non-finite entries");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(x.matrix);
  if (es.info() != Eigen::Success) throw std::invalid_argument("feasibility_cut: eigen-decomposition failed");
  const auto& l = es.eigenvalues();
  const int d = static_cast<int>(l.size());
  if (d == 0) return std::nullopt;
  if (l(d - 1) > 1.0 + psd_tol) {
    const VectorXd v = es.eigenvectors().col(d - 1);
    return FeasibilityCut{d - 1, v * v.transpose()};
  }
  if (l(0) < -psd_tol) {
    const VectorXd v = es.eigenvectors().col(0);
    return FeasibilityCut{0, -(v * v.transpose())};
  }
  return std::nullopt;
}

WidthSolution solve_width_sdp(const ConstraintSet& k_set, int k, const SolverOptions& opt) {
  const int d = k_set.dim;
  if (k < 0 || k > d) throw std::invalid_argument("solve_width_sdp: k outside [0, d]");
  if (!(opt.eps_tol > 0.0) || !(opt.eps_tol < 1.0)) throw std::invalid_argument("solve_width_sdp: eps_tol must lie in (0, 1)");
  if (!(opt.budget_scale > 0.0)) throw std::invalid_argument("solve_width_sdp: budget_scale must be positive");

  WidthSolution sol;
  sol.kappa = declared_kappa(k_set);
  sol.x.trace_target = d - k;
  if (k == 0) {
    sol.x.matrix = MatrixXd::Identity(d, d);
    sol.value = quad_max_oracle(k_set, sol.x.matrix).value;
    sol.best_surrogate = sol.value;
    return sol;
  }
  if (k == d) {
    sol.x.matrix = MatrixXd::Zero(d, d);
    return sol;
  }

  const int m = svec_dim(d);
  const double b = d - k;
  const MatrixXd a_eq = svec_identity(d).transpose();
  const VectorXd a_row = a_eq.row(0).transpose();
  const double a_sq = a_row.squaredNorm();

  EllipsoidState st;
  st.center = svec(MatrixXd::Identity(d, d) * (b / d));
  st.shape = MatrixXd::Identity(m, m) * (4.0 * b);
  st.budget = iteration_budget(d, opt);

  double best = std::numeric_limits<double>::infinity();
  MatrixXd best_x;
  SymMatrixPoint pt;
  pt.trace_target = b;
  for (long it = 0; it < st.budget; ++it) {
    pt.matrix = smat(st.center, d);
    VectorXd g;
    if (auto cut = feasibility_cut(pt)) {
      g = svec(cut->cut);
      ++sol.feasibility_cuts;
    } else {
      const QuadMaxResult q = quad_max_oracle(k_set, pt.matrix);
      if (q.value < best) {
        best = q.value;
        best_x = pt.matrix;
      }
      ++sol.objective_cuts;
      if (q.value <= 0.0) break;  // theta = 0: the minimum 0 is attained
      g = svec(q.maximizer * q.maximizer.transpose());
    }
    if (ellipsoid_update(st, g, a_eq) == StepStatus::DegenerateCut) {
      ++sol.degenerate_cuts;
      break;
    }
    st.center -= a_row * ((a_row.dot(st.center) - b) / a_sq);
  }
  if (!best_x.size()) throw SolverError("solve_width_sdp: no feasible iterate visited");

  sol.iterations = st.iteration;
  sol.best_surrogate = best;
  sol.x.matrix = project_to_fantope(best_x, b);
  sol.value = quad_max_oracle(k_set, sol.x.matrix).value;
  return sol;
}

namespace {

WidthProfile assemble(const ConstraintSet& k_set, const SolverOptions& opt, std::vector<WidthSolution>& sols) {
  const int d = k_set.dim;
  WidthProfile p;
  p.dim = d;
  p.kappa = declared_kappa(k_set);
  p.options = opt;
  for (int k = 0; k <= d; ++k) {
    const double raw = std::sqrt(std::max(0.0, sols[k].value));
    p.raw_widths.push_back(raw);
    const double w = k == 0 ? raw : std::min(raw, p.widths.back());
    p.max_repair = std::max(p.max_repair, raw - w);
    p.widths.push_back(w);
    p.values.push_back(w * w);
    p.minimizers.push_back(std::move(sols[k].x.matrix));
  }
  return p;
}

}  // namespace

WidthProfile width_profile(const ConstraintSet& k_set, const SolverOptions& opt) {
  const int d = k_set.dim;
  std::vector<WidthSolution> sols(d + 1);
  std::vector<std::exception_ptr> errors(d + 1);
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = d; k >= 0; --k) {
    try {
      sols[k] = solve_width_sdp(k_set, k, opt);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return assemble(k_set, opt, sols);
}

WidthProfile width_profile_serial(const ConstraintSet& k_set, const SolverOptions& opt) {
  const int d = k_set.dim;
  std::vector<WidthSolution> sols;
  for (int k = 0; k <= d; ++k) sols.push_back(solve_width_sdp(k_set, k, opt));
  return assemble(k_set, opt, sols);
}

nlohmann::json to_json(const WidthProfile& p) {
  nlohmann::json j;
  j["dim"] = p.dim;
  j["kappa"] = p.kappa;
  j["widths"] = p.widths;
  j["values"] = p.values;
  j["raw_widths"] = p.raw_widths;
  j["max_repair"] = p.max_repair;
  j["eps_tol"] = p.options.eps_tol;
  j["budget_scale"] = p.options.budget_scale;
  j["max_iterations"] = p.options.max_iterations;
  nlohmann::json mins = nlohmann::json::array();
  for (const auto& x : p.minimizers) {
    std::vector<double> flat(x.size());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) flat[r * x.cols() + c] = x(r, c);
    mins.push_back(flat);
  }
  j["minimizers"] = mins;
  return j;
}

WidthProfile width_profile_from_json(const nlohmann::json& j) {
  WidthProfile p;
  p.dim = j.at("dim").get<int>();
  p.kappa = j.at("kappa").get<double>();
  p.widths = j.at("widths").get<std::vector<double>>();
  p.values = j.at("values").get<std::vector<double>>();
  p.raw_widths = j.value("raw_widths", p.widths);
  p.max_repair = j.value("max_repair", 0.0);
  p.options.eps_tol = j.value("eps_tol", SolverOptions{}.eps_tol);
  p.options.budget_scale = j.value("budget_scale", SolverOptions{}.budget_scale);
  p.options.max_iterations = j.value("max_iterations", 0L);
  const int d = p.dim;
  if (d < 1 || static_cast<int>(p.widths.size()) != d + 1 || static_cast<int>(p.values.size()) != d + 1)
    throw std::invalid_argument("width profile: arrays must have d + 1 entries");
  for (const auto& flat : j.at("minimizers")) {
    const auto v = flat.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d * d) throw std::invalid_argument("width profile: minimizer is not d x d");
    MatrixXd x(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) x(r, c) = v[r * d + c];
    p.minimizers.push_back(std::move(x));
  }
  if (static_cast<int>(p.minimizers.size()) != d + 1) throw std::invalid_argument("width profile: need d + 1 minimizers");
  return p;
}

int optimal_dimension(const WidthProfile& p, const std::function<double(int)>& threshold) {
  int best = 0;
  for (int j = 0; j <= p.dim; ++j) {
    const double prev = j == 0 ? std::numeric_limits<double>::infinity() : p.widths[j - 1];
    if (prev > threshold(j)) best = j;
  }
  return best;
}

std::pair<int, int> first_second_dimensions(const WidthProfile& p, int n, double sigma, double epsilon) {
  if (n < 1 || !(sigma > 0.0) || epsilon < 0.0 || epsilon >= 0.5)
    throw std::invalid_argument("first_second_dimensions: need N >= 1, sigma > 0, eps in [0, 1/2)");
  const double nn = n;
  auto f1 = [&](int j) { return std::pow(j, 0.25) * sigma / std::sqrt(nn); };
  auto f2 = [&](int j) { return std::pow(j, 0.25) * std::sqrt(epsilon) * sigma / std::pow(nn, 0.25); };
  return {optimal_dimension(p, f1), optimal_dimension(p, f2)};
}

ApproxProjection approx_projection(const SymMatrixPoint& x, int source_k) {
  const Eigen::Index d = x.matrix.rows();
  if (!x.matrix.allFinite()) throw std::invalid_argument("approx_projection: non-finite entries");
  return ApproxProjection{clamped_sqrt(MatrixXd::Identity(d, d) - x.matrix, 0.0, 1.0), source_k};
}

ApproxProjection approx_projection(const WidthProfile& p, int k) {
  if (k < 0 || k > p.dim) throw std::invalid_argument("approx_projection: k outside [0, d]");
  SymMatrixPoint x;
  x.matrix = p.minimizers[k];
  x.trace_target = p.dim - k;
  return approx_projection(x, k);
}

}  // namespace rsd
