#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsd/ellipsoid.hpp"
#include "rsd/geometry.hpp"

namespace rsd {

inline constexpr double kPsdTol = 1e-9;

/// A symmetric iterate X of the width relaxation with its trace target d - k.
struct SymMatrixPoint {
  MatrixXd matrix;
  double trace_target = 0.0;
  std::optional<VectorXd> eigenvalues;  // ascending
  std::optional<MatrixXd> eigenvectors;

  void cache_eigen();
  /// |tr X - target| <= 1e-9 and spectrum within [-psd_tol, 1 + psd_tol].
  bool feasible(double psd_tol = kPsdTol) const;
};

struct SolverOptions {
  double eps_tol = 1e-3;
  double budget_scale = 8.0;
  /// Overrides the budget formula when positive.
  long max_iterations = 0;
};

/// Intrinsic dimension (d - 1)(d + 2)/2 of the feasible slice.
int intrinsic_dim(int d);
/// ceil(budget_scale * dtilde^2 * ln(1 / eps_tol)), at least 1.
long iteration_budget(int d, const SolverOptions& opt);

struct WidthSolution {
  SymMatrixPoint x;  // X-dagger_k, projected onto the feasible set
  double value = 0.0;  // h~ = oracle value at x
  double kappa = 1.0;
  long iterations = 0;
  long feasibility_cuts = 0;
  long objective_cuts = 0;
  long degenerate_cuts = 0;
  double best_surrogate = 0.0;  // best theta' X theta along the run
};

struct FeasibilityCut {
  int violated_index = 0;  // eigen index of the offending eigenvalue
  MatrixXd cut;            // v v' or -v v'
};

/// Cut separating X from {0 <= X <= I}, or nullopt if X is feasible.
std::optional<FeasibilityCut> feasibility_cut(const SymMatrixPoint& x, double psd_tol = kPsdTol);

/// Approximately minimises max_{theta in K} theta' X theta over
/// {tr X = d - k, 0 <= X <= I} with the equality-constrained ellipsoid method.
WidthSolution solve_width_sdp(const ConstraintSet& k_set, int k, const SolverOptions& opt = {});

struct WidthProfile {
  int dim = 0;
  double kappa = 1.0;
  std::vector<double> widths;      // D~_k after monotone repair, k = 0..d
  std::vector<double> values;      // h~ after repair, widths[k]^2
  std::vector<double> raw_widths;  // before repair
  std::vector<MatrixXd> minimizers;
  double max_repair = 0.0;
  SolverOptions options;
};

/// All k = 0..d; k values are solved concurrently with OpenMP.
WidthProfile width_profile(const ConstraintSet& k_set, const SolverOptions& opt = {});
/// Serial reference; bit-identical to width_profile.
WidthProfile width_profile_serial(const ConstraintSet& k_set, const SolverOptions& opt = {});

nlohmann::json to_json(const WidthProfile& p);
WidthProfile width_profile_from_json(const nlohmann::json& j);

/// max{j in [0, d] : D~_{j-1} > f(j)}, with D~_{-1} = inf and D~_j = 0 for j >= d.
int optimal_dimension(const WidthProfile& p, const std::function<double(int)>& threshold);

/// (k~1*, k~2*) with f1(j) = j^{1/4} sigma / sqrt(N), f2(j) = j^{1/4} sqrt(eps) sigma / N^{1/4}.
std::pair<int, int> first_second_dimensions(const WidthProfile& p, int n, double sigma, double epsilon);

struct ApproxProjection {
  MatrixXd matrix;  // (I - X)^{1/2}
  int source_k = 0;
};

ApproxProjection approx_projection(const SymMatrixPoint& x, int source_k = 0);
ApproxProjection approx_projection(const WidthProfile& p, int k);

}  // namespace rsd
