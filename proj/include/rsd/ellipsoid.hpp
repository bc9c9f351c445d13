#pragma once

#include <stdexcept>

#include "rsd/linalg.hpp"

namespace rsd {

/// Numerical failure of the cutting-plane solver (not a statistical outcome).
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Central-cut ellipsoid {x : (x - c)' P^{-1} (x - c) <= 1} restricted to the
/// affine set {A x = b}. `dim` is the ambient coordinate count n used in the
/// update coefficients.
struct EllipsoidState {
  VectorXd center;
  MatrixXd shape;  // full symmetric storage
  VectorXd last_cut;
  VectorXd last_step;  // r, the normalised projected step
  long iteration = 0;
  long budget = 0;
};

enum class StepStatus { Accepted, DegenerateCut };

/// One projected central-cut update with n = center.size():
///   P~ = P - P A'(A P A')^{-1} A P,   r = P~ g / sqrt(g' P~ g),
///   c <- c - r / (n + 1),             P <- n^2/(n^2 - 1) (P - 2/(n + 1) r r').
/// `a_eq` holds the equality rows (possibly zero rows). Returns DegenerateCut
/// and leaves the state untouched when ||P~ g|| < 1e-12 ||g||. Throws
/// SolverError when g' P~ g is not positive and finite.
StepStatus ellipsoid_update(EllipsoidState& state, const VectorXd& g, const MatrixXd& a_eq);

/// Value-returning form of ellipsoid_update.
EllipsoidState ellipsoid_step(const EllipsoidState& state, const VectorXd& g, const MatrixXd& a_eq,
                              StepStatus* status = nullptr);

/// log of vol(E_{k+1}) / vol(E_k) for a central cut in R^n (no equality rows).
double central_cut_log_volume_ratio(int n);
/// Same ratio within an affine slice of dimension `slice_dim`, with the
/// coefficients taken from ambient dimension n.
double sliced_log_volume_ratio(int n, int slice_dim);

/// Half log-determinant of the slice shape P~ = P - P A'(A P A')^{-1} A P in
/// an orthonormal basis of null(A); throws SolverError unless positive definite.
double restricted_half_logdet(const MatrixXd& p, const MatrixXd& a_eq);

}  // namespace rsd
