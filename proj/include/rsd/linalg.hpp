#pragma once

#include <Eigen/Dense>

namespace rsd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Number of free coordinates of a symmetric d x d matrix.
inline int svec_dim(int d) { return d * (d + 1) / 2; }

/// Isometric half-vectorisation: the d diagonal entries first, then the
/// strictly upper entries (row-major) scaled by sqrt(2). Frobenius inner
/// products are preserved.
VectorXd svec(const MatrixXd& m);
/// Inverse of svec; throws std::invalid_argument unless v.size() = d(d+1)/2.
MatrixXd smat(const VectorXd& v, int d);
/// svec of the identity, the trace functional in svec coordinates.
VectorXd svec_identity(int d);

/// Largest-magnitude eigenpair of a symmetric matrix.
struct OpNorm {
  double value = 0.0;     // |lambda|, the spectral norm
  double eigenvalue = 0.0;
  VectorXd vector;        // unit eigenvector
  int iterations = 0;
  bool used_fallback = false;
};

/// Power iteration from a fixed start vector, stopping at relative change
/// `tol` of the Rayleigh quotient. Falls back to a dense eigensolver when the
/// iteration stalls (e.g. when +lambda and -lambda tie).
OpNorm symmetric_op_norm(const MatrixXd& m, double tol = 1e-8, int max_iter = 2000);

/// Symmetric square root with eigenvalues clamped to [lo, hi] first.
MatrixXd clamped_sqrt(const MatrixXd& m, double lo = 0.0, double hi = 1.0);

/// Nearest point (in Frobenius norm, along eigenvalue shifts) of
/// {0 <= X <= I, tr X = target}: eigenvalues become clamp(l_i - t, 0, 1) with
/// t found by bisection.
MatrixXd project_to_fantope(const MatrixXd& x, double target);

/// Max entry-wise deviation from symmetry.
double asymmetry(const MatrixXd& m);

}  // namespace rsd
