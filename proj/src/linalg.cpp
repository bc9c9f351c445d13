#include "rsd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rsd {

VectorXd svec(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("svec: matrix not square");
  const int d = static_cast<int>(m.rows());
  VectorXd v(svec_dim(d));
  int p = 0;
  for (int i = 0; i < d; ++i) v(p++) = m(i, i);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) v(p++) = std::numbers::sqrt2 * 0.5 * (m(i, j) + m(j, i));
  return v;
}

MatrixXd smat(const VectorXd& v, int d) {
  if (d < 0 || v.size() != svec_dim(d)) throw std::invalid_argument("smat: length is not d(d+1)/2");
  MatrixXd m(d, d);
  int p = 0;
  for (int i = 0; i < d; ++i) m(i, i) = v(p++);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double x = v(p++) / std::numbers::sqrt2;
      m(i, j) = x;
      m(j, i) = x;
    }
  return m;
}

VectorXd svec_identity(int d) {
  VectorXd v = VectorXd::Zero(svec_dim(d));
  v.head(d).setOnes();
  return v;
}

namespace {

OpNorm dense_op_norm(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric_op_norm: eigensolver failed");
  const auto& ev = es.eigenvalues();
  const int n = static_cast<int>(ev.size());
  const int idx = std::abs(ev(0)) > std::abs(ev(n - 1)) ? 0 : n - 1;
  OpNorm r;
  r.eigenvalue = ev(idx);
  r.value = std::abs(ev(idx));
  r.vector = es.eigenvectors().col(idx);
  r.used_fallback = true;
  return r;
}

}  // namespace

OpNorm symmetric_op_norm(const MatrixXd& m, double tol, int max_iter) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) return OpNorm{0.0, 0.0, VectorXd(), 0, false};
  if (!m.allFinite()) throw std::invalid_argument("symmetric_op_norm: non-finite entries");

  // Start off every coordinate axis so no eigenvector is orthogonal by symmetry.
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = 1.0 + 0.1 * std::sin(1.0 + i);
  x.normalize();

  double rayleigh = x.dot(m * x);
  for (int it = 1; it <= max_iter; ++it) {
    VectorXd y = m * x;
    const double norm = y.norm();
    if (norm == 0.0) return OpNorm{0.0, 0.0, x, it, false};
    y /= norm;
    const double next = y.dot(m * y);
    const double change = std::abs(std::abs(next) - std::abs(rayleigh));
    x = std::move(y);
    rayleigh = next;
    if (change <= tol * std::max(std::abs(next), 1e-300) && it > 2) {
      // Confirm the pair: the residual must be small relative to |lambda|.
      const double resid = (m * x - next * x).norm();
      if (resid <= 1e-4 * std::abs(next) + 1e-12) return OpNorm{std::abs(next), next, x, it, false};
    }
  }
  return dense_op_norm(m);
}

MatrixXd clamped_sqrt(const MatrixXd& m, double lo, double hi) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite())
    throw std::runtime_error("clamped_sqrt: non-finite eigenvalues");
  VectorXd s = es.eigenvalues().cwiseMax(lo).cwiseMin(hi).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd project_to_fantope(const MatrixXd& x, double target) {
  const int d = static_cast<int>(x.rows());
  if (target < 0.0 || target > d) throw std::invalid_argument("project_to_fantope: target outside [0, d]");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (x + x.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("project_to_fantope: eigensolver failed");
  const VectorXd& l = es.eigenvalues();
  auto trace_at = [&](double t) { return (l.array() - t).max(0.0).min(1.0).sum(); };
  // trace_at is non-increasing in t; bracket the root.
  double lo = l.minCoeff() - 1.0, hi = l.maxCoeff();
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (trace_at(mid) > target ? lo : hi) = mid;
  }
  VectorXd s = (l.array() - 0.5 * (lo + hi)).max(0.0).min(1.0);
  // Remove the residual trace error on the eigenvalues strictly inside (0, 1).
  const double err = target - s.sum();
  int interior = 0;
  for (int i = 0; i < d; ++i) interior += (s(i) > 0.0 && s(i) < 1.0);
  if (interior > 0)
    for (int i = 0; i < d; ++i)
      if (s(i) > 0.0 && s(i) < 1.0) s(i) = std::clamp(s(i) + err / interior, 0.0, 1.0);
  MatrixXd out = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

double asymmetry(const MatrixXd& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

}  // namespace rsd
