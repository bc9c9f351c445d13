#include "rsd/ellipsoid.hpp"

#include <cmath>

namespace rsd {

StepStatus ellipsoid_update(EllipsoidState& st, const VectorXd& g, const MatrixXd& a_eq) {
  const Eigen::Index n = st.center.size();
  if (g.size() != n || st.shape.rows() != n || st.shape.cols() != n)
    throw std::invalid_argument("ellipsoid_update: dimension mismatch");
  if (a_eq.rows() > 0 && a_eq.cols() != n) throw std::invalid_argument("ellipsoid_update: equality rows have wrong width");
  if (!g.allFinite()) throw SolverError("ellipsoid_update: non-finite cut");

  VectorXd pg = st.shape.selfadjointView<Eigen::Lower>() * g;
  if (a_eq.rows() > 0) {
    const MatrixXd pat = st.shape.selfadjointView<Eigen::Lower>() * a_eq.transpose();
    const MatrixXd apa = a_eq * pat;
    const VectorXd coef = apa.ldlt().solve(pat.transpose() * g);
    pg.noalias() -= pat * coef;
  }
  if (pg.norm() < 1e-12 * std::max(g.norm(), 1e-300)) return StepStatus::DegenerateCut;
  const double gpg = g.dot(pg);
  if (!(gpg > 0.0) || !std::isfinite(gpg)) throw SolverError("ellipsoid_update: shape lost positive definiteness");

  const double nd = static_cast<double>(n);
  VectorXd r = pg / std::sqrt(gpg);
  st.center.noalias() -= r / (nd + 1.0);
  const double grow = nd * nd / (nd * nd - 1.0);
  if (n == 1) {
    // The n^2/(n^2-1) factor is undefined; halving the interval is the exact minimal update.
    st.shape *= 0.25;
  } else {
    st.shape.selfadjointView<Eigen::Lower>().rankUpdate(r, -2.0 / (nd + 1.0));
    st.shape.triangularView<Eigen::Lower>() *= grow;
    st.shape.triangularView<Eigen::StrictlyUpper>() = st.shape.transpose();
  }
  st.last_cut = g;
  st.last_step = std::move(r);
  ++st.iteration;
  return StepStatus::Accepted;
}

EllipsoidState ellipsoid_step(const EllipsoidState& state, const VectorXd& g, const MatrixXd& a_eq,
                              StepStatus* status) {
  EllipsoidState next = state;
  const StepStatus s = ellipsoid_update(next, g, a_eq);
  if (status) *status = s;
  return next;
}

double central_cut_log_volume_ratio(int n) { return sliced_log_volume_ratio(n, n); }

double sliced_log_volume_ratio(int n, int slice_dim) {
  const double nd = n, k = slice_dim;
  return k * std::log(nd) - 0.5 * (k + 1.0) * std::log(nd + 1.0) - 0.5 * (k - 1.0) * std::log(nd - 1.0);
}

double restricted_half_logdet(const MatrixXd& p, const MatrixXd& a_eq) {
  const Eigen::Index n = p.rows();
  MatrixXd basis;
  if (a_eq.rows() == 0) {
    basis = MatrixXd::Identity(n, n);
  } else {
    Eigen::HouseholderQR<MatrixXd> qr(a_eq.transpose());
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
    basis = q.rightCols(n - a_eq.rows());
  }
  MatrixXd slice = p.selfadjointView<Eigen::Lower>();
  if (a_eq.rows() > 0) {
    const MatrixXd pat = slice * a_eq.transpose();
    slice -= pat * (a_eq * pat).ldlt().solve(pat.transpose());
  }
  const MatrixXd restricted = basis.transpose() * slice * basis;
  Eigen::LLT<MatrixXd> llt(restricted);
  if (llt.info() != Eigen::Success) throw SolverError("restricted_half_logdet: not positive definite");
  return llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace rsd
