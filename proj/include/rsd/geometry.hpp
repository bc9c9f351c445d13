#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "rsd/linalg.hpp"

namespace rsd {

enum class SetKind { Ball, Ellipsoid, Hyperrectangle, GaugeDefined };

std::string to_string(SetKind kind);

/// A balanced, symmetric convex body K in R^d with B(0, r) in K in B(0, R).
///
/// Ball, Ellipsoid and Hyperrectangle are orthosymmetric and carry closed-form
/// gauges. GaugeDefined bodies supply either an exact gauge or a monotone
/// membership test; in the latter case the gauge is found by bisection.
struct ConstraintSet {
  SetKind kind = SetKind::Ball;
  int dim = 0;
  double radius = 1.0;  // Ball and lp_ball
  VectorXd axes;        // Ellipsoid semi-axes or Hyperrectangle half-widths
  std::function<double(const VectorXd&)> gauge_fn;  // GaugeDefined, exact gauge
  std::function<bool(const VectorXd&)> member_fn;   // GaugeDefined, membership
  double inner = 0.0;  // r, GaugeDefined only
  double outer = 0.0;  // R, GaugeDefined only
  std::optional<double> lp_p;  // set by lp_ball()
  std::optional<double> t2_estimate;

  static ConstraintSet ball(int d, double radius = 1.0);
  static ConstraintSet ellipsoid(VectorXd semi_axes);
  static ConstraintSet hyperrectangle(VectorXd half_widths);
  static ConstraintSet gauge_defined(int d, std::function<double(const VectorXd&)> gauge,
                                     double r, double R);
  static ConstraintSet membership_defined(int d, std::function<bool(const VectorXd&)> member,
                                          double r, double R);
  /// {theta : ||theta||_p <= radius}, p >= 1 (p = infinity allowed).
  static ConstraintSet lp_ball(int d, double p, double radius = 1.0);

  /// Radius of the largest centred ball inside K.
  double inner_radius() const;
  /// Radius of the smallest centred ball containing K.
  double outer_radius() const;
  bool orthosymmetric() const { return kind != SetKind::GaugeDefined; }
};

/// Result of maximising theta' X theta over K.
struct QuadMaxResult {
  VectorXd maximizer;
  double value = 0.0;
  double kappa = 1.0;  // value >= max / kappa
};

inline constexpr double kFeasTol = 1e-8;

/// Declared approximation factors of quad_max_oracle, measured against
/// quad_max_bruteforce on the calibration suite in tests/ (worst ratios 1.000
/// and 1.038 over 1000 random X, d <= 12) and padded by 1.5.
inline constexpr double kHyperrectangleKappa = 1.5;
inline constexpr double kGaugeDefinedKappa = 1.56;

/// inf{t >= 0 : theta in tK}; +infinity if a membership-defined body never
/// contains theta / t for t up to ||theta|| / r.
double gauge_eval(const ConstraintSet& k, const VectorXd& theta);
bool contains(const ConstraintSet& k, const VectorXd& theta, double tol = kFeasTol);

/// Exact maximiser for Ball and Ellipsoid: the top eigenpair of D X D.
QuadMaxResult quad_max_exact(const ConstraintSet& k, const MatrixXd& x);

/// Approximate maximiser for every kind; exact dispatch where available.
QuadMaxResult quad_max_oracle(const ConstraintSet& k, const MatrixXd& x);

/// Reference lower bound on the maximum: gauge-normalised random directions,
/// plus every vertex of a Hyperrectangle with d <= 12. Never below 0.
double quad_max_bruteforce(const ConstraintSet& k, const MatrixXd& x, int samples,
                           std::uint64_t seed);

/// Order of the type-2 constant T2(K); metadata only.
double type2_constant_estimate(const ConstraintSet& k);

double declared_kappa(const ConstraintSet& k);

/// Samples unit directions and checks 1/R <= gauge <= 1/r (relative tol).
bool check_balanced(const ConstraintSet& k, int samples, std::uint64_t seed, double tol = 1e-9);

nlohmann::json to_json(const ConstraintSet& k);
/// Accepts kinds ball, ellipsoid, hyperrectangle, lp_ball. An ellipsoid may
/// give "axes" explicitly or "dim" with "axes_exponent" (a_j = scale * j^e).
ConstraintSet constraint_from_json(const nlohmann::json& j);

}  // namespace rsd
