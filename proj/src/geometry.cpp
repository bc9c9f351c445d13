#include "rsd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "rsd/rng.hpp"

namespace rsd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_dim(const ConstraintSet& k, Eigen::Index n, const char* what) {
  if (n != k.dim) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

void require_symmetric(const ConstraintSet& k, const MatrixXd& x, const char* what) {
  if (x.rows() != k.dim || x.cols() != k.dim)
    throw std::invalid_argument(std::string(what) + ": matrix dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
  const double scale = 1.0 + x.cwiseAbs().maxCoeff();
  if (asymmetry(x) > 1e-9 * scale) throw std::invalid_argument(std::string(what) + ": matrix not symmetric");
}

VectorXd scale_vector(const ConstraintSet& k) {
  if (k.kind == SetKind::Ball) return VectorXd::Constant(k.dim, k.radius);
  return k.axes;
}

void canonical_sign(VectorXd& v) {
  Eigen::Index i;
  v.cwiseAbs().maxCoeff(&i);
  if (v(i) < 0) v = -v;
}

QuadMaxResult zero_result(int d) { return QuadMaxResult{VectorXd::Zero(d), 0.0, 1.0}; }

double quad(const MatrixXd& x, const VectorXd& t) { return t.dot(x * t); }

// Coordinate ascent for max s'Ms over the cube [-1, 1]^d with exact 1-D steps.
double cube_ascent(const MatrixXd& m, VectorXd& s) {
  const int d = static_cast<int>(m.rows());
  VectorXd ms = m * s;
  double f = s.dot(ms);
  for (int sweep = 0; sweep < 200; ++sweep) {
    bool moved = false;
    for (int i = 0; i < d; ++i) {
      const double mii = m(i, i);
      const double b = ms(i) - mii * s(i);  // sum over j != i of M_ij s_j
      auto g = [&](double t) { return mii * t * t + 2.0 * b * t; };
      double best_t = s(i), best_g = g(s(i));
      for (double t : {-1.0, 1.0}) {
        if (g(t) > best_g + 1e-14 * (1.0 + std::abs(best_g))) best_t = t, best_g = g(t);
      }
      if (mii < 0.0) {
        const double t = std::clamp(-b / mii, -1.0, 1.0);
        if (g(t) > best_g + 1e-14 * (1.0 + std::abs(best_g))) best_t = t, best_g = g(t);
      }
      if (best_t != s(i)) {
        ms += m.col(i) * (best_t - s(i));
        s(i) = best_t;
        moved = true;
      }
    }
    f = s.dot(ms);
    if (!moved) break;
  }
  return f;
}

QuadMaxResult hyperrectangle_oracle(const ConstraintSet& k, const MatrixXd& x) {
  const int d = k.dim;
  const MatrixXd m = k.axes.asDiagonal() * x * k.axes.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error("quad_max_oracle: eigensolver failed");

  std::vector<VectorXd> starts;
  for (int j = d - 1; j >= 0; --j) {
    VectorXd s = es.eigenvectors().col(j).unaryExpr([](double v) { return v < 0 ? -1.0 : 1.0; });
    starts.push_back(std::move(s));
  }
  for (int i = 0; i < d; ++i) {
    VectorXd s = m.col(i).unaryExpr([](double v) { return v < 0 ? -1.0 : 1.0; });
    s(i) = 1.0;
    starts.push_back(std::move(s));
  }

  double best = 0.0;
  VectorXd best_s = VectorXd::Zero(d);
  for (auto& s : starts) {
    const double f = cube_ascent(m, s);
    if (f > best) best = f, best_s = s;
  }
  QuadMaxResult r;
  r.maximizer = k.axes.cwiseProduct(best_s);
  r.value = best > 0.0 ? quad(x, r.maximizer) : 0.0;
  if (r.value <= 0.0) r = zero_result(d);
  r.kappa = kHyperrectangleKappa;
  return r;
}

// Directional objective u'Xu / gauge(u)^2; homogeneous of degree 0.
double directional(const ConstraintSet& k, const MatrixXd& x, const VectorXd& u) {
  const double g = gauge_eval(k, u);
  if (!(g > 0.0) || !std::isfinite(g)) return -kInf;
  return quad(x, u) / (g * g);
}

QuadMaxResult gauge_oracle(const ConstraintSet& k, const MatrixXd& x) {
  const int d = k.dim;
  std::vector<VectorXd> cands;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(x);
  if (es.info() != Eigen::Success) throw std::runtime_error("quad_max_oracle: eigensolver failed");
  for (int j = d - 1; j >= 0; --j) cands.push_back(es.eigenvectors().col(j));
  for (int i = 0; i < d; ++i) cands.push_back(VectorXd::Unit(d, i));
  Philox rng(0x6761756765ull);
  for (int s = 0; s < 4 * d + 16; ++s) {
    VectorXd u(d);
    for (int i = 0; i < d; ++i) u(i) = rng.normal();
    cands.push_back(u);
    VectorXd p = u;
    for (int it = 0; it < 8; ++it) {
      p = x * p;
      const double n = p.norm();
      if (n == 0.0) break;
      p /= n;
    }
    cands.push_back(p);
  }
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < static_cast<int>(cands.size()); ++i)
    scored.emplace_back(directional(k, x, cands[i]), i);
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  double best = 0.0;
  VectorXd best_u = VectorXd::Zero(d);
  const int climbs = std::min<int>(4, static_cast<int>(scored.size()));
  for (int c = 0; c < climbs; ++c) {
    VectorXd u = cands[scored[c].second].normalized();
    double f = scored[c].first;
    if (!std::isfinite(f)) continue;
    for (double step = 0.5; step > 1e-6; step *= 0.5) {
      bool improved = true;
      for (int sweep = 0; improved && sweep < 64; ++sweep) {
        improved = false;
        for (int i = 0; i < d; ++i) {
          for (double sgn : {1.0, -1.0}) {
            VectorXd v = u;
            v(i) += sgn * step;
            const double n = v.norm();
            if (n == 0.0) continue;
            v /= n;
            const double fv = directional(k, x, v);
            if (fv > f + 1e-15 * (1.0 + std::abs(f))) u = v, f = fv, improved = true;
          }
        }
      }
    }
    if (f > best) best = f, best_u = u;
  }
  if (best <= 0.0) {
    QuadMaxResult r = zero_result(d);
    r.kappa = kGaugeDefinedKappa;
    return r;
  }
  QuadMaxResult r;
  r.maximizer = best_u / gauge_eval(k, best_u);
  r.value = std::max(0.0, quad(x, r.maximizer));
  r.kappa = kGaugeDefinedKappa;
  return r;
}

}  // namespace

std::string to_string(SetKind kind) {
  switch (kind) {
    case SetKind::Ball: return "ball";
    case SetKind::Ellipsoid: return "ellipsoid";
    case SetKind::Hyperrectangle: return "hyperrectangle";
    case SetKind::GaugeDefined: return "gauge_defined";
  }
  return "unknown";
}

ConstraintSet ConstraintSet::ball(int d, double radius) {
  if (d < 1) throw std::invalid_argument("ball: dimension must be positive");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("ball: radius must be positive");
  ConstraintSet k;
  k.kind = SetKind::Ball;
  k.dim = d;
  k.radius = radius;
  return k;
}

ConstraintSet ConstraintSet::ellipsoid(VectorXd semi_axes) {
  if (semi_axes.size() < 1) throw std::invalid_argument("ellipsoid: empty axes");
  if (!semi_axes.allFinite() || semi_axes.minCoeff() <= 0.0)
    throw std::invalid_argument("ellipsoid: semi-axes must be positive");
  ConstraintSet k;
  k.kind = SetKind::Ellipsoid;
  k.dim = static_cast<int>(semi_axes.size());
  k.axes = std::move(semi_axes);
  return k;
}

ConstraintSet ConstraintSet::hyperrectangle(VectorXd half_widths) {
  if (half_widths.size() < 1) throw std::invalid_argument("hyperrectangle: empty half-widths");
  if (!half_widths.allFinite() || half_widths.minCoeff() <= 0.0)
    throw std::invalid_argument("hyperrectangle: half-widths must be positive");
  ConstraintSet k;
  k.kind = SetKind::Hyperrectangle;
  k.dim = static_cast<int>(half_widths.size());
  k.axes = std::move(half_widths);
  return k;
}

ConstraintSet ConstraintSet::gauge_defined(int d, std::function<double(const VectorXd&)> gauge,
                                           double r, double R) {
  if (d < 1 || !gauge) throw std::invalid_argument("gauge_defined: need d >= 1 and a gauge");
  if (!(r > 0.0) || !(r <= R) || !std::isfinite(R)) throw std::invalid_argument("gauge_defined: need 0 < r <= R < inf");
  ConstraintSet k;
  k.kind = SetKind::GaugeDefined;
  k.dim = d;
  k.gauge_fn = std::move(gauge);
  k.inner = r;
  k.outer = R;
  return k;
}

ConstraintSet ConstraintSet::membership_defined(int d, std::function<bool(const VectorXd&)> member,
                                                double r, double R) {
  if (d < 1 || !member) throw std::invalid_argument("membership_defined: need d >= 1 and a membership test");
  if (!(r > 0.0) || !(r <= R) || !std::isfinite(R)) throw std::invalid_argument("membership_defined: need 0 < r <= R < inf");
  ConstraintSet k;
  k.kind = SetKind::GaugeDefined;
  k.dim = d;
  k.member_fn = std::move(member);
  k.inner = r;
  k.outer = R;
  return k;
}

ConstraintSet ConstraintSet::lp_ball(int d, double p, double radius) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_ball: p must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("lp_ball: radius must be positive");
  const double e = std::isinf(p) ? 0.5 : 0.5 - 1.0 / p;  // ||.||_2 <= d^e ||.||_p for p >= 2
  const double ratio = std::pow(static_cast<double>(d), e);
  auto gauge = [p, radius](const VectorXd& t) {
    if (std::isinf(p)) return t.cwiseAbs().maxCoeff() / radius;
    return std::pow(t.cwiseAbs().array().pow(p).sum(), 1.0 / p) / radius;
  };
  ConstraintSet k = gauge_defined(d, gauge, radius * std::min(1.0, ratio), radius * std::max(1.0, ratio));
  k.lp_p = p;
  k.radius = radius;
  return k;
}

double ConstraintSet::inner_radius() const {
  switch (kind) {
    case SetKind::Ball: return radius;
    case SetKind::Ellipsoid:
    case SetKind::Hyperrectangle: return axes.minCoeff();
    case SetKind::GaugeDefined: return inner;
  }
  return inner;
}

double ConstraintSet::outer_radius() const {
  switch (kind) {
    case SetKind::Ball: return radius;
    case SetKind::Ellipsoid: return axes.maxCoeff();
    case SetKind::Hyperrectangle: return axes.norm();
    case SetKind::GaugeDefined: return outer;
  }
  return outer;
}

double gauge_eval(const ConstraintSet& k, const VectorXd& theta) {
  require_dim(k, theta.size(), "gauge_eval");
  switch (k.kind) {
    case SetKind::Ball: return theta.norm() / k.radius;
    case SetKind::Ellipsoid: return theta.cwiseQuotient(k.axes).norm();
    case SetKind::Hyperrectangle: return theta.cwiseQuotient(k.axes).cwiseAbs().maxCoeff();
    case SetKind::GaugeDefined: break;
  }
  if (k.gauge_fn) return k.gauge_fn(theta);
  const double n = theta.norm();
  if (n == 0.0) return 0.0;
  // gauge lies in [n / R, n / r]; membership of theta / t is monotone in t.
  double lo = n / k.outer, hi = n / k.inner;
  if (!k.member_fn(theta / hi)) return kInf;
  if (k.member_fn(theta / lo)) return lo;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (k.member_fn(theta / mid) ? hi : lo) = mid;
  }
  return hi;
}

bool contains(const ConstraintSet& k, const VectorXd& theta, double tol) {
  if (tol < 0.0) throw std::invalid_argument("contains: tol must be non-negative");
  return gauge_eval(k, theta) <= 1.0 + tol;
}

QuadMaxResult quad_max_exact(const ConstraintSet& k, const MatrixXd& x) {
  if (k.kind != SetKind::Ball && k.kind != SetKind::Ellipsoid)
    throw std::invalid_argument("quad_max_exact: only Ball and Ellipsoid are supported; use quad_max_oracle");
  require_symmetric(k, x, "quad_max_exact");
  if (x.isZero(0.0)) return zero_result(k.dim);
  const VectorXd a = scale_vector(k);
  MatrixXd m = a.asDiagonal() * x * a.asDiagonal();
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error("quad_max_exact: eigensolver failed");
  const double top = es.eigenvalues()(k.dim - 1);
  if (top <= 0.0) return zero_result(k.dim);
  VectorXd u = es.eigenvectors().col(k.dim - 1);
  canonical_sign(u);
  return QuadMaxResult{a.cwiseProduct(u), top, 1.0};
}

QuadMaxResult quad_max_oracle(const ConstraintSet& k, const MatrixXd& x) {
  require_symmetric(k, x, "quad_max_oracle");
  switch (k.kind) {
    case SetKind::Ball:
    case SetKind::Ellipsoid: return quad_max_exact(k, x);
    case SetKind::Hyperrectangle: return hyperrectangle_oracle(k, x);
    case SetKind::GaugeDefined: return gauge_oracle(k, x);
  }
  throw std::logic_error("quad_max_oracle: unknown kind");
}

double quad_max_bruteforce(const ConstraintSet& k, const MatrixXd& x, int samples, std::uint64_t seed) {
  require_symmetric(k, x, "quad_max_bruteforce");
  const int d = k.dim;
  double best = 0.0;
  Philox rng(seed, 0x62727574ull);
  VectorXd u(d);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < d; ++i) u(i) = rng.normal();
    const double g = gauge_eval(k, u);
    if (!(g > 0.0) || !std::isfinite(g)) continue;
    best = std::max(best, quad(x, u) / (g * g));
  }
  if (k.kind == SetKind::Hyperrectangle && d <= 12) {
    VectorXd t(d);
    for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
      for (int i = 0; i < d; ++i) t(i) = ((mask >> i) & 1u) ? k.axes(i) : -k.axes(i);
      best = std::max(best, quad(x, t));
    }
  }
  return best;
}

double type2_constant_estimate(const ConstraintSet& k) {
  if (k.t2_estimate) return *k.t2_estimate;
  const double d = k.dim;
  const double sqrt_log = std::sqrt(std::max(1.0, std::log(d)));
  switch (k.kind) {
    case SetKind::Ball: return 1.0;
    case SetKind::Ellipsoid:
    case SetKind::Hyperrectangle: return sqrt_log;
    case SetKind::GaugeDefined: break;
  }
  if (!k.lp_p) return sqrt_log;
  const double p = *k.lp_p;
  if (p <= 2.0) return std::pow(d, 1.0 / p - 0.5);
  return std::sqrt(std::max(1.0, std::min(p, std::log(d))));
}

double declared_kappa(const ConstraintSet& k) {
  switch (k.kind) {
    case SetKind::Ball:
    case SetKind::Ellipsoid: return 1.0;
    case SetKind::Hyperrectangle: return kHyperrectangleKappa;
    case SetKind::GaugeDefined: return kGaugeDefinedKappa;
  }
  return kGaugeDefinedKappa;
}

bool check_balanced(const ConstraintSet& k, int samples, std::uint64_t seed, double tol) {
  const double r = k.inner_radius(), R = k.outer_radius();
  if (!(r > 0.0) || !(r <= R) || !std::isfinite(R)) return false;
  Philox rng(seed, 0x62616cull);
  VectorXd u(k.dim);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < k.dim; ++i) u(i) = rng.normal();
    u.normalize();
    const double g = gauge_eval(k, u);
    if (g < (1.0 - tol) / R || g > (1.0 + tol) / r) return false;
  }
  return true;
}

nlohmann::json to_json(const ConstraintSet& k) {
  nlohmann::json j;
  j["dim"] = k.dim;
  switch (k.kind) {
    case SetKind::Ball:
      j["kind"] = "ball";
      j["radius"] = k.radius;
      break;
    case SetKind::Ellipsoid:
    case SetKind::Hyperrectangle:
      j["kind"] = to_string(k.kind);
      j["axes"] = std::vector<double>(k.axes.data(), k.axes.data() + k.axes.size());
      break;
    case SetKind::GaugeDefined:
      if (!k.lp_p) throw std::invalid_argument("to_json: callback-defined sets are not serialisable");
      j["kind"] = "lp_ball";
      j["p"] = std::isinf(*k.lp_p) ? nlohmann::json("inf") : nlohmann::json(*k.lp_p);
      j["radius"] = k.radius;
      break;
  }
  if (k.t2_estimate) j["t2_estimate"] = *k.t2_estimate;
  return j;
}

ConstraintSet constraint_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("constraint: expected an object");
  if (!j.contains("kind")) throw std::invalid_argument("constraint.kind: missing");
  const std::string kind = j.at("kind").get<std::string>();
  std::set<std::string> allowed{"kind", "dim", "t2_estimate"};
  if (kind == "ball") allowed.insert("radius");
  else if (kind == "ellipsoid") allowed.insert({"axes", "axes_exponent", "scale"});
  else if (kind == "hyperrectangle") allowed.insert("axes");
  else if (kind == "lp_ball") allowed.insert({"p", "radius"});
  else throw std::invalid_argument("constraint.kind: unknown kind '" + kind + "'");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw std::invalid_argument("constraint." + it.key() + ": unknown key");

  auto read_axes = [&]() {
    if (j.contains("axes")) {
      const auto v = j.at("axes").get<std::vector<double>>();
      if (j.contains("dim") && j.at("dim").get<int>() != static_cast<int>(v.size()))
        throw std::invalid_argument("constraint.dim: does not match axes length");
      return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    if (kind == "ellipsoid" && j.contains("axes_exponent") && j.contains("dim")) {
      const int d = j.at("dim").get<int>();
      if (d < 1) throw std::invalid_argument("constraint.dim: must be positive");
      const double e = j.at("axes_exponent").get<double>();
      const double s = j.value("scale", 1.0);
      VectorXd a(d);
      for (int i = 0; i < d; ++i) a(i) = s * std::pow(i + 1.0, e);
      return a;
    }
    throw std::invalid_argument("constraint.axes: missing");
  };
  auto read_dim = [&]() {
    if (!j.contains("dim")) throw std::invalid_argument("constraint.dim: missing");
    const int d = j.at("dim").get<int>();
    if (d < 1) throw std::invalid_argument("constraint.dim: must be positive");
    return d;
  };

  ConstraintSet k;
  if (kind == "ball") {
    k = ConstraintSet::ball(read_dim(), j.value("radius", 1.0));
  } else if (kind == "ellipsoid") {
    k = ConstraintSet::ellipsoid(read_axes());
  } else if (kind == "hyperrectangle") {
    k = ConstraintSet::hyperrectangle(read_axes());
  } else {
    if (!j.contains("p")) throw std::invalid_argument("constraint.p: missing");
    const auto& pj = j.at("p");
    const double p = pj.is_string() && pj.get<std::string>() == "inf" ? kInf : pj.get<double>();
    k = ConstraintSet::lp_ball(read_dim(), p, j.value("radius", 1.0));
  }
  if (j.contains("t2_estimate")) {
    const double t = j.at("t2_estimate").get<double>();
    if (!(t > 0.0)) throw std::invalid_argument("constraint.t2_estimate: must be positive");
    k.t2_estimate = t;
  }
  return k;
}

}  // namespace rsd
