#pragma once

// Reference computations used only by tests. Each one is derived
// independently of the library code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

/// min over {sum x = d - k, 0 <= x <= 1} of max_i a_i^2 x_i. At the optimum
/// every coordinate with x_i < 1 has a_i^2 x_i = L, so L solves
/// sum_i min(1, L / a_i^2) = d - k; the left side is increasing in L.
inline double water_filling(const std::vector<double>& a, int k) {
  const int d = static_cast<int>(a.size());
  const double target = d - k;
  if (target <= 0.0) return 0.0;
  auto mass = [&](double l) {
    double s = 0.0;
    for (double ai : a) s += std::min(1.0, l / (ai * ai));
    return s;
  };
  double lo = 0.0, hi = 0.0;
  for (double ai : a) hi = std::max(hi, ai * ai);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

/// Exact Kolmogorov k-width of an axis-aligned ellipsoid: the (k+1)-th
/// largest semi-axis, zero once k reaches d.
inline double pca_width(std::vector<double> a, int k) {
  std::sort(a.begin(), a.end(), std::greater<>());
  return k < static_cast<int>(a.size()) ? a[k] : 0.0;
}

/// Regularized lower incomplete gamma P(s, x) by its power series (x < s + 1)
/// or the Lentz continued fraction for Q (otherwise).
inline double gamma_p(double s, double x) {
  if (x <= 0.0) return 0.0;
  const double log_pre = s * std::log(x) - x - std::lgamma(s);
  if (x < s + 1.0) {
    double term = 1.0 / s, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (s + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return std::exp(log_pre) * sum;
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - s, c = 1.0 / tiny, dd = 1.0 / b, h = dd;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    dd = an * dd + b;
    if (std::abs(dd) < tiny) dd = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    dd = 1.0 / dd;
    const double delta = dd * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_pre) * h;
}

inline double chi2_cdf(double x, double k) { return gamma_p(0.5 * k, 0.5 * x); }

inline double chi2_quantile(double p, double k) {
  double lo = 0.0, hi = k + 20.0 * std::sqrt(2.0 * k) + 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(mid, k) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// log of n^n / ((n+1)^{(n+1)/2} (n-1)^{(n-1)/2}).
inline double central_cut_log_ratio(int n) {
  const double x = n;
  return x * std::log(x) - 0.5 * (x + 1.0) * std::log(x + 1.0) - 0.5 * (x - 1.0) * std::log(x - 1.0);
}

/// Pool-adjacent-violators fit of a non-increasing sequence; returns the
/// largest absolute residual.
inline double antitone_residual(const std::vector<double>& y) {
  std::vector<double> val, wt;
  std::vector<int> len;
  for (double v : y) {
    val.push_back(v);
    wt.push_back(1.0);
    len.push_back(1);
    while (val.size() > 1 && val[val.size() - 2] < val.back()) {
      const double w = wt[wt.size() - 2] + wt.back();
      const double m = (val[val.size() - 2] * wt[wt.size() - 2] + val.back() * wt.back()) / w;
      const int l = len[len.size() - 2] + len.back();
      val.pop_back(), wt.pop_back(), len.pop_back();
      val.back() = m, wt.back() = w, len.back() = l;
    }
  }
  double worst = 0.0;
  std::size_t i = 0;
  for (std::size_t b = 0; b < val.size(); ++b)
    for (int j = 0; j < len[b]; ++j, ++i) worst = std::max(worst, std::abs(y[i] - val[b]));
  return worst;
}

inline double monte_carlo_margin(double p, int trials) { return 3.0 * std::sqrt(p / trials); }

}  // namespace oracle
