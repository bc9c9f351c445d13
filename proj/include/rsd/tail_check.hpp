#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsd/linalg.hpp"

namespace rsd {

enum class TailLemma { HansonWright, OpNormCov, OpNormGram, WeightedCov };

std::string to_string(TailLemma l);
TailLemma tail_lemma_from_string(const std::string& s);

/// Matrix of the Hanson-Wright quadratic form.
enum class HwMatrix { Identity, Zero, Projection };

struct TailParams {
  int d = 20;
  int k = 0;               // tr(Sigma); 0 means d / 2 (at least 1)
  double delta = 0.05;
  double epsilon = 0.05;   // WeightedCov weight budget eps * n
  int n = 0;               // 0 selects the default grid
  HwMatrix hw_matrix = HwMatrix::Identity;
  bool parallel = true;
};

struct TailRow {
  double param = 0.0;      // t for HansonWright, n otherwise
  double bound = 0.0;      // bound at the fitted constant
  double exceedance = 0.0; // holdout frequency above `bound`
  double allowed = 0.0;    // level plus Monte-Carlo margin
};

struct TailReport {
  TailLemma lemma = TailLemma::HansonWright;
  int trials = 0;
  double fitted_constant = 0.0;
  double reference_constant = 0.0;  // HansonWright: smallest acceptable c; others: largest acceptable C
  double level = 0.0;
  std::vector<TailRow> rows;
  // HansonWright only: exact chi^2 tail against the empirical one at t = 3 sqrt(2d).
  double exact_tail = 0.0;
  double empirical_tail = 0.0;
  bool exact_ok = true;
  bool pass = false;
};

nlohmann::json to_json(const TailReport& r);

/// Simulates the random quantity of one concentration lemma. The constant is
/// fitted on the first half of the trials and the bound is checked on the
/// second half.
TailReport empirical_tail_check(TailLemma lemma, const TailParams& params, int trials, std::uint64_t seed);

/// max over omega in [0,1]^n with |omega|_1 <= m of ||sum omega_i x_i x_i^T||_2,
/// by alternating maximization from several starts (a lower bound).
double weighted_cov_norm(const MatrixXd& x, double m);

}  // namespace rsd
