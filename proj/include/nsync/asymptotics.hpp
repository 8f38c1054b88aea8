#pragma once

#include "nsync/constants.hpp"
#include "nsync/model.hpp"
#include "nsync/sampling.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nsync {

struct SeriesValue {
  double value = 0.0;
  double tail_bound = 0.0;  // bound on the neglected terms p > p_max, using a_p <= a_1
};

/// A(rho) = sum_{p>=1} a_p rho^{2p} (order 0) or its rho-derivative (order 1), truncated at
/// the constants' p_max.
SeriesValue a_series(double rho, const SchemeConstants& c, int derivative_order = 0);

/// How time averages of the limit integrands are taken.
struct AveragingOptions {
  double t_avg = 100.0;  // horizon for models without constant or periodic structure
};

struct LimitMatrix {
  Matrix value;
  std::string policy;          // "pointwise", "period" or "numeric [0, T]"
  double tail_bound = 0.0;     // series truncation bound at the evaluation point
  double averaging_gap = 0.0;  // max |avg[0, T/2] - avg[0, T]| for numeric averaging
};

/// Information for sigma per observation count n, evaluated at sigma0. Positive-definite
/// orientation; throws NumericError with the smallest eigenvalue when it is not PD.
LimitMatrix gamma1(const CoefficientModel& model, const SchemeConstants& c, const Vector& sigma0,
                   const AveragingOptions& opts = {});
/// Information for theta per unit time T_n, evaluated at (sigma0, theta0).
LimitMatrix gamma2(const CoefficientModel& model, const SchemeConstants& c, const Vector& sigma0,
                   const Vector& theta0, const AveragingOptions& opts = {});

/// Limit of n^{-1}(H1(sigma) - H1(sigma0)); zero at sigma0 and negative elsewhere.
double y1(const Vector& sigma, const CoefficientModel& model, const SchemeConstants& c,
          const Vector& sigma0, const AveragingOptions& opts = {});
/// Limit of T_n^{-1}(H2(theta) - H2(theta0)).
double y2(const Vector& theta, const CoefficientModel& model, const SchemeConstants& c,
          const Vector& sigma0, const Vector& theta0, const AveragingOptions& opts = {});

/// Symmetric inverse square root; throws NumericError naming `what` when not PD.
Matrix inverse_sqrt(const Matrix& m, const std::string& what);
/// blockdiag(n^{-1/2} Gamma1^{-1/2}, T_n^{-1/2} Gamma2^{-1/2}).
Matrix epsilon_n(long n, double h_n, const Matrix& gamma1, const Matrix& gamma2);

struct LanOptions {
  Vector u;
  long n = 2000;
  double h_n = 0.0;
  int replications = 400;
  std::uint64_t seed = 1;
  int workers = 1;
  AveragingOptions averaging;
};

struct LanSummary {
  std::vector<double> log_ratios;
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;
  double reference_mean = 0.0;      // -|u|^2 / 2
  double reference_variance = 0.0;  // |u|^2
  Matrix gamma1, gamma2, epsilon;
  Vector alpha0, alpha1;            // (sigma, theta) stacked, before and after the shift
};

/// Exact Gaussian log-likelihood ratio log p(dX; alpha0 + eps_n u) - log p(dX; alpha0) under
/// alpha0, over independent schemes and paths.
LanSummary lan_experiment(const CoefficientModel& model, const SchemeGenerator& generator,
                          const SchemeConstants& c, const LanOptions& opts);

}  // namespace nsync
