#pragma once

#include "nsync/asymptotics.hpp"
#include "nsync/constants.hpp"
#include "nsync/gaussian.hpp"
#include "nsync/optimize.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nsync {

/// Observed data with its scheme and overlap matrix.
struct Observation {
  const SamplingScheme& scheme;
  const OverlapMatrix& overlap;
  const Vector& dx;
};

/// H_n^1(sigma) = -1/2 dX' S^{-1} dX - 1/2 log det S; -infinity when S is not PD.
double h1(const Vector& sigma, const Observation& obs, const CoefficientModel& model);

/// H_n^2(theta) = -1/2 (dX - dV(theta))' S(sigma_hat)^{-1} (dX - dV(theta)).
double h2(const Vector& theta, const CovarianceOperator& s_hat, const Observation& obs,
          const CoefficientModel& model);

struct StageResult {
  Vector x;
  double value = 0.0;
  bool converged = false;
  int evaluations = 0;
  std::string method;
  std::vector<bool> boundary;
  std::vector<Vector> starts;
  std::vector<double> start_values;
  std::string warning;
};

StageResult maximize_h1(const Observation& obs, const CoefficientModel& model,
                        const OptimizerConfig& cfg);

/// Closed-form GLS argmax for a drift linear in theta, unprojected; empty when the normal
/// matrix is singular.
std::optional<Vector> gls_theta(const CovarianceOperator& s_hat, const Observation& obs,
                                const CoefficientModel& model);

/// GLS projected to the box for linear drifts (simplex fallback when singular), otherwise a
/// multistart simplex search. Uses one factorization of S(sigma_hat) throughout.
StageResult maximize_h2(const CovarianceOperator& s_hat, const Observation& obs,
                        const CoefficientModel& model, const OptimizerConfig& cfg);

struct EstimateReport {
  Vector sigma_hat, theta_hat;
  StageResult stage1, stage2;

  // Plug-in covariance Gamma1^{-1}/n and Gamma2^{-1}/T_n at the estimates (needs constants).
  std::optional<Matrix> gamma1, gamma2;
  std::optional<Matrix> cov_sigma_plugin, cov_theta_plugin;
  // Inverse negative finite-difference Hessians of H1 and H2.
  std::optional<Matrix> cov_sigma_observed, cov_theta_observed;
  // 95% intervals, one row per coordinate: plug-in when available, else observed.
  Matrix ci_sigma, ci_theta;
  std::string ci_source;

  long n = 0;
  double h_n = 0.0;
  int m1 = 0, m2 = 0;
  double r_n = 0.0;
  double rho_bar = 0.0;
  std::vector<std::string> warnings;

  Vector se_sigma() const;  // plug-in if present, else observed; NaN when neither exists
  Vector se_theta() const;
};

EstimateReport estimate(const Observation& obs, const CoefficientModel& model,
                        const OptimizerConfig& cfg, const SchemeConstants* constants,
                        const AveragingOptions& averaging = {});

/// Hessian by central differences, step 1e-4 (1 + |x|), stencil shifted inward at box edges.
Matrix fd_hessian(const Objective& f, const Vector& x, const Box& box);

/// Sum over overlapping pairs of Delta_i^1 X Delta_j^2 X.
double hayashi_yoshida(const Vector& dx, const OverlapMatrix& overlap);

}  // namespace nsync
