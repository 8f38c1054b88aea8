#pragma once

#include "nsync/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nsync {

/// Axis-aligned parameter box. Interior is the open box; optimizers work on its closure.
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  bool contains_open(const Vector& x) const;
  bool contains_closed(const Vector& x, double slack = 1e-12) const;
  Vector clamp(const Vector& x) const;
  Vector width() const { return upper - lower; }
  void validate(const std::string& name) const;
};

struct ParamSpace {
  Box sigma;  // Theta_1, dimension d1
  Box theta;  // Theta_2, dimension d2
  std::optional<Vector> sigma_true;
  std::optional<Vector> theta_true;

  Eigen::Index d1() const { return sigma.dim(); }
  Eigen::Index d2() const { return theta.dim(); }
  void validate() const;
  const Vector& require_sigma_true() const;
  const Vector& require_theta_true() const;
};

enum class TimeStructure { constant, periodic, general };

enum class Component { c11, c22, c12 };

/// Declared ellipticity and correlation bounds (audited, not proven).
struct ModelBounds {
  double c1 = 1e-3;
  double c2 = 1e3;
  double rho_max = 0.95;
};

struct AuditReport {
  int probes = 0;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double max_abs_correlation = 0.0;
  double max_asymmetry = 0.0;
  bool ok = false;
  std::string message;
};

/// Deterministic drift mu_t(theta) and diffusion b_t(sigma) of a two-dimensional SDE.
/// Immutable after construction; every method is a pure function of its arguments.
class CoefficientModel {
 public:
  using DriftFn = std::function<Vector2(double t, const Vector& theta)>;
  using DiffusionFn = std::function<Matrix2(double t, const Vector& sigma)>;

  CoefficientModel(ParamSpace space, DriftFn drift, DiffusionFn diffusion, TimeStructure structure,
                   double period, bool drift_linear, ModelBounds bounds, std::string family = "user");

  const ParamSpace& space() const { return space_; }
  TimeStructure structure() const { return structure_; }
  double period() const { return period_; }
  bool drift_linear() const { return drift_linear_; }
  const ModelBounds& bounds() const { return bounds_; }
  const std::string& family() const { return family_; }

  Vector2 drift(double t, const Vector& theta) const;
  Matrix2 diffusion(double t, const Vector& sigma) const;

  /// b_t b_t^T(sigma).
  Matrix2 sigma_matrix(double t, const Vector& sigma) const;
  double local_correlation(double t, const Vector& sigma) const;

  /// Integral of one entry of Sigma_t(sigma) over the interval.
  double integrate_sigma(const Interval& iv, const Vector& sigma, Component c) const;
  /// Integral of mu^l_s(theta) over the interval (l in {1, 2}).
  double increment_drift(const Interval& iv, const Vector& theta, int l) const;

  /// Normalized drift deviation [Sigma_t(sigma0)]_ll^{-1/2} (mu^l_t(theta) - mu^l_t(theta0)).
  double phi(double t, const Vector& theta, int l) const;

  /// Randomized probe of the declared ellipticity/correlation bounds.
  AuditReport audit(int probes = 1000, std::uint64_t seed = 12345) const;
  /// Runs audit() and throws DomainError when a declared bound is violated.
  void validate(int probes = 1000) const;

  void check_sigma(const Vector& sigma) const;
  void check_theta(const Vector& theta) const;

 private:
  ParamSpace space_;
  DriftFn drift_;
  DiffusionFn diffusion_;
  TimeStructure structure_;
  double period_;
  bool drift_linear_;
  ModelBounds bounds_;
  std::string family_;
};

/// Central finite-difference step used for parameter derivatives of coefficients.
inline double fd_step(double x) { return 1e-5 * (1.0 + std::abs(x)); }

// ---------------------------------------------------------------------------
// Built-in families

/// Constant-in-time covariance Sigma = k^2 [[s1^2, rho s1 s2], [rho s1 s2, s2^2]].
/// `free` lists which of {"scale", "s1", "s2", "rho"} are taken from the sigma vector
/// (in that order of appearance); the rest stay at the fixed values given here.
struct DiffusionSpec {
  double scale = 1.0;
  double s1 = 1.0;
  double s2 = 1.0;
  double rho = 0.0;
  std::vector<std::string> free;
};

/// mu(theta) = intercept + sum_k theta_k * directions[k].
struct DriftSpec {
  Vector2 intercept = Vector2::Zero();
  std::vector<Vector2> directions;
};

/// Periodic modulation a + b sin(2 pi t / P) applied to the volatilities, the
/// correlation and the drift slope.
struct PeriodicSpec {
  double period = 1.0;
  double scale_amplitude = 0.0;
  double rho_amplitude = 0.0;
  double drift_amplitude = 0.0;
};

CoefficientModel make_constant_model(const DiffusionSpec& diffusion, const DriftSpec& drift,
                                     ParamSpace space, ModelBounds bounds);

CoefficientModel make_periodic_model(const DiffusionSpec& diffusion, const DriftSpec& drift,
                                     const PeriodicSpec& periodic, ParamSpace space,
                                     ModelBounds bounds);

}  // namespace nsync
