#pragma once
// Shared fixtures and dense reference computations for the unit tests.

#include "nsync/model.hpp"
#include "nsync/sampling.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace testing {

using nsync::Box;
using nsync::Matrix;
using nsync::Vector;

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

inline Box box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  return Box{vec(lo), vec(hi)};
}

/// Constant unit-variance model with free correlation and drift mu = (theta, theta).
inline nsync::CoefficientModel rho_model(double rho0 = 0.5, double theta0 = 1.0,
                                         double rho_max = 0.8) {
  nsync::DiffusionSpec d;
  d.free = {"rho"};
  nsync::DriftSpec m;
  m.directions = {nsync::Vector2(1.0, 1.0)};
  nsync::ParamSpace space{box({-rho_max}, {rho_max}), box({-2.0}, {4.0}), vec({rho0}),
                          vec({theta0})};
  return nsync::make_constant_model(d, m, space, {1e-3, 1e3, rho_max});
}

/// sigma * Id diffusion with drift mu = (theta, theta).
inline nsync::CoefficientModel scale_model(double s0 = 1.0, double theta0 = 0.5) {
  nsync::DiffusionSpec d;
  d.free = {"scale"};
  nsync::DriftSpec m;
  m.directions = {nsync::Vector2(1.0, 1.0)};
  nsync::ParamSpace space{box({0.2}, {5.0}), box({-3.0}, {3.0}), vec({s0}), vec({theta0})};
  return nsync::make_constant_model(d, m, space, {1e-3, 1e3, 0.95});
}

/// (scale, rho) model with two free drift slopes.
inline nsync::CoefficientModel scale_rho_model(double s0, double rho0) {
  nsync::DiffusionSpec d;
  d.free = {"scale", "rho"};
  nsync::DriftSpec m;
  m.directions = {nsync::Vector2(1.0, 0.0), nsync::Vector2(0.0, 1.0)};
  nsync::ParamSpace space{box({0.2, -0.9}, {5.0, 0.9}), box({-3.0, -3.0}, {3.0, 3.0}),
                          vec({s0, rho0}), vec({0.5, -0.5})};
  return nsync::make_constant_model(d, m, space, {1e-3, 1e3, 0.9});
}

/// Dense S_n built entry by entry from interval intersections of a constant Sigma.
inline Matrix dense_covariance(const nsync::SamplingScheme& s, const nsync::Matrix2& sigma) {
  const int m = s.m();
  Matrix out = Matrix::Zero(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const auto ia = s.stacked_interval(a), ib = s.stacked_interval(b);
      const double len = std::max(0.0, std::min(ia.hi, ib.hi) - std::max(ia.lo, ib.lo));
      const int ca = s.stacked_coordinate(a) - 1, cb = s.stacked_coordinate(b) - 1;
      out(a, b) = sigma(ca, cb) * len;
    }
  }
  return out;
}

}  // namespace testing
