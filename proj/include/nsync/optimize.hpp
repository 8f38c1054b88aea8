#pragma once

#include "nsync/model.hpp"

#include <functional>
#include <vector>

namespace nsync {

struct OptimizerConfig {
  int grid_per_dim = 3;      // multistart points per dimension, at box quantiles (2k-1)/(2g)
  double xtol = 1e-8;        // simplex diameter, scaled by 1 + |x|
  double ftol = 1e-10;       // objective spread, scaled by 1 + |f|
  int max_evaluations = 2000;  // per start
  bool closed_form = true;   // use GLS for the drift stage when the drift is linear
  double boundary_tol = 1e-6;  // fraction of the box width counted as boundary contact

  void validate() const;
};

struct OptimizeResult {
  Vector x;
  double value = 0.0;
  bool converged = false;
  int evaluations = 0;
  std::vector<Vector> starts;
  std::vector<double> start_values;
};

using Objective = std::function<double(const Vector&)>;

/// Nelder-Mead maximization of f over the closed box; trial points are projected onto the
/// box and non-finite values count as -infinity.
OptimizeResult nelder_mead_max(const Objective& f, const Vector& x0, const Box& box,
                               const OptimizerConfig& cfg);

/// Runs nelder_mead_max from every point of the quantile grid and keeps the best.
OptimizeResult multistart_max(const Objective& f, const Box& box, const OptimizerConfig& cfg);

/// Per-coordinate flag: within boundary_tol * width of either edge.
std::vector<bool> boundary_contact(const Vector& x, const Box& box, double tol);

}  // namespace nsync
