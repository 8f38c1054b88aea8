#include "nsync/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nsync {

void OptimizerConfig::validate() const {
  if (grid_per_dim < 1) throw ConfigError("optimizer: grid resolution must be >= 1");
  if (!(xtol > 0.0) || !(ftol > 0.0)) throw ConfigError("optimizer: tolerances must be positive");
  if (max_evaluations < 1) throw ConfigError("optimizer: max evaluations must be >= 1");
  if (!(boundary_tol > 0.0)) throw ConfigError("optimizer: boundary tolerance must be positive");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimizes g = -f; non-finite values become +inf so the simplex moves away from them.
struct Negated {
  const Objective& f;
  int count = 0;
  double operator()(const Vector& x) {
    ++count;
    const double v = f(x);
    return std::isfinite(v) ? -v : kInf;
  }
};

}  // namespace

OptimizeResult nelder_mead_max(const Objective& f, const Vector& x0, const Box& box,
                               const OptimizerConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = box.dim();
  if (x0.size() != d) throw ContractError("start point dimension does not match the box");
  Negated g{f};
  std::vector<Vector> v(static_cast<std::size_t>(d) + 1);
  std::vector<double> fv(v.size());
  v[0] = box.clamp(x0);
  for (Eigen::Index k = 0; k < d; ++k) {
    Vector y = v[0];
    const double step = 0.05 * box.width()[k];
    y[k] = y[k] + step <= box.upper[k] ? y[k] + step : y[k] - step;
    v[static_cast<std::size_t>(k) + 1] = y;
  }
  for (std::size_t k = 0; k < v.size(); ++k) fv[k] = g(v[k]);

  std::vector<std::size_t> order(v.size());
  bool converged = false;
  while (g.count < cfg.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k)
      diameter = std::max(diameter, (v[k] - v[best]).lpNorm<Eigen::Infinity>());
    const double xscale = 1.0 + v[best].lpNorm<Eigen::Infinity>();
    const bool finite = std::isfinite(fv[worst]);
    const double spread = finite ? fv[worst] - fv[best] : kInf;
    const double fscale = 1.0 + (std::isfinite(fv[best]) ? std::abs(fv[best]) : 0.0);
    if (diameter <= cfg.xtol * xscale && spread <= cfg.ftol * fscale) {
      converged = true;
      break;
    }
    if (diameter == 0.0) break;  // collapsed simplex, cannot move any more

    Vector centroid = Vector::Zero(d);
    for (std::size_t k = 0; k < v.size(); ++k)
      if (k != worst) centroid += v[k];
    centroid /= static_cast<double>(d);

    const Vector xr = box.clamp(centroid + (centroid - v[worst]));
    const double fr = g(xr);
    if (fr < fv[best]) {
      const Vector xe = box.clamp(centroid + 2.0 * (centroid - v[worst]));
      const double fe = g(xe);
      if (fe < fr) {
        v[worst] = xe;
        fv[worst] = fe;
      } else {
        v[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      v[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                              : Vector(centroid + 0.5 * (v[worst] - centroid));
    const double fc = g(xc);
    if (fc < (outside ? fr : fv[worst])) {
      v[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k == best) continue;
      v[k] = v[best] + 0.5 * (v[k] - v[best]);
      fv[k] = g(v[k]);
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  OptimizeResult out;
  out.x = v[static_cast<std::size_t>(it - fv.begin())];
  out.value = -*it;
  out.converged = converged;
  out.evaluations = g.count;
  return out;
}

OptimizeResult multistart_max(const Objective& f, const Box& box, const OptimizerConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = box.dim();
  const int g = cfg.grid_per_dim;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  OptimizeResult best;
  best.value = -kInf;
  bool have = false;
  int evaluations = 0;
  std::vector<Vector> starts;
  std::vector<double> start_values;
  for (;;) {
    Vector x0(d);
    for (Eigen::Index k = 0; k < d; ++k)
      x0[k] = box.lower[k] + box.width()[k] * (2.0 * idx[k] + 1.0) / (2.0 * g);
    starts.push_back(x0);
    const double v0 = f(x0);
    start_values.push_back(std::isfinite(v0) ? v0 : -kInf);
    OptimizeResult r = nelder_mead_max(f, x0, box, cfg);
    evaluations += r.evaluations + 1;
    if (std::isfinite(r.value) && (!have || r.value > best.value)) {
      best = std::move(r);
      have = true;
    }
    Eigen::Index k = 0;
    while (k < d && ++idx[k] == g) idx[k++] = 0;
    if (k == d) break;
  }
  if (!have) throw EstimationError("no start produced a finite objective value");
  best.evaluations = evaluations;
  best.starts = std::move(starts);
  best.start_values = std::move(start_values);
  return best;
}

std::vector<bool> boundary_contact(const Vector& x, const Box& box, double tol) {
  std::vector<bool> out(static_cast<std::size_t>(x.size()));
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double margin = tol * box.width()[k];
    out[static_cast<std::size_t>(k)] =
        x[k] - box.lower[k] <= margin || box.upper[k] - x[k] <= margin;
  }
  return out;
}

}  // namespace nsync
