#include "nsync/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nsync {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kZ975 = 1.959963984540054;

std::optional<Matrix> inverse_if_pd(const Matrix& m) {
  const Matrix s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) return std::nullopt;
  return Matrix(eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                eig.eigenvectors().transpose());
}

Matrix intervals(const Vector& est, const Vector& se) {
  Matrix ci(est.size(), 2);
  ci.col(0) = est - kZ975 * se;
  ci.col(1) = est + kZ975 * se;
  return ci;
}

Vector diag_sqrt(const Matrix& cov) { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

StageResult from_optimizer(OptimizeResult r, std::string method, const Box& box, double tol) {
  StageResult s;
  s.x = std::move(r.x);
  s.value = r.value;
  s.converged = r.converged;
  s.evaluations = r.evaluations;
  s.method = std::move(method);
  s.boundary = boundary_contact(s.x, box, tol);
  s.starts = std::move(r.starts);
  s.start_values = std::move(r.start_values);
  return s;
}

}  // namespace

double h1(const Vector& sigma, const Observation& obs, const CoefficientModel& model) {
  try {
    const CovarianceOperator op(obs.scheme, obs.overlap, model, sigma);
    return -0.5 * op.quad_form(obs.dx) - 0.5 * op.logdet();
  } catch (const NotPositiveDefinite&) {
    return kNegInf;
  }
}

double h2(const Vector& theta, const CovarianceOperator& s_hat, const Observation& obs,
          const CoefficientModel& model) {
  return -0.5 * s_hat.quad_form(obs.dx - drift_increments(obs.scheme, model, theta));
}

StageResult maximize_h1(const Observation& obs, const CoefficientModel& model,
                        const OptimizerConfig& cfg) {
  if (obs.dx.size() != obs.scheme.m()) throw ContractError("increment vector length must be M");
  const Box& box = model.space().sigma;
  auto f = [&](const Vector& s) { return h1(s, obs, model); };
  return from_optimizer(multistart_max(f, box, cfg), "simplex", box, cfg.boundary_tol);
}

std::optional<Vector> gls_theta(const CovarianceOperator& s_hat, const Observation& obs,
                                const CoefficientModel& model) {
  const Box& box = model.space().theta;
  const Vector center = 0.5 * (box.lower + box.upper);
  const Vector base = drift_increments(obs.scheme, model, center);
  const Eigen::Index d2 = box.dim();
  // Design columns: exact for a drift linear in theta.
  Matrix design(obs.scheme.m(), d2);
  Matrix solved(obs.scheme.m(), d2);
  for (Eigen::Index k = 0; k < d2; ++k) {
    Vector t = center;
    const double step = 0.5 * box.width()[k];
    t[k] += step;
    design.col(k) = (drift_increments(obs.scheme, model, t) - base) / step;
    solved.col(k) = s_hat.solve(design.col(k));
  }
  const Matrix normal = design.transpose() * solved;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (normal + normal.transpose()));
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * top) return std::nullopt;
  const Vector rhs = solved.transpose() * (obs.dx - base);
  return Vector(center + normal.ldlt().solve(rhs));
}

StageResult maximize_h2(const CovarianceOperator& s_hat, const Observation& obs,
                        const CoefficientModel& model, const OptimizerConfig& cfg) {
  const Box& box = model.space().theta;
  auto f = [&](const Vector& t) { return h2(t, s_hat, obs, model); };
  std::string warning;
  if (model.drift_linear() && cfg.closed_form) {
    if (const auto theta = gls_theta(s_hat, obs, model)) {
      StageResult s;
      s.x = box.clamp(*theta);
      s.value = f(s.x);
      s.converged = true;
      s.evaluations = 1;
      s.method = s.x == *theta ? "gls" : "gls-projected";
      s.boundary = boundary_contact(s.x, box, cfg.boundary_tol);
      return s;
    }
    warning = "singular GLS normal matrix; fell back to simplex search";
  }
  StageResult s = from_optimizer(multistart_max(f, box, cfg), "simplex", box, cfg.boundary_tol);
  s.warning = warning;
  return s;
}

Matrix fd_hessian(const Objective& f, const Vector& x, const Box& box) {
  const Eigen::Index d = x.size();
  Vector h(d), c(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    h[k] = 1e-4 * (1.0 + std::abs(x[k]));
    c[k] = std::clamp(x[k], box.lower[k] + h[k], box.upper[k] - h[k]);
  }
  auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    Vector y = c;
    y[i] += si * h[i];
    y[j] += sj * h[j];
    return f(y);
  };
  const double f0 = f(c);
  Matrix hess(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Vector up = c, dn = c;
    up[i] += h[i];
    dn[i] -= h[i];
    hess(i, i) = (f(up) - 2.0 * f0 + f(dn)) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) /
                       (4.0 * h[i] * h[j]);
      hess(i, j) = hess(j, i) = v;
    }
  }
  return hess;
}

EstimateReport estimate(const Observation& obs, const CoefficientModel& model,
                        const OptimizerConfig& cfg, const SchemeConstants* constants,
                        const AveragingOptions& averaging) {
  cfg.validate();
  EstimateReport rep;
  rep.n = obs.scheme.n();
  rep.h_n = obs.scheme.h_n();
  rep.m1 = obs.scheme.m1();
  rep.m2 = obs.scheme.m2();
  rep.r_n = max_gap(obs.scheme);

  try {
    rep.stage1 = maximize_h1(obs, model, cfg);
  } catch (const Error& e) {
    throw EstimationError(std::string("stage 1 (sigma): ") + e.what());
  }
  rep.sigma_hat = rep.stage1.x;
  std::optional<CovarianceOperator> s_hat;
  try {
    s_hat.emplace(obs.scheme, obs.overlap, model, rep.sigma_hat);
    rep.stage2 = maximize_h2(*s_hat, obs, model, cfg);
  } catch (const Error& e) {
    throw EstimationError(std::string("stage 2 (theta): ") + e.what());
  }
  rep.theta_hat = rep.stage2.x;
  if (!rep.stage2.warning.empty()) rep.warnings.push_back(rep.stage2.warning);
  rep.rho_bar = rho_bar(obs.scheme, obs.overlap, model, rep.sigma_hat);

  const Box& sbox = model.space().sigma;
  const Box& tbox = model.space().theta;
  const Matrix hs = fd_hessian([&](const Vector& s) { return h1(s, obs, model); }, rep.sigma_hat, sbox);
  if (hs.allFinite()) rep.cov_sigma_observed = inverse_if_pd(-hs);
  if (!rep.cov_sigma_observed) rep.warnings.push_back("observed information for sigma is not PD");
  const Matrix ht =
      fd_hessian([&](const Vector& t) { return h2(t, *s_hat, obs, model); }, rep.theta_hat, tbox);
  if (ht.allFinite()) rep.cov_theta_observed = inverse_if_pd(-ht);
  if (!rep.cov_theta_observed) rep.warnings.push_back("observed information for theta is not PD");

  if (constants) {
    try {
      const double n = static_cast<double>(rep.n);
      const double horizon = obs.scheme.horizon();
      rep.gamma1 = gamma1(model, *constants, rep.sigma_hat, averaging).value;
      rep.gamma2 = gamma2(model, *constants, rep.sigma_hat, rep.theta_hat, averaging).value;
      rep.cov_sigma_plugin = Matrix(rep.gamma1->inverse() / n);
      rep.cov_theta_plugin = Matrix(rep.gamma2->inverse() / horizon);
    } catch (const Error& e) {
      rep.warnings.push_back(std::string("plug-in covariance unavailable: ") + e.what());
      rep.gamma1.reset();
      rep.gamma2.reset();
      rep.cov_sigma_plugin.reset();
      rep.cov_theta_plugin.reset();
    }
  }
  rep.ci_source = rep.cov_sigma_plugin ? "plug-in" : "observed";
  rep.ci_sigma = intervals(rep.sigma_hat, rep.se_sigma());
  rep.ci_theta = intervals(rep.theta_hat, rep.se_theta());
  return rep;
}

Vector EstimateReport::se_sigma() const {
  if (cov_sigma_plugin) return diag_sqrt(*cov_sigma_plugin);
  if (cov_sigma_observed) return diag_sqrt(*cov_sigma_observed);
  return Vector::Constant(sigma_hat.size(), std::numeric_limits<double>::quiet_NaN());
}

Vector EstimateReport::se_theta() const {
  if (cov_theta_plugin) return diag_sqrt(*cov_theta_plugin);
  if (cov_theta_observed) return diag_sqrt(*cov_theta_observed);
  return Vector::Constant(theta_hat.size(), std::numeric_limits<double>::quiet_NaN());
}

double hayashi_yoshida(const Vector& dx, const OverlapMatrix& overlap) {
  if (dx.size() != overlap.m1 + overlap.m2)
    throw ContractError("increment vector length must be M1 + M2");
  const auto rows = overlap.g.row_index();
  const auto cols = overlap.g.col_index();
  double s = 0.0;
  for (std::size_t e = 0; e < rows.size(); ++e) s += dx[rows[e]] * dx[overlap.m1 + cols[e]];
  return s;
}

}  // namespace nsync
