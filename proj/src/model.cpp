#include "nsync/model.hpp"

#include "nsync/quadrature.hpp"
#include "nsync/rng.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

namespace nsync {

bool Box::contains_open(const Vector& x) const {
  if (x.size() != dim()) return false;
  return ((x.array() > lower.array()) && (x.array() < upper.array())).all();
}

bool Box::contains_closed(const Vector& x, double slack) const {
  if (x.size() != dim()) return false;
  const Eigen::ArrayXd tol = slack * (1.0 + width().array().abs());
  return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
}

Vector Box::clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

void Box::validate(const std::string& name) const {
  if (lower.size() != upper.size() || lower.size() == 0)
    throw DomainError(name + ": lower/upper bounds must be non-empty and of equal length");
  for (Eigen::Index k = 0; k < lower.size(); ++k) {
    if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]) || !(lower[k] < upper[k]))
      throw DomainError(name + ": bound " + std::to_string(k) + " must satisfy lower < upper, finite");
  }
}

void ParamSpace::validate() const {
  sigma.validate("sigma box");
  theta.validate("theta box");
  if (sigma_true && !sigma.contains_open(*sigma_true))
    throw DomainError("true sigma must lie strictly inside the sigma box");
  if (theta_true && !theta.contains_open(*theta_true))
    throw DomainError("true theta must lie strictly inside the theta box");
}

const Vector& ParamSpace::require_sigma_true() const {
  if (!sigma_true) throw DomainError("true sigma is required but not set");
  return *sigma_true;
}

const Vector& ParamSpace::require_theta_true() const {
  if (!theta_true) throw DomainError("true theta is required but not set");
  return *theta_true;
}

CoefficientModel::CoefficientModel(ParamSpace space, DriftFn drift, DiffusionFn diffusion,
                                   TimeStructure structure, double period, bool drift_linear,
                                   ModelBounds bounds, std::string family)
    : space_(std::move(space)),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      structure_(structure),
      period_(period),
      drift_linear_(drift_linear),
      bounds_(bounds),
      family_(std::move(family)) {
  space_.validate();
  if (!drift_ || !diffusion_) throw DomainError("drift and diffusion evaluators are required");
  if (!(bounds_.c1 > 0.0) || !(bounds_.c2 >= bounds_.c1))
    throw DomainError("ellipticity bounds must satisfy 0 < c1 <= c2");
  if (!(bounds_.rho_max >= 0.0) || !(bounds_.rho_max < 1.0))
    throw DomainError("rho_max must lie in [0, 1)");
  if (structure_ == TimeStructure::periodic && !(period_ > 0.0))
    throw DomainError("periodic model needs a positive period");
}

void CoefficientModel::check_sigma(const Vector& sigma) const {
  if (!space_.sigma.contains_closed(sigma)) {
    std::ostringstream os;
    os << "sigma = [" << sigma.transpose() << "] outside the parameter box";
    throw DomainError(os.str());
  }
}

void CoefficientModel::check_theta(const Vector& theta) const {
  if (!space_.theta.contains_closed(theta)) {
    std::ostringstream os;
    os << "theta = [" << theta.transpose() << "] outside the parameter box";
    throw DomainError(os.str());
  }
}

Vector2 CoefficientModel::drift(double t, const Vector& theta) const { return drift_(t, theta); }

Matrix2 CoefficientModel::diffusion(double t, const Vector& sigma) const {
  return diffusion_(t, sigma);
}

Matrix2 CoefficientModel::sigma_matrix(double t, const Vector& sigma) const {
  check_sigma(sigma);
  const Matrix2 b = diffusion_(t, sigma);
  Matrix2 s = b * b.transpose();
  s(1, 0) = s(0, 1);
  return s;
}

double CoefficientModel::local_correlation(double t, const Vector& sigma) const {
  const Matrix2 s = sigma_matrix(t, sigma);
  if (!(s(0, 0) > 0.0) || !(s(1, 1) > 0.0))
    throw NumericError("degenerate diagonal entry in Sigma_t; model violates ellipticity");
  return s(0, 1) / std::sqrt(s(0, 0) * s(1, 1));
}

namespace {
double entry(const Matrix2& s, Component c) {
  switch (c) {
    case Component::c11: return s(0, 0);
    case Component::c22: return s(1, 1);
    case Component::c12: return s(0, 1);
  }
  return 0.0;
}
}  // namespace

double CoefficientModel::integrate_sigma(const Interval& iv, const Vector& sigma,
                                         Component c) const {
  if (!(iv.lo >= 0.0) || !(iv.hi > iv.lo)) throw DomainError("integrate_sigma needs 0 <= a < b");
  check_sigma(sigma);
  if (structure_ == TimeStructure::constant) {
    return entry(sigma_matrix(0.0, sigma), c) * iv.length();
  }
  auto f = [&](double t) {
    const Matrix2 b = diffusion_(t, sigma);
    return entry(b * b.transpose(), c);
  };
  return quad::integrate(f, iv.lo, iv.hi);
}

double CoefficientModel::increment_drift(const Interval& iv, const Vector& theta, int l) const {
  if (!(iv.lo >= 0.0) || !(iv.hi > iv.lo)) throw DomainError("increment_drift needs 0 <= a < b");
  if (l != 1 && l != 2) throw ContractError("coordinate must be 1 or 2");
  check_theta(theta);
  if (structure_ == TimeStructure::constant) return drift_(0.0, theta)[l - 1] * iv.length();
  auto f = [&](double t) { return drift_(t, theta)[l - 1]; };
  return quad::integrate(f, iv.lo, iv.hi);
}

double CoefficientModel::phi(double t, const Vector& theta, int l) const {
  if (l != 1 && l != 2) throw ContractError("coordinate must be 1 or 2");
  const Vector& sigma0 = space_.require_sigma_true();
  const Vector& theta0 = space_.require_theta_true();
  check_theta(theta);
  const double var = sigma_matrix(t, sigma0)(l - 1, l - 1);
  return (drift_(t, theta)[l - 1] - drift_(t, theta0)[l - 1]) / std::sqrt(var);
}

AuditReport CoefficientModel::audit(int probes, std::uint64_t seed) const {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double horizon = structure_ == TimeStructure::periodic ? period_
                         : structure_ == TimeStructure::constant ? 1.0
                                                                 : 100.0;
  AuditReport r;
  r.probes = probes;
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  r.max_eigenvalue = -std::numeric_limits<double>::infinity();
  const Box& box = space_.sigma;
  for (int k = 0; k < probes; ++k) {
    const double t = horizon * unit(rng);
    Vector sigma(box.dim());
    for (Eigen::Index d = 0; d < box.dim(); ++d)
      sigma[d] = box.lower[d] + (box.upper[d] - box.lower[d]) * unit(rng);
    const Matrix2 b = diffusion_(t, sigma);
    const Matrix2 s = b * b.transpose();
    r.max_asymmetry = std::max(r.max_asymmetry, std::abs(s(0, 1) - s(1, 0)));
    Eigen::SelfAdjointEigenSolver<Matrix2> eig(s);
    const auto ev = eig.eigenvalues();
    if (!ev.allFinite()) {
      r.min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
      break;
    }
    r.min_eigenvalue = std::min(r.min_eigenvalue, ev.minCoeff());
    r.max_eigenvalue = std::max(r.max_eigenvalue, ev.maxCoeff());
    if (s(0, 0) > 0 && s(1, 1) > 0)
      r.max_abs_correlation =
          std::max(r.max_abs_correlation, std::abs(s(0, 1)) / std::sqrt(s(0, 0) * s(1, 1)));
  }
  std::ostringstream os;
  if (!(r.min_eigenvalue >= bounds_.c1 * (1 - 1e-12)))
    os << "smallest eigenvalue " << r.min_eigenvalue << " below c1 = " << bounds_.c1 << "; ";
  if (!(r.max_eigenvalue <= bounds_.c2 * (1 + 1e-12)))
    os << "largest eigenvalue " << r.max_eigenvalue << " above c2 = " << bounds_.c2 << "; ";
  if (!(r.max_abs_correlation <= bounds_.rho_max + 1e-12))
    os << "|rho_t| reaches " << r.max_abs_correlation << " above rho_max = " << bounds_.rho_max;
  r.message = os.str();
  r.ok = r.message.empty();
  return r;
}

void CoefficientModel::validate(int probes) const {
  const AuditReport r = audit(probes);
  if (!r.ok) throw DomainError("model validation failed: " + r.message);
}

// ---------------------------------------------------------------------------

namespace {

struct ScaleParams {
  double k, s1, s2, rho;
};

// Index of each free diffusion parameter within sigma, or -1 when fixed.
struct FreeMap {
  int scale = -1, s1 = -1, s2 = -1, rho = -1;
};

FreeMap map_free(const DiffusionSpec& spec, Eigen::Index d1) {
  FreeMap m;
  int idx = 0;
  for (const auto& name : spec.free) {
    int* slot = name == "scale" ? &m.scale
                : name == "s1"  ? &m.s1
                : name == "s2"  ? &m.s2
                : name == "rho" ? &m.rho
                                : nullptr;
    if (!slot) throw DomainError("unknown diffusion parameter '" + name + "'");
    if (*slot >= 0) throw DomainError("diffusion parameter '" + name + "' listed twice");
    *slot = idx++;
  }
  if (idx != d1)
    throw DomainError("sigma box dimension " + std::to_string(d1) + " does not match " +
                      std::to_string(idx) + " free diffusion parameters");
  return m;
}

ScaleParams decode(const DiffusionSpec& spec, const FreeMap& m, const Vector& sigma) {
  return {m.scale >= 0 ? sigma[m.scale] : spec.scale, m.s1 >= 0 ? sigma[m.s1] : spec.s1,
          m.s2 >= 0 ? sigma[m.s2] : spec.s2, m.rho >= 0 ? sigma[m.rho] : spec.rho};
}

Matrix2 lower_factor(double s1, double s2, double rho) {
  Matrix2 b;
  b << s1, 0.0, rho * s2, s2 * std::sqrt(std::max(0.0, 1.0 - rho * rho));
  return b;
}

void check_drift(const DriftSpec& drift, Eigen::Index d2) {
  if (static_cast<Eigen::Index>(drift.directions.size()) != d2)
    throw DomainError("theta box dimension " + std::to_string(d2) + " does not match " +
                      std::to_string(drift.directions.size()) + " drift directions");
}

}  // namespace

CoefficientModel make_constant_model(const DiffusionSpec& diffusion, const DriftSpec& drift,
                                     ParamSpace space, ModelBounds bounds) {
  const FreeMap m = map_free(diffusion, space.d1());
  check_drift(drift, space.d2());
  auto diff = [diffusion, m](double, const Vector& sigma) {
    const ScaleParams p = decode(diffusion, m, sigma);
    return Matrix2(p.k * lower_factor(p.s1, p.s2, p.rho));
  };
  auto mu = [drift](double, const Vector& theta) {
    Vector2 out = drift.intercept;
    for (std::size_t k = 0; k < drift.directions.size(); ++k)
      out += theta[static_cast<Eigen::Index>(k)] * drift.directions[k];
    return out;
  };
  CoefficientModel model(std::move(space), mu, diff, TimeStructure::constant, 0.0, true, bounds,
                         "constant");
  model.validate();
  return model;
}

CoefficientModel make_periodic_model(const DiffusionSpec& diffusion, const DriftSpec& drift,
                                     const PeriodicSpec& periodic, ParamSpace space,
                                     ModelBounds bounds) {
  const FreeMap m = map_free(diffusion, space.d1());
  check_drift(drift, space.d2());
  if (!(periodic.period > 0.0)) throw DomainError("periodic family needs period > 0");
  const double omega = 2.0 * std::numbers::pi / periodic.period;
  auto diff = [diffusion, m, periodic, omega](double t, const Vector& sigma) {
    const ScaleParams p = decode(diffusion, m, sigma);
    const double wave = std::sin(omega * t);
    const double g = 1.0 + periodic.scale_amplitude * wave;
    const double rho = p.rho + periodic.rho_amplitude * wave;
    return Matrix2(p.k * g * lower_factor(p.s1, p.s2, rho));
  };
  auto mu = [drift, periodic, omega](double t, const Vector& theta) {
    Vector2 slope = Vector2::Zero();
    for (std::size_t k = 0; k < drift.directions.size(); ++k)
      slope += theta[static_cast<Eigen::Index>(k)] * drift.directions[k];
    return Vector2(drift.intercept + (1.0 + periodic.drift_amplitude * std::sin(omega * t)) * slope);
  };
  CoefficientModel model(std::move(space), mu, diff, TimeStructure::periodic, periodic.period, true,
                         bounds, "periodic");
  model.validate();
  return model;
}

}  // namespace nsync
