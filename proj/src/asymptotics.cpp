#include "nsync/asymptotics.hpp"

#include "nsync/gaussian.hpp"
#include "nsync/overlap.hpp"
#include "nsync/parallel.hpp"
#include "nsync/quadrature.hpp"
#include "nsync/rng.hpp"
#include "nsync/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nsync {

namespace {

void check_rho(double rho) {
  if (!(std::abs(rho) < 1.0)) {
    std::ostringstream os;
    os << "correlation " << rho << " outside (-1, 1)";
    throw DomainError(os.str());
  }
}

// sum_{p > P} p x^p for x in [0, 1).
double weighted_geometric_tail(double x, int P) {
  return std::pow(x, P + 1) * ((P + 1) - P * x) / ((1.0 - x) * (1.0 - x));
}

// The pieces of the A-series that appear in the limit expressions, all without division
// by rho so that rho = 0 is handled by the series itself.
struct ASeries {
  double a = 0.0;          // A(rho)
  double a_over_r = 0.0;   // A(rho) / rho
  double a_over_r2 = 0.0;  // A(rho) / rho^2
  double da_over_r = 0.0;  // A'(rho) / rho
};

ASeries a_pieces(double rho, const SchemeConstants& c) {
  ASeries s;
  const double r2 = rho * rho;
  double pw = 1.0;  // rho^{2p-2}
  for (int p = 1; p <= c.p_max; ++p) {
    const double ap = c.a_p(p);
    s.a_over_r2 += ap * pw;
    s.da_over_r += 2.0 * p * ap * pw;
    pw *= r2;
  }
  s.a = s.a_over_r2 * r2;
  s.a_over_r = s.a_over_r2 * rho;
  return s;
}

void check_truncation(const CoefficientModel& model, const SchemeConstants& c) {
  const double rm = model.bounds().rho_max;
  const double tail = std::max(c.a_p(1), 0.0) * std::pow(rm * rm, c.p_max + 1) / (1.0 - rm * rm);
  if (tail > 1e-10) {
    std::ostringstream os;
    os << "p_max = " << c.p_max << " leaves a series tail of " << tail << " at rho_max = " << rm
       << "; need at least p_max = " << choose_p_max(rm);
    throw DomainError(os.str());
  }
}

// Central difference with the stencil shifted inward when x sits near a box edge.
template <class F>
Vector box_gradient(F&& f, const Vector& x, const Box& box) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = fd_step(x[k]);
    Vector y = x;
    y[k] = std::clamp(x[k], box.lower[k] + h, box.upper[k] - h);
    Vector lo = y, hi = y;
    lo[k] -= h;
    hi[k] += h;
    g[k] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

struct LocalState {
  Matrix2 s;       // Sigma_t(sigma)
  double rho = 0.0;
  Vector drho;     // d rho_t / d sigma
  Vector dlog1;    // d log [Sigma_t]_11 / d sigma
  Vector dlog2;
};

LocalState local_state(const CoefficientModel& model, double t, const Vector& sigma,
                       bool derivatives) {
  LocalState st;
  st.s = model.sigma_matrix(t, sigma);
  st.rho = st.s(0, 1) / std::sqrt(st.s(0, 0) * st.s(1, 1));
  if (derivatives) {
    const Box& box = model.space().sigma;
    st.drho = box_gradient([&](const Vector& x) { return model.local_correlation(t, x); }, sigma, box);
    st.dlog1 = box_gradient(
        [&](const Vector& x) { return std::log(model.sigma_matrix(t, x)(0, 0)); }, sigma, box);
    st.dlog2 = box_gradient(
        [&](const Vector& x) { return std::log(model.sigma_matrix(t, x)(1, 1)); }, sigma, box);
  }
  return st;
}

// Time average of a matrix-valued integrand under the model's averaging policy. Composite
// 10-point Gauss-Legendre panels: 64 per period, 4 per unit time otherwise.
template <class F>
Matrix time_average(F&& f, const CoefficientModel& model, const AveragingOptions& opts,
                    std::string& policy, double& gap) {
  gap = 0.0;
  if (model.structure() == TimeStructure::constant) {
    policy = "pointwise";
    return f(0.0);
  }
  auto integrate = [&](double a, double b, int panels) {
    Matrix total;
    const double w = (b - a) / panels;
    for (int q = 0; q < panels; ++q) {
      const double lo = a + q * w;
      const double mid = lo + 0.5 * w;
      for (std::size_t k = 0; k < quad::kNodes.size(); ++k) {
        const double dx = 0.5 * w * quad::kNodes[k];
        const Matrix v = quad::kWeights[k] * 0.5 * w * (f(mid - dx) + f(mid + dx));
        if (total.size() == 0) {
          total = v;
        } else {
          total += v;
        }
      }
    }
    return total;
  };
  if (model.structure() == TimeStructure::periodic) {
    policy = "period";
    return integrate(0.0, model.period(), 64) / model.period();
  }
  if (!(opts.t_avg > 0.0)) throw ConfigError("averaging horizon must be positive");
  std::ostringstream os;
  os << "numeric [0, " << opts.t_avg << "]";
  policy = os.str();
  const int panels = std::max(8, static_cast<int>(std::ceil(2.0 * opts.t_avg)));
  const Matrix first = integrate(0.0, 0.5 * opts.t_avg, panels);
  const Matrix second = integrate(0.5 * opts.t_avg, opts.t_avg, panels);
  const Matrix full = (first + second) / opts.t_avg;
  gap = (first / (0.5 * opts.t_avg) - full).cwiseAbs().maxCoeff();
  return full;
}

Matrix symmetrize_and_check(const Matrix& m, const std::string& what) {
  Matrix s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 0.0)) {
    std::ostringstream os;
    os << what << " is not positive definite: smallest eigenvalue " << lo;
    throw NumericError(os.str());
  }
  return s;
}

}  // namespace

SeriesValue a_series(double rho, const SchemeConstants& c, int derivative_order) {
  check_rho(rho);
  if (derivative_order != 0 && derivative_order != 1)
    throw ContractError("a_series supports derivative orders 0 and 1");
  const double r2 = rho * rho;
  const double a1 = c.p_max >= 1 ? std::max(c.a_p(1), 0.0) : 0.0;
  SeriesValue out;
  if (derivative_order == 0) {
    double pw = r2;
    for (int p = 1; p <= c.p_max; ++p, pw *= r2) out.value += c.a_p(p) * pw;
    out.tail_bound = a1 * std::pow(r2, c.p_max + 1) / (1.0 - r2);
  } else {
    const ASeries s = a_pieces(rho, c);
    out.value = s.da_over_r * rho;
    out.tail_bound = rho == 0.0 ? 0.0 : 2.0 * a1 * weighted_geometric_tail(r2, c.p_max) / std::abs(rho);
  }
  return out;
}

LimitMatrix gamma1(const CoefficientModel& model, const SchemeConstants& c, const Vector& sigma0,
                   const AveragingOptions& opts) {
  model.check_sigma(sigma0);
  check_truncation(model, c);
  double tail = 0.0;
  auto integrand = [&](double t) {
    const LocalState st = local_state(model, t, sigma0, true);
    check_rho(st.rho);
    const ASeries a = a_pieces(st.rho, c);
    const Vector b1 = -0.5 * st.dlog1;  // d B_1 at sigma0, B the standard-deviation ratio
    const Vector b2 = -0.5 * st.dlog2;
    const Vector s = b1 + b2;
    const Vector& r = st.drho;
    // Hessian of y_1 at sigma0 (negative semidefinite), written without 1/rho.
    Matrix h = (a.a_over_r2 - a.da_over_r) * r * r.transpose() -
               a.a_over_r * (r * s.transpose() + s * r.transpose()) + a.a * s * s.transpose() -
               2.0 * (c.a0(1) + a.a) * b1 * b1.transpose() -
               2.0 * (c.a0(2) + a.a) * b2 * b2.transpose();
    tail = std::max(tail, a_series(st.rho, c, 0).tail_bound + a_series(st.rho, c, 1).tail_bound);
    return Matrix(-h);
  };
  LimitMatrix out;
  const Matrix avg = time_average(integrand, model, opts, out.policy, out.averaging_gap);
  out.value = symmetrize_and_check(avg, "Gamma1");
  out.tail_bound = tail;
  return out;
}

LimitMatrix gamma2(const CoefficientModel& model, const SchemeConstants& c, const Vector& sigma0,
                   const Vector& theta0, const AveragingOptions& opts) {
  model.check_sigma(sigma0);
  model.check_theta(theta0);
  double tail = 0.0;
  const Box& tbox = model.space().theta;
  auto integrand = [&](double t) {
    const LocalState st = local_state(model, t, sigma0, false);
    check_rho(st.rho);
    const Vector u1 =
        box_gradient([&](const Vector& x) { return model.drift(t, x)[0]; }, theta0, tbox) /
        std::sqrt(st.s(0, 0));
    const Vector u2 =
        box_gradient([&](const Vector& x) { return model.drift(t, x)[1]; }, theta0, tbox) /
        std::sqrt(st.s(1, 1));
    const Matrix cross = u1 * u2.transpose() + u2 * u1.transpose();
    Matrix g = Matrix::Zero(theta0.size(), theta0.size());
    const double r2 = st.rho * st.rho;
    double pw = 1.0;
    for (int p = 0; p <= c.p_max; ++p, pw *= r2) {
      const auto q = static_cast<std::size_t>(p);
      g += pw * (c.f11[q].mean * u1 * u1.transpose() + c.f22[q].mean * u2 * u2.transpose() -
                 st.rho * c.f12[q].mean * cross);
    }
    const auto last = static_cast<std::size_t>(c.p_max);
    const double fmax = std::max({c.f11[last].mean, c.f22[last].mean, std::abs(c.f12[last].mean)});
    tail = std::max(tail, fmax * std::pow(r2, c.p_max + 1) / (1.0 - r2) *
                              (u1.squaredNorm() + u2.squaredNorm() + 2.0 * u1.norm() * u2.norm()));
    return g;
  };
  LimitMatrix out;
  const Matrix avg = time_average(integrand, model, opts, out.policy, out.averaging_gap);
  out.value = symmetrize_and_check(avg, "Gamma2");
  out.tail_bound = tail;
  return out;
}

double y1(const Vector& sigma, const CoefficientModel& model, const SchemeConstants& c,
          const Vector& sigma0, const AveragingOptions& opts) {
  model.check_sigma(sigma);
  model.check_sigma(sigma0);
  check_truncation(model, c);
  auto integrand = [&](double t) {
    const LocalState st = local_state(model, t, sigma, false);
    const LocalState s0 = local_state(model, t, sigma0, false);
    check_rho(st.rho);
    const double b1 = std::sqrt(s0.s(0, 0) / st.s(0, 0));
    const double b2 = std::sqrt(s0.s(1, 1) / st.s(1, 1));
    const ASeries a = a_pieces(st.rho, c);
    auto a_over_r = [&](double r) { return a_pieces(r, c).a_over_r; };
    const double lo = std::min(s0.rho, st.rho), hi = std::max(s0.rho, st.rho);
    const double integral =
        (st.rho >= s0.rho ? 1.0 : -1.0) * quad::integrate(a_over_r, lo, hi, 1e-12);
    double v = -0.5 * a.a * (b1 * b1 + b2 * b2) + a.a_over_r * b1 * b2 * s0.rho + integral;
    v += c.a0(1) * (0.5 - 0.5 * b1 * b1 + std::log(b1));
    v += c.a0(2) * (0.5 - 0.5 * b2 * b2 + std::log(b2));
    Matrix out(1, 1);
    out(0, 0) = v;
    return out;
  };
  std::string policy;
  double gap = 0.0;
  return time_average(integrand, model, opts, policy, gap)(0, 0);
}

double y2(const Vector& theta, const CoefficientModel& model, const SchemeConstants& c,
          const Vector& sigma0, const Vector& theta0, const AveragingOptions& opts) {
  model.check_theta(theta);
  model.check_theta(theta0);
  model.check_sigma(sigma0);
  auto integrand = [&](double t) {
    const LocalState s0 = local_state(model, t, sigma0, false);
    check_rho(s0.rho);
    const Vector2 d = model.drift(t, theta) - model.drift(t, theta0);
    const double phi1 = d[0] / std::sqrt(s0.s(0, 0));
    const double phi2 = d[1] / std::sqrt(s0.s(1, 1));
    const double r2 = s0.rho * s0.rho;
    double v = 0.0, pw = 1.0;
    for (int p = 0; p <= c.p_max; ++p, pw *= r2) {
      const auto q = static_cast<std::size_t>(p);
      v += -0.5 * pw * (c.f11[q].mean * phi1 * phi1 + c.f22[q].mean * phi2 * phi2) +
           c.f12[q].mean * pw * s0.rho * phi1 * phi2;
    }
    Matrix out(1, 1);
    out(0, 0) = v;
    return out;
  };
  std::string policy;
  double gap = 0.0;
  return time_average(integrand, model, opts, policy, gap)(0, 0);
}

Matrix inverse_sqrt(const Matrix& m, const std::string& what) {
  const Matrix s = symmetrize_and_check(m, what);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const Vector d = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix epsilon_n(long n, double h_n, const Matrix& g1, const Matrix& g2) {
  if (n < 1 || !(h_n > 0.0)) throw DomainError("epsilon_n needs n >= 1 and h_n > 0");
  const Eigen::Index d1 = g1.rows(), d2 = g2.rows();
  Matrix eps = Matrix::Zero(d1 + d2, d1 + d2);
  eps.topLeftCorner(d1, d1) = inverse_sqrt(g1, "Gamma1") / std::sqrt(static_cast<double>(n));
  eps.bottomRightCorner(d2, d2) =
      inverse_sqrt(g2, "Gamma2") / std::sqrt(static_cast<double>(n) * h_n);
  return eps;
}

LanSummary lan_experiment(const CoefficientModel& model, const SchemeGenerator& generator,
                          const SchemeConstants& c, const LanOptions& opts) {
  const Vector& sigma0 = model.space().require_sigma_true();
  const Vector& theta0 = model.space().require_theta_true();
  const Eigen::Index d1 = sigma0.size(), d2 = theta0.size();
  if (opts.u.size() != d1 + d2) throw ConfigError("lan: u must have d1 + d2 entries");
  if (opts.replications < 1) throw ConfigError("lan: replications must be >= 1");
  if (opts.n < 1 || !(opts.h_n > 0.0)) throw ConfigError("lan: need n >= 1 and h_n > 0");

  LanSummary out;
  out.gamma1 = gamma1(model, c, sigma0, opts.averaging).value;
  out.gamma2 = gamma2(model, c, sigma0, theta0, opts.averaging).value;
  out.epsilon = epsilon_n(opts.n, opts.h_n, out.gamma1, out.gamma2);
  out.alpha0.resize(d1 + d2);
  out.alpha0 << sigma0, theta0;
  out.alpha1 = out.alpha0 + out.epsilon * opts.u;
  const Vector sigma1 = out.alpha1.head(d1);
  const Vector theta1 = out.alpha1.tail(d2);
  if (!model.space().sigma.contains_closed(sigma1) || !model.space().theta.contains_closed(theta1)) {
    std::ostringstream os;
    os << "lan: perturbed parameter [" << out.alpha1.transpose() << "] leaves the parameter box";
    throw ConfigError(os.str());
  }
  const bool same_sigma = sigma1 == sigma0;

  const auto R = static_cast<std::size_t>(opts.replications);
  out.log_ratios.assign(R, 0.0);
  parallel_for(R, opts.workers, [&](std::size_t r) {
    const ReplicationSeeds seeds = replication_seeds(opts.seed, r);
    const SamplingScheme scheme = generator.generate(opts.n, opts.h_n, seeds.scheme);
    const OverlapMatrix overlap = build_overlap(scheme);
    const CovarianceOperator op0(scheme, overlap, model, sigma0);
    const Vector dv0 = drift_increments(scheme, model, theta0);
    Rng rng(seeds.path);
    const Vector dx = draw_increments(op0, dv0, rng);
    const double l0 = -0.5 * op0.quad_form(dx - dv0) - 0.5 * op0.logdet();
    const Vector dv1 = drift_increments(scheme, model, theta1);
    double l1 = 0.0;
    if (same_sigma) {
      l1 = -0.5 * op0.quad_form(dx - dv1) - 0.5 * op0.logdet();
    } else {
      const CovarianceOperator op1(scheme, overlap, model, sigma1);
      l1 = -0.5 * op1.quad_form(dx - dv1) - 0.5 * op1.logdet();
    }
    out.log_ratios[r] = l1 - l0;
  });

  const auto ms = stats::mean_sd(out.log_ratios);
  out.mean = ms.mean;
  out.variance = ms.sd * ms.sd;
  out.mean_se = ms.sd / std::sqrt(static_cast<double>(R));
  out.reference_mean = -0.5 * opts.u.squaredNorm();
  out.reference_variance = opts.u.squaredNorm();
  return out;
}

}  // namespace nsync
