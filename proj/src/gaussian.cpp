#include "nsync/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace nsync {

CovarianceOperator::CovarianceOperator(const SamplingScheme& scheme, const OverlapMatrix& overlap,
                                       const CoefficientModel& model, const Vector& sigma)
    : m1_(scheme.m1()), m2_(scheme.m2()), sigma_(sigma) {
  if (overlap.m1 != m1_ || overlap.m2 != m2_)
    throw ContractError("overlap matrix does not belong to this scheme");
  model.check_sigma(sigma);
  const int m = dim();
  const auto rows = overlap.g.row_index();
  const auto cols = overlap.g.col_index();
  const auto gvals = overlap.g.values();
  diag_.resize(m);
  cross_.resize(gvals.size());

  if (model.structure() == TimeStructure::constant) {
    const Matrix2 s = model.sigma_matrix(0.0, sigma);
    diag_.head(m1_) = s(0, 0) * overlap.len1;
    diag_.tail(m2_) = s(1, 1) * overlap.len2;
    for (std::size_t e = 0; e < gvals.size(); ++e) cross_[e] = s(0, 1) * overlap.raw_overlap[e];
  } else {
    for (int k = 0; k < m; ++k) {
      const Component c = k < m1_ ? Component::c11 : Component::c22;
      diag_[k] = model.integrate_sigma(scheme.stacked_interval(k), sigma, c);
    }
    for (std::size_t e = 0; e < gvals.size(); ++e) {
      const Interval a = scheme.interval(1, rows[e] + 1);
      const Interval b = scheme.interval(2, cols[e] + 1);
      cross_[e] = model.integrate_sigma({std::max(a.lo, b.lo), std::min(a.hi, b.hi)}, sigma,
                                        Component::c12);
    }
  }

  pair_row_.assign(rows.begin(), rows.end());
  pair_col_.assign(cols.begin(), cols.end());
  std::vector<double> gt(gvals.size());
  for (std::size_t e = 0; e < gvals.size(); ++e) {
    gt[e] = cross_[e] / std::sqrt(diag_[rows[e]] * diag_[m1_ + cols[e]]);
    rho_pairs_ = std::max(rho_pairs_, std::abs(gt[e] / gvals[e]));
  }
  gtilde_ = overlap.g.with_values(std::move(gt));
  factorize(scheme);
}

void CovarianceOperator::factorize(const SamplingScheme& scheme) {
  const int m = dim();
  const auto& g1 = scheme.grid(1);
  const auto& g2 = scheme.grid(2);

  // Merge the two (already sorted) right-endpoint sequences; grid 1 first on ties.
  perm_.resize(static_cast<std::size_t>(m));
  {
    int i = 0, j = 0, a = 0;
    while (i < m1_ || j < m2_) {
      if (j >= m2_ || (i < m1_ && g1[i + 1] <= g2[j + 1])) {
        perm_[a++] = i++;
      } else {
        perm_[a++] = m1_ + j++;
      }
    }
  }
  pos_.resize(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) pos_[perm_[a]] = a;

  first_.resize(static_cast<std::size_t>(m));
  std::iota(first_.begin(), first_.end(), 0);
  for (std::size_t e = 0; e < cross_.size(); ++e) {
    const int pa = pos_[pair_row_[e]];
    const int pb = pos_[m1_ + pair_col_[e]];
    const int hi = std::max(pa, pb), lo = std::min(pa, pb);
    first_[hi] = std::min(first_[hi], lo);
  }
  offset_.resize(static_cast<std::size_t>(m) + 1);
  offset_[0] = 0;
  for (int a = 0; a < m; ++a) offset_[a + 1] = offset_[a] + static_cast<std::size_t>(a - first_[a] + 1);
  values_.assign(offset_[m], 0.0);
  for (int a = 0; a < m; ++a) at(a, a) = diag_[perm_[a]];
  for (std::size_t e = 0; e < cross_.size(); ++e) {
    const int pa = pos_[pair_row_[e]];
    const int pb = pos_[m1_ + pair_col_[e]];
    at(std::max(pa, pb), std::min(pa, pb)) = cross_[e];
  }

  // Row-oriented envelope Cholesky: fill never leaves [first_[a], a].
  for (int a = 0; a < m; ++a) {
    double* ra = &values_[offset_[a]] - first_[a];  // ra[c] = L(a, c)
    for (int b = first_[a]; b < a; ++b) {
      const double* rb = &values_[offset_[b]] - first_[b];
      const int c0 = std::max(first_[a], first_[b]);
      double s = ra[b];
      for (int c = c0; c < b; ++c) s -= ra[c] * rb[c];
      ra[b] = s / rb[b];
    }
    double d = ra[a];
    for (int c = first_[a]; c < a; ++c) d -= ra[c] * ra[c];
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(static_cast<std::size_t>(perm_[a]), d);
    ra[a] = std::sqrt(d);
  }
}

// y <- L^{-1} y, in time order.
void CovarianceOperator::forward(Vector& y) const {
  const int m = dim();
  for (int a = 0; a < m; ++a) {
    const double* ra = &values_[offset_[a]] - first_[a];
    double s = y[a];
    for (int c = first_[a]; c < a; ++c) s -= ra[c] * y[c];
    y[a] = s / ra[a];
  }
}

// y <- L^{-T} y, in time order.
void CovarianceOperator::backward(Vector& y) const {
  for (int a = dim() - 1; a >= 0; --a) {
    const double* ra = &values_[offset_[a]] - first_[a];
    y[a] /= ra[a];
    const double ya = y[a];
    for (int c = first_[a]; c < a; ++c) y[c] -= ra[c] * ya;
  }
}

double CovarianceOperator::logdet() const {
  double s = 0.0;
  for (int a = 0; a < dim(); ++a) s += std::log(at(a, a));
  return 2.0 * s;
}

double CovarianceOperator::quad_form(const Vector& v) const {
  if (v.size() != dim()) throw ContractError("quad_form: vector length does not match S_n");
  Vector y(dim());
  for (int a = 0; a < dim(); ++a) y[a] = v[perm_[a]];
  forward(y);
  return y.squaredNorm();
}

Vector CovarianceOperator::solve(const Vector& v) const {
  if (v.size() != dim()) throw ContractError("solve: vector length does not match S_n");
  Vector y(dim());
  for (int a = 0; a < dim(); ++a) y[a] = v[perm_[a]];
  forward(y);
  backward(y);
  Vector x(dim());
  for (int a = 0; a < dim(); ++a) x[perm_[a]] = y[a];
  return x;
}

Vector CovarianceOperator::multiply(const Vector& v) const {
  if (v.size() != dim()) throw ContractError("multiply: vector length does not match S_n");
  Vector y = diag_.cwiseProduct(v);
  for (std::size_t e = 0; e < cross_.size(); ++e) {
    const int i = pair_row_[e], j = m1_ + pair_col_[e];
    y[i] += cross_[e] * v[j];
    y[j] += cross_[e] * v[i];
  }
  return y;
}

Vector CovarianceOperator::correlate(const Vector& z) const {
  if (z.size() != dim()) throw ContractError("correlate: vector length does not match S_n");
  Vector x(dim());
  for (int a = 0; a < dim(); ++a) {
    const double* ra = &values_[offset_[a]] - first_[a];
    double s = 0.0;
    for (int c = first_[a]; c <= a; ++c) s += ra[c] * z[c];
    x[perm_[a]] = s;
  }
  return x;
}

Matrix CovarianceOperator::to_dense() const {
  Matrix s = Matrix::Zero(dim(), dim());
  s.diagonal() = diag_;
  for (std::size_t e = 0; e < cross_.size(); ++e) {
    const int i = pair_row_[e], j = m1_ + pair_col_[e];
    s(i, j) = s(j, i) = cross_[e];
  }
  return s;
}

void CovarianceOperator::write_coo(std::ostream& os) const {
  os << std::setprecision(17) << m1_ << ' ' << m2_;
  for (Eigen::Index k = 0; k < sigma_.size(); ++k) os << ' ' << sigma_[k];
  os << '\n';
  for (int k = 0; k < dim(); ++k) os << k + 1 << ' ' << k + 1 << ' ' << diag_[k] << '\n';
  for (std::size_t e = 0; e < cross_.size(); ++e) {
    const int i = pair_row_[e] + 1, j = m1_ + pair_col_[e] + 1;
    os << i << ' ' << j << ' ' << cross_[e] << '\n';
    os << j << ' ' << i << ' ' << cross_[e] << '\n';
  }
}

// ---------------------------------------------------------------------------

Vector drift_increments(const SamplingScheme& scheme, const CoefficientModel& model,
                        const Vector& theta) {
  model.check_theta(theta);
  Vector dv(scheme.m());
  if (model.structure() == TimeStructure::constant) {
    const Vector2 mu = model.drift(0.0, theta);
    for (int k = 0; k < scheme.m(); ++k)
      dv[k] = mu[scheme.stacked_coordinate(k) - 1] * scheme.stacked_interval(k).length();
    return dv;
  }
  for (int k = 0; k < scheme.m(); ++k)
    dv[k] = model.increment_drift(scheme.stacked_interval(k), theta, scheme.stacked_coordinate(k));
  return dv;
}

namespace {

double sup_local_correlation(const SamplingScheme& scheme, const CoefficientModel& model,
                             const Vector& sigma) {
  double span = 0.0;
  int points = 1;
  switch (model.structure()) {
    case TimeStructure::constant: break;
    case TimeStructure::periodic:
      span = model.period();
      points = 256;
      break;
    case TimeStructure::general:
      span = scheme.horizon();
      points = 1024;
      break;
  }
  double r = 0.0;
  for (int q = 0; q < points; ++q) {
    const double t = points > 1 ? span * q / (points - 1) : 0.0;
    r = std::max(r, std::abs(model.local_correlation(t, sigma)));
  }
  return r;
}

}  // namespace

double rho_bar(const SamplingScheme& scheme, const OverlapMatrix& overlap,
               const CoefficientModel& model, const Vector& sigma) {
  // Assembling without factorizing is not exposed, so compute the pairwise part directly.
  model.check_sigma(sigma);
  const auto rows = overlap.g.row_index();
  const auto cols = overlap.g.col_index();
  double r = sup_local_correlation(scheme, model, sigma);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    const Interval a = scheme.interval(1, rows[e] + 1);
    const Interval b = scheme.interval(2, cols[e] + 1);
    const Interval both{std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
    const double c12 = model.integrate_sigma(both, sigma, Component::c12);
    const double v1 = model.integrate_sigma(a, sigma, Component::c11);
    const double v2 = model.integrate_sigma(b, sigma, Component::c22);
    const double g = overlap.g.values()[e];
    r = std::max(r, std::abs(c12 / std::sqrt(v1 * v2) / g));
  }
  return r;
}

double rho_bar(const SamplingScheme& scheme, const OverlapMatrix& overlap,
               const CoefficientModel& model, const Box& box) {
  constexpr int kPoints = 8;
  const Eigen::Index d = box.dim();
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  double r = 0.0;
  for (;;) {
    Vector s(d);
    for (Eigen::Index k = 0; k < d; ++k)
      s[k] = box.lower[k] + box.width()[k] * idx[k] / (kPoints - 1);
    r = std::max(r, rho_bar(scheme, overlap, model, s));
    Eigen::Index k = 0;
    while (k < d && ++idx[k] == kPoints) idx[k++] = 0;
    if (k == d) break;
  }
  return r;
}

SeriesCheck logdet_series_check(const CovarianceOperator& op, int p_max) {
  if (p_max < 1) throw ContractError("logdet_series_check needs p_max >= 1");
  const double rho = op.rho_pairs();
  if (!(rho < 1.0)) throw DomainError("series check needs rho_bar < 1");
  SeriesCheck out;
  out.value = op.diagonal().array().log().sum();
  const Matrix powers = op.normalized_cross().diagonal_powers(p_max);
  for (int p = 1; p <= p_max; ++p) out.value -= powers.col(p).sum() / p;
  const double r2 = rho * rho;
  out.tail_bound =
      op.m1() * std::pow(r2, p_max + 1) / ((p_max + 1) * (1.0 - r2));
  return out;
}

Vector draw_increments(const CovarianceOperator& op, const Vector& mean, Rng& rng) {
  if (mean.size() != op.dim()) throw ContractError("mean length does not match S_n");
  std::normal_distribution<double> normal;
  Vector z(op.dim());
  for (int k = 0; k < op.dim(); ++k) z[k] = normal(rng);
  return mean + op.correlate(z);
}

Vector simulate_increments(const SamplingScheme& scheme, const OverlapMatrix& overlap,
                           const CoefficientModel& model, const Vector& sigma0,
                           const Vector& theta0, std::uint64_t seed) {
  const CovarianceOperator op(scheme, overlap, model, sigma0);
  Rng rng(seed);
  return draw_increments(op, drift_increments(scheme, model, theta0), rng);
}

// ---------------------------------------------------------------------------

void write_increments(std::ostream& os, const Vector& dx, int m1, int m2) {
  if (dx.size() != m1 + m2) throw ContractError("increment vector length must be M1 + M2");
  os << std::setprecision(17) << m1 << ' ' << m2 << '\n';
  for (int k = 0; k < m1; ++k) os << (k ? " " : "") << dx[k];
  os << '\n';
  for (int k = 0; k < m2; ++k) os << (k ? " " : "") << dx[m1 + k];
  os << '\n';
}

Vector read_increments(std::istream& is, int m1, int m2) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("line 1: missing header");
  std::istringstream head(line);
  int h1 = 0, h2 = 0;
  if (!(head >> h1 >> h2)) throw DataError("line 1: expected 'M1 M2'");
  if (h1 != m1 || h2 != m2)
    throw DataError("line 1: increment counts " + std::to_string(h1) + " " + std::to_string(h2) +
                    " do not match the scheme (" + std::to_string(m1) + " " +
                    std::to_string(m2) + ")");
  Vector dx(m1 + m2);
  int k = 0;
  for (int l = 0; l < 2; ++l) {
    const int line_no = l + 2;
    if (!std::getline(is, line)) throw DataError("line " + std::to_string(line_no) + ": missing");
    std::istringstream row(line);
    std::string tok;
    int count = 0;
    while (row >> tok) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + tok + "'");
      }
      if (count >= (l == 0 ? m1 : m2))
        throw DataError("line " + std::to_string(line_no) + ": too many values");
      dx[k++] = v;
      ++count;
    }
    if (count != (l == 0 ? m1 : m2))
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(l == 0 ? m1 : m2) + " values, found " +
                      std::to_string(count));
  }
  return dx;
}

}  // namespace nsync
