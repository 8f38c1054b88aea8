#pragma once

#include "nsync/model.hpp"
#include "nsync/overlap.hpp"
#include "nsync/rng.hpp"
#include "nsync/sampling.hpp"

#include <iosfwd>
#include <vector>

namespace nsync {

/// Covariance S_n(sigma) of the stacked increment vector (grid 1 first, then grid 2).
///
/// Only the diagonal and the overlap pairs are stored. The constructor factorizes S_n in
/// time order (indices sorted by interval right endpoint) with an envelope Cholesky, so
/// fill stays inside the band of time-overlapping intervals. Immutable afterwards.
class CovarianceOperator {
 public:
  /// Throws NotPositiveDefinite (pivot = stacked index) when factorization fails.
  CovarianceOperator(const SamplingScheme& scheme, const OverlapMatrix& overlap,
                     const CoefficientModel& model, const Vector& sigma);

  int dim() const { return m1_ + m2_; }
  int m1() const { return m1_; }
  int m2() const { return m2_; }
  const Vector& sigma() const { return sigma_; }

  /// Stacked diagonal (the integrated variances of each interval).
  const Vector& diagonal() const { return diag_; }
  /// Integrated covariances over I_i^1 ∩ I_j^2, in the overlap triplet order.
  const std::vector<double>& cross() const { return cross_; }
  /// G~ = D~^{-1/2} (cross block) D~^{-1/2}, same pattern as G.
  const BandedSparse& normalized_cross() const { return gtilde_; }
  /// Largest |rho_ij| = |G~_ij / G_ij| over overlap pairs.
  double rho_pairs() const { return rho_pairs_; }

  double logdet() const;
  /// v' S^{-1} v.
  double quad_form(const Vector& v) const;
  Vector solve(const Vector& v) const;
  Vector multiply(const Vector& v) const;
  /// P' L z: a draw from N(0, S_n) when z is standard normal.
  Vector correlate(const Vector& z) const;
  /// Envelope entries held by the factor (diagnostic for fill-in).
  std::size_t factor_size() const { return values_.size(); }

  /// Small-dimension helper for tests and debugging.
  Matrix to_dense() const;
  /// Coordinate list, one "row col value" line per stored entry (1-based, both triangles),
  /// after a header line "M1 M2 sigma...".
  void write_coo(std::ostream& os) const;

 private:
  int m1_ = 0, m2_ = 0;
  Vector sigma_;
  Vector diag_;
  std::vector<double> cross_;
  std::vector<int> pair_row_, pair_col_;
  BandedSparse gtilde_;
  double rho_pairs_ = 0.0;

  // Envelope factor in time order.
  std::vector<int> perm_;    // position -> stacked index
  std::vector<int> pos_;     // stacked index -> position
  std::vector<int> first_;   // first envelope column of each row
  std::vector<std::size_t> offset_;  // start of each row in values_
  std::vector<double> values_;

  double& at(int a, int b) { return values_[offset_[a] + static_cast<std::size_t>(b - first_[a])]; }
  double at(int a, int b) const {
    return values_[offset_[a] + static_cast<std::size_t>(b - first_[a])];
  }
  void factorize(const SamplingScheme& scheme);
  void forward(Vector& y) const;
  void backward(Vector& y) const;
};

/// Stacked drift increments Delta V(theta).
Vector drift_increments(const SamplingScheme& scheme, const CoefficientModel& model,
                        const Vector& theta);

/// rho_bar at one sigma: pairwise correlations and |rho_t| over a time grid.
double rho_bar(const SamplingScheme& scheme, const OverlapMatrix& overlap,
               const CoefficientModel& model, const Vector& sigma);
/// Supremum over an 8-point-per-dimension grid of the closed sigma box.
double rho_bar(const SamplingScheme& scheme, const OverlapMatrix& overlap,
               const CoefficientModel& model, const Box& box);

struct SeriesCheck {
  double value = 0.0;       // truncated series for log det S_n
  double tail_bound = 0.0;  // certified bound on the neglected terms
};

/// sum log Sigma~_i - sum_{p <= p_max} tr((G~ G~')^p) / p, with tail bound
/// M1 rho^{2(p_max+1)} / ((p_max+1)(1 - rho^2)) where rho is the pairwise maximum.
SeriesCheck logdet_series_check(const CovarianceOperator& op, int p_max);

/// Exact draw Delta X = Delta V(theta0) + P' L Z.
Vector simulate_increments(const SamplingScheme& scheme, const OverlapMatrix& overlap,
                           const CoefficientModel& model, const Vector& sigma0,
                           const Vector& theta0, std::uint64_t seed);
Vector draw_increments(const CovarianceOperator& op, const Vector& mean, Rng& rng);

/// E[(X' A X)^k] for X ~ N(0, V), k in {2, 3, 4}; A is symmetrized first.
double gaussian_quadform_moments(const Matrix& a, const Matrix& v, int order);

// Increment file: header "M1 M2", then the grid-1 and the grid-2 increments on one line each.
void write_increments(std::ostream& os, const Vector& dx, int m1, int m2);
Vector read_increments(std::istream& is, int m1, int m2);

}  // namespace nsync
