#pragma once

#include "nsync/sampling.hpp"
#include "nsync/types.hpp"

#include <span>
#include <vector>

namespace nsync {

/// Sparse rectangular matrix with a banded-monotone pattern: row i touches a contiguous
/// column range, and range endpoints are nondecreasing in i (true for any matrix indexed
/// by two time-ordered families of intervals). Stored in CSR with a CSC mirror.
class BandedSparse {
 public:
  BandedSparse() = default;
  /// Triplets must be sorted by (row, col).
  BandedSparse(int rows, int cols, std::vector<int> row_index, std::vector<int> col_index,
               std::vector<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  // Triplet views, sorted by (row, col).
  std::span<const int> row_index() const { return row_index_; }
  std::span<const int> col_index() const { return col_index_; }
  std::span<const double> values() const { return values_; }

  /// Same pattern, new values (same triplet order).
  BandedSparse with_values(std::vector<double> values) const;

  void multiply(std::span<const double> x, std::span<double> y) const;            // y = A x
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;  // y = A^T x

  /// Column range [first, last] touched by rows [r0, r1]; empty when first > last.
  std::pair<int, int> cols_of_rows(int r0, int r1) const;
  std::pair<int, int> rows_of_cols(int c0, int c1) const;

  /// D[i][p] = [(A A^T)^p]_{ii} for p = 0..p_max, each row computed by local propagation of
  /// e_i without forming any power explicitly.
  Matrix diagonal_powers(int p_max) const;

  /// Largest eigenvalue of A A^T by power iteration.
  double gram_spectral_radius(int iterations = 200, double tol = 1e-13) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_index_, col_index_;
  std::vector<double> values_;
  std::vector<int> row_ptr_;      // CSR offsets into triplets
  std::vector<int> col_ptr_;      // CSC offsets into col_order_
  std::vector<int> col_order_;    // triplet indices ordered by (col, row)
};

/// G[i][j] = |I_i^1 ∩ I_j^2| / (|I_i^1| |I_j^2|)^{1/2} over overlapping pairs.
struct OverlapMatrix {
  int m1 = 0;
  int m2 = 0;
  BandedSparse g;
  std::vector<double> raw_overlap;  // |I_i^1 ∩ I_j^2| per nonzero, triplet order
  Vector len1, len2;                // interval lengths
  Vector sqrt_len1, sqrt_len2;      // the weighting vectors used by the drift functionals

  std::size_t nnz() const { return g.nnz(); }
};

/// Two-pointer sweep over both grids; cost O(M1 + M2 + nnz).
OverlapMatrix build_overlap(const SamplingScheme& scheme);

/// Per-window spectral functionals, table[k][p] for window k and p = 0..p_max.
struct WindowTable {
  Matrix values;  // windows x (p_max + 1)
  std::vector<double> window_length;
  int p_max = 0;
};

/// h_n tr(E_k (G G^T)^p): diagonal of (G G^T)^p summed over grid-1 rows whose right
/// endpoint lies in window k, scaled by h_n. Column p = 0 is h_n M_{1,k}.
WindowTable trace_powers(const SamplingScheme& scheme, const OverlapMatrix& overlap, int p_max,
                         const Partition& windows);

struct WeightedTables {
  WindowTable f11, f12, f22;
};

/// The three interval-length weighted forms per window:
/// I1' E_k (GG')^p I1, I1' E_k (GG')^p G I2, I2' E_k (G'G)^p I2.
WeightedTables weighted_functionals(const SamplingScheme& scheme, const OverlapMatrix& overlap,
                                    int p_max, const Partition& windows);

/// h_n M_{l,k}: right-endpoint counts of grid l per window, scaled by h_n.
std::vector<double> window_counts(const SamplingScheme& scheme, int l, const Partition& windows);

}  // namespace nsync
