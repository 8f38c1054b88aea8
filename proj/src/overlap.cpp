#include "nsync/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace nsync {

BandedSparse::BandedSparse(int rows, int cols, std::vector<int> row_index,
                           std::vector<int> col_index, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_index_(std::move(row_index)),
      col_index_(std::move(col_index)),
      values_(std::move(values)) {
  const std::size_t nnz = values_.size();
  if (row_index_.size() != nnz || col_index_.size() != nnz)
    throw ContractError("triplet arrays differ in length");
  row_ptr_.assign(static_cast<std::size_t>(rows_) + 1, 0);
  col_ptr_.assign(static_cast<std::size_t>(cols_) + 1, 0);
  for (std::size_t k = 0; k < nnz; ++k) {
    const int r = row_index_[k], c = col_index_[k];
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_) throw ContractError("triplet out of range");
    if (k > 0 && (r < row_index_[k - 1] || (r == row_index_[k - 1] && c <= col_index_[k - 1])))
      throw ContractError("triplets must be sorted by (row, col) without duplicates");
    ++row_ptr_[static_cast<std::size_t>(r) + 1];
    ++col_ptr_[static_cast<std::size_t>(c) + 1];
  }
  std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
  std::partial_sum(col_ptr_.begin(), col_ptr_.end(), col_ptr_.begin());
  col_order_.resize(nnz);
  std::vector<int> fill(col_ptr_.begin(), col_ptr_.end() - 1);
  for (std::size_t k = 0; k < nnz; ++k) col_order_[fill[col_index_[k]]++] = static_cast<int>(k);
}

BandedSparse BandedSparse::with_values(std::vector<double> values) const {
  if (values.size() != values_.size()) throw ContractError("value count does not match pattern");
  BandedSparse out = *this;
  out.values_ = std::move(values);
  return out;
}

void BandedSparse::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != static_cast<std::size_t>(cols_) || y.size() != static_cast<std::size_t>(rows_))
    throw ContractError("multiply: dimension mismatch");
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[col_index_[k]];
    y[r] = s;
  }
}

void BandedSparse::multiply_transpose(std::span<const double> x, std::span<double> y) const {
  if (x.size() != static_cast<std::size_t>(rows_) || y.size() != static_cast<std::size_t>(cols_))
    throw ContractError("multiply_transpose: dimension mismatch");
  for (int c = 0; c < cols_; ++c) {
    double s = 0.0;
    for (int q = col_ptr_[c]; q < col_ptr_[c + 1]; ++q) {
      const int k = col_order_[q];
      s += values_[k] * x[row_index_[k]];
    }
    y[c] = s;
  }
}

std::pair<int, int> BandedSparse::cols_of_rows(int r0, int r1) const {
  while (r0 <= r1 && row_ptr_[r0] == row_ptr_[r0 + 1]) ++r0;
  while (r1 >= r0 && row_ptr_[r1] == row_ptr_[r1 + 1]) --r1;
  if (r0 > r1) return {1, 0};
  return {col_index_[row_ptr_[r0]], col_index_[row_ptr_[r1 + 1] - 1]};
}

std::pair<int, int> BandedSparse::rows_of_cols(int c0, int c1) const {
  while (c0 <= c1 && col_ptr_[c0] == col_ptr_[c0 + 1]) ++c0;
  while (c1 >= c0 && col_ptr_[c1] == col_ptr_[c1 + 1]) --c1;
  if (c0 > c1) return {1, 0};
  return {row_index_[col_order_[col_ptr_[c0]]], row_index_[col_order_[col_ptr_[c1 + 1] - 1]]};
}

namespace {

// Entries below this magnitude at the edges of a propagated support are dropped. Both
// propagation operators have norm <= 1, so the total perturbation stays below
// p_max * kDrop.
constexpr double kDrop = 1e-22;

void trim(std::vector<double>& v, int& lo, int& hi) {
  while (lo <= hi && std::abs(v[lo]) < kDrop) v[lo++] = 0.0;
  while (hi >= lo && std::abs(v[hi]) < kDrop) v[hi--] = 0.0;
}

}  // namespace

Matrix BandedSparse::diagonal_powers(int p_max) const {
  if (p_max < 0) throw ContractError("p_max must be nonnegative");
  Matrix out = Matrix::Zero(rows_, p_max + 1);
  std::vector<double> w(static_cast<std::size_t>(rows_), 0.0);
  std::vector<double> u(static_cast<std::size_t>(cols_), 0.0);
  for (int i = 0; i < rows_; ++i) {
    w[i] = 1.0;
    int r0 = i, r1 = i, c0 = 1, c1 = 0;
    out(i, 0) = 1.0;
    for (int p = 1; p <= p_max; ++p) {
      double sq = 0.0;
      if (p % 2 == 1) {
        // u = A^T w
        std::tie(c0, c1) = cols_of_rows(r0, r1);
        for (int c = c0; c <= c1; ++c) {
          double s = 0.0;
          for (int q = col_ptr_[c]; q < col_ptr_[c + 1]; ++q) {
            const int k = col_order_[q];
            s += values_[k] * w[row_index_[k]];
          }
          u[c] = s;
          sq += s * s;
        }
        for (int r = r0; r <= r1; ++r) w[r] = 0.0;
        r0 = 1;
        r1 = 0;
        trim(u, c0, c1);
      } else {
        // w = A u
        std::tie(r0, r1) = rows_of_cols(c0, c1);
        for (int r = r0; r <= r1; ++r) {
          double s = 0.0;
          for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * u[col_index_[k]];
          w[r] = s;
          sq += s * s;
        }
        for (int c = c0; c <= c1; ++c) u[c] = 0.0;
        c0 = 1;
        c1 = 0;
        trim(w, r0, r1);
      }
      out(i, p) = sq;
      if (r0 > r1 && c0 > c1) break;
    }
    for (int r = r0; r <= r1; ++r) w[r] = 0.0;
    for (int c = c0; c <= c1; ++c) u[c] = 0.0;
  }
  return out;
}

double BandedSparse::gram_spectral_radius(int iterations, double tol) const {
  if (rows_ == 0) return 0.0;
  std::vector<double> x(static_cast<std::size_t>(rows_), 1.0 / std::sqrt(rows_));
  std::vector<double> y(static_cast<std::size_t>(cols_)), z(static_cast<std::size_t>(rows_));
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    multiply_transpose(x, y);
    multiply(y, z);
    double dot = 0.0, norm = 0.0;
    for (int r = 0; r < rows_; ++r) {
      dot += x[r] * z[r];
      norm += z[r] * z[r];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (int r = 0; r < rows_; ++r) x[r] = z[r] / norm;
    const bool done = it > 0 && std::abs(dot - lambda) <= tol * std::max(1.0, std::abs(dot));
    lambda = dot;
    if (done) break;
  }
  return lambda;
}

// ---------------------------------------------------------------------------

OverlapMatrix build_overlap(const SamplingScheme& scheme) {
  const auto& s1 = scheme.grid(1);
  const auto& s2 = scheme.grid(2);
  OverlapMatrix out;
  out.m1 = scheme.m1();
  out.m2 = scheme.m2();
  out.len1.resize(out.m1);
  out.len2.resize(out.m2);
  for (int i = 0; i < out.m1; ++i) out.len1[i] = s1[i + 1] - s1[i];
  for (int j = 0; j < out.m2; ++j) out.len2[j] = s2[j + 1] - s2[j];
  out.sqrt_len1 = out.len1.cwiseSqrt();
  out.sqrt_len2 = out.len2.cwiseSqrt();

  std::vector<int> rows, cols;
  std::vector<double> vals;
  const std::size_t reserve = static_cast<std::size_t>(out.m1 + out.m2);
  rows.reserve(reserve);
  cols.reserve(reserve);
  vals.reserve(reserve);
  out.raw_overlap.reserve(reserve);
  int i = 1, j = 1;
  while (i <= out.m1 && j <= out.m2) {
    const double ov = std::min(s1[i], s2[j]) - std::max(s1[i - 1], s2[j - 1]);
    if (ov > 0.0) {
      rows.push_back(i - 1);
      cols.push_back(j - 1);
      out.raw_overlap.push_back(ov);
      vals.push_back(std::min(1.0, ov / (out.sqrt_len1[i - 1] * out.sqrt_len2[j - 1])));
    }
    if (s1[i] < s2[j]) {
      ++i;
    } else if (s2[j] < s1[i]) {
      ++j;
    } else {
      ++i;
      ++j;
    }
  }
  out.g = BandedSparse(out.m1, out.m2, std::move(rows), std::move(cols), std::move(vals));
  return out;
}

namespace {

std::vector<int> assign_windows(const std::vector<double>& grid, const Partition& windows) {
  std::vector<int> w(grid.size() - 1);
  for (std::size_t i = 1; i < grid.size(); ++i) w[i - 1] = windows.locate(grid[i]);
  return w;
}

WindowTable empty_table(const Partition& windows, int p_max) {
  WindowTable t;
  t.p_max = p_max;
  t.values = Matrix::Zero(windows.windows(), p_max + 1);
  for (int k = 0; k < windows.windows(); ++k) t.window_length.push_back(windows.length(k));
  return t;
}

}  // namespace

WindowTable trace_powers(const SamplingScheme& scheme, const OverlapMatrix& overlap, int p_max,
                         const Partition& windows) {
  if (p_max < 1) throw ContractError("trace_powers needs p_max >= 1");
  windows.validate(scheme.horizon());
  const Matrix diag = overlap.g.diagonal_powers(p_max);
  const std::vector<int> win = assign_windows(scheme.grid(1), windows);
  WindowTable t = empty_table(windows, p_max);
  for (int i = 0; i < overlap.m1; ++i) t.values.row(win[i]) += scheme.h_n() * diag.row(i);
  return t;
}

WeightedTables weighted_functionals(const SamplingScheme& scheme, const OverlapMatrix& overlap,
                                    int p_max, const Partition& windows) {
  if (p_max < 0) throw ContractError("weighted_functionals needs p_max >= 0");
  windows.validate(scheme.horizon());
  const std::vector<int> win1 = assign_windows(scheme.grid(1), windows);
  const std::vector<int> win2 = assign_windows(scheme.grid(2), windows);
  WeightedTables out{empty_table(windows, p_max), empty_table(windows, p_max),
                     empty_table(windows, p_max)};
  const BandedSparse& g = overlap.g;
  std::vector<double> a(overlap.sqrt_len1.data(), overlap.sqrt_len1.data() + overlap.m1);
  std::vector<double> b(static_cast<std::size_t>(overlap.m1));
  std::vector<double> c(overlap.sqrt_len2.data(), overlap.sqrt_len2.data() + overlap.m2);
  std::vector<double> tmp1(static_cast<std::size_t>(overlap.m1));
  std::vector<double> tmp2(static_cast<std::size_t>(overlap.m2));
  g.multiply(c, b);  // G I2
  for (int p = 0; p <= p_max; ++p) {
    for (int i = 0; i < overlap.m1; ++i) {
      out.f11.values(win1[i], p) += overlap.sqrt_len1[i] * a[i];
      out.f12.values(win1[i], p) += overlap.sqrt_len1[i] * b[i];
    }
    for (int j = 0; j < overlap.m2; ++j) out.f22.values(win2[j], p) += overlap.sqrt_len2[j] * c[j];
    if (p == p_max) break;
    g.multiply_transpose(a, tmp2);
    g.multiply(tmp2, a);
    g.multiply_transpose(b, tmp2);
    g.multiply(tmp2, b);
    g.multiply(c, tmp1);
    g.multiply_transpose(tmp1, c);
  }
  return out;
}

std::vector<double> window_counts(const SamplingScheme& scheme, int l, const Partition& windows) {
  windows.validate(scheme.horizon());
  std::vector<double> out(static_cast<std::size_t>(windows.windows()), 0.0);
  for (int w : assign_windows(scheme.grid(l), windows)) out[w] += scheme.h_n();
  return out;
}

}  // namespace nsync
