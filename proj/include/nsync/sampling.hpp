#pragma once

#include "nsync/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace nsync {

/// Two observation grids on [0, n h_n]. Grid l holds S_0^l = 0 < S_1^l < ... < S_{M_l}^l = n h_n.
class SamplingScheme {
 public:
  SamplingScheme(std::vector<double> grid1, std::vector<double> grid2, long n, double h_n);

  const std::vector<double>& grid(int l) const { return l == 1 ? grid1_ : grid2_; }
  long n() const { return n_; }
  double h_n() const { return h_n_; }
  double horizon() const { return static_cast<double>(n_) * h_n_; }

  /// Number of intervals of grid l.
  int count(int l) const { return static_cast<int>(grid(l).size()) - 1; }
  int m1() const { return count(1); }
  int m2() const { return count(2); }
  int m() const { return m1() + m2(); }

  /// i-th interval of grid l, 1-based as (S_{i-1}, S_i].
  Interval interval(int l, int i) const { return {grid(l)[i - 1], grid(l)[i]}; }
  /// Interval of the stacked index k in [0, M): grid 1 first, then grid 2.
  Interval stacked_interval(int k) const;
  int stacked_coordinate(int k) const { return k < m1() ? 1 : 2; }

  /// Retries spent by the generator on empty grids.
  int retries = 0;

 private:
  std::vector<double> grid1_;
  std::vector<double> grid2_;
  long n_;
  double h_n_;
};

/// Jump times of two independent Poisson processes of intensities lambda_l / h_n on
/// (0, n h_n), with both endpoints appended.
SamplingScheme generate_poisson(double lambda1, double lambda2, long n, double h_n,
                                std::uint64_t seed);

/// grid1 = {0, h, ..., n h}; grid2 shifted by offset2 * h with endpoints clamped.
SamplingScheme generate_equidistant(long n, double h_n, double offset2);

/// r_n: the largest interval length over both grids.
double max_gap(const SamplingScheme& scheme);

/// Generator description reused by constant estimation, simulation and Monte Carlo.
struct SchemeGenerator {
  enum class Kind { poisson, equidistant };
  Kind kind = Kind::poisson;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double offset2 = 0.0;

  SamplingScheme generate(long n, double h_n, std::uint64_t seed) const;
  std::string name() const;
};

/// Partition 0 = s_0 < s_1 < ... of the time axis, extended to cover the horizon.
struct Partition {
  std::vector<double> bounds;

  static Partition uniform(double horizon, double length = 1.0);
  /// Gaps drawn uniformly in [min_gap, 1].
  static Partition random(double horizon, std::uint64_t seed, double min_gap = 0.25);

  int windows() const { return static_cast<int>(bounds.size()) - 1; }
  double length(int k) const { return bounds[k + 1] - bounds[k]; }
  /// Window k (0-based) with s_k < t <= s_{k+1}; -1 for t <= 0.
  int locate(double t) const;
  /// Throws DomainError unless the windows cover (0, horizon] with gaps in (0, max_gap].
  void validate(double horizon, double max_gap = std::numeric_limits<double>::infinity()) const;
};

// Text format: "n h_n" header, then one line of grid-1 times and one line of grid-2 times.
void write_scheme(std::ostream& os, const SamplingScheme& scheme);
SamplingScheme read_scheme(std::istream& is);

}  // namespace nsync
