#pragma once

#include "nsync/overlap.hpp"
#include "nsync/sampling.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nsync {

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Limit constants of the sampling scheme, estimated per unit time.
///
/// `a[p]` holds a_p for p = 0..p_max, with a[0] the grid-1 intensity a_0^1. The grid-2
/// selector is used only for a_0^2; higher a_p are shared between coordinates.
struct SchemeConstants {
  int p_max = 0;
  McEstimate a0_1, a0_2;
  std::vector<McEstimate> a;
  std::vector<McEstimate> f11, f12, f22;
  int replications = 0;
  int retained_windows = 0;
  std::string windows = "unit";

  double a_p(int p) const { return a.at(static_cast<std::size_t>(p)).mean; }
  double a0(int l) const { return l == 1 ? a0_1.mean : a0_2.mean; }

  /// Constants of the synchronous equidistant scheme: every a_p and f_p equals 1.
  static SchemeConstants synchronous(int p_max);
  void validate() const;
};

/// Proxies for the count-moment and empty-gap conditions on the generator.
struct GapDiagnostics {
  std::vector<double> count_moments;  // E[N(t, t + h_n]^q], q = 1..4
  std::vector<double> u_values;       // window multiples u
  std::vector<double> empty_frequency;  // P(no point in a window of length u h_n)
};

struct ConstantsOptions {
  int replications = 200;
  int p_max = 40;
  long n = 500;
  double h_n = 0.1;
  std::optional<Partition> windows;  // default: unit windows over the horizon
  std::uint64_t seed = 1;
  int workers = 1;
};

struct ConstantsResult {
  SchemeConstants constants;
  GapDiagnostics diagnostics;
};

/// Averages per-unit-time window functionals over independent scheme draws, dropping
/// the first and the last window of every horizon.
ConstantsResult estimate_constants(const SchemeGenerator& generator, const ConstantsOptions& opts);

/// Smallest truncation order with rho_max^{2(p+1)} / (1 - rho_max^2) < 1e-12, at least 40.
int choose_p_max(double rho_max);

}  // namespace nsync
