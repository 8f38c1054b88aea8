#include "nsync/stats.hpp"

#include "nsync/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nsync::stats {

MeanSd mean_sd(std::span<const double> x) {
  if (x.empty()) throw ContractError("mean_sd of an empty sample");
  // Welford update.
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double v : x) {
    ++k;
    const double d = v - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (v - mean);
  }
  const double sd = k > 1 ? std::sqrt(m2 / static_cast<double>(k - 1)) : 0.0;
  return {mean, sd};
}

namespace {
double central_moment(std::span<const double> x, double mean, int q) {
  double s = 0.0;
  for (double v : x) s += std::pow(v - mean, q);
  return s / static_cast<double>(x.size());
}
}  // namespace

double skewness(std::span<const double> x) {
  const double m = mean_sd(x).mean;
  const double m2 = central_moment(x, m, 2);
  if (!(m2 > 0.0)) return 0.0;
  return central_moment(x, m, 3) / std::pow(m2, 1.5);
}

double excess_kurtosis(std::span<const double> x) {
  const double m = mean_sd(x).mean;
  const double m2 = central_moment(x, m, 2);
  if (!(m2 > 0.0)) return 0.0;
  return central_moment(x, m, 4) / (m2 * m2) - 3.0;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double ks_normal(std::span<const double> x) {
  if (x.empty()) throw ContractError("ks_normal of an empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = normal_cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace nsync::stats
