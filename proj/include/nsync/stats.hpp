#pragma once

#include <span>
#include <vector>

namespace nsync::stats {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1 denominator); 0 for a single value
};

MeanSd mean_sd(std::span<const double> x);
double skewness(std::span<const double> x);
double excess_kurtosis(std::span<const double> x);

double normal_cdf(double x);
/// sup |F_n - Phi| of the sample against the standard normal.
double ks_normal(std::span<const double> x);

}  // namespace nsync::stats
