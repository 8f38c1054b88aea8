#pragma once

#include "nsync/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace nsync::quad {

// 10-point Gauss-Legendre rule on [-1, 1], symmetric half.
inline constexpr std::array<double, 5> kNodes = {
    0.1488743389816312108848260, 0.4333953941292471907992659, 0.6794095682990244062343274,
    0.8650633666889845107320967, 0.9739065285171717200779640};
inline constexpr std::array<double, 5> kWeights = {
    0.2955242247147528701738930, 0.2692667193099963550912269, 0.2190863625159820439955349,
    0.1494513491505805931457763, 0.0666713443086881375935688};

struct RuleValue {
  double value = 0.0;
  double abs_value = 0.0;  // same rule applied to |f|, used as the tolerance scale
};

template <class F>
RuleValue gauss_legendre10(F&& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  RuleValue out;
  for (std::size_t k = 0; k < kNodes.size(); ++k) {
    const double dx = half * kNodes[k];
    const double f1 = f(mid - dx);
    const double f2 = f(mid + dx);
    out.value += kWeights[k] * (f1 + f2);
    out.abs_value += kWeights[k] * (std::abs(f1) + std::abs(f2));
  }
  out.value *= half;
  out.abs_value *= half;
  return out;
}

namespace detail {
template <class F>
double adaptive(F& f, double a, double b, const RuleValue& whole, double rel_tol,
                double global, double span, int depth, int max_depth) {
  const double m = 0.5 * (a + b);
  const RuleValue left = gauss_legendre10(f, a, m);
  const RuleValue right = gauss_legendre10(f, m, b);
  const double halves = left.value + right.value;
  const double scale = left.abs_value + right.abs_value;
  const double err = std::abs(halves - whole.value);
  // Allowance against the whole integral shrinks like sqrt(width share), so
  // cells at an integrable endpoint singularity still terminate.
  if (err <= rel_tol * std::max(scale, global * std::sqrt((b - a) / span)) || scale == 0.0)
    return halves;
  if (depth >= max_depth) {
    std::ostringstream os;
    os << "quadrature did not converge on (" << a << ", " << b << "]: achieved tolerance "
       << (scale > 0 ? err / scale : err);
    throw NumericError(os.str());
  }
  return adaptive(f, a, m, left, rel_tol, global, span, depth + 1, max_depth) +
         adaptive(f, m, b, right, rel_tol, global, span, depth + 1, max_depth);
}
}  // namespace detail

/// Integral of f over (a, b]. Compares the 10-point rule against its bisection
/// and keeps bisecting the disagreeing halves until agreement reaches rel_tol,
/// relative to the local |f| integral or a width-weighted share of the global one.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-12, int max_depth = 40) {
  if (!(b > a)) return 0.0;
  const RuleValue whole = gauss_legendre10(f, a, b);
  return detail::adaptive(f, a, b, whole, rel_tol, whole.abs_value, b - a, 0, max_depth);
}

}  // namespace nsync::quad
