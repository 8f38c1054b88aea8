#include "nsync/gaussian.hpp"

namespace nsync {

double gaussian_quadform_moments(const Matrix& a, const Matrix& v, int order) {
  if (a.rows() != a.cols() || v.rows() != v.cols() || a.rows() != v.rows())
    throw ContractError("quadratic-form moments need square matrices of equal size");
  if (order < 2 || order > 4) throw ContractError("supported moment orders are 2, 3 and 4");
  // The formulas hold for symmetric A; X'AX only sees the symmetric part anyway.
  const Matrix as = 0.5 * (a + a.transpose());
  const Matrix av = as * v;
  const Matrix av2 = av * av;
  const double t1 = av.trace();
  const double t2 = av2.trace();
  switch (order) {
    case 2: return t1 * t1 + 2.0 * t2;
    case 3: return t1 * t1 * t1 + 6.0 * t1 * t2 + 8.0 * (av2 * av).trace();
    default: {
      const double t3 = (av2 * av).trace();
      const double t4 = (av2 * av2).trace();
      return std::pow(t1, 4) + 12.0 * t1 * t1 * t2 + 12.0 * t2 * t2 + 32.0 * t1 * t3 + 48.0 * t4;
    }
  }
}

}  // namespace nsync
