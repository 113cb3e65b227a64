#include "numax/moments.hpp"

#include <cmath>

#include "numax/geometry.hpp"

namespace numax::moments {

void UtilitySpec::validate() const {
  if (order <= 0 || order % 2 != 0) throw OddOrder("utility order must be a positive even integer");
  if (coefficients.size() != static_cast<size_t>(order) + 1)
    throw std::invalid_argument("utility needs order+1 coefficients");
  if (rate_lower < 0.0 || rate_upper <= rate_lower)
    throw std::invalid_argument("rate bounds must satisfy 0 <= lower < upper");
  const double min_beta = auto_moment_bound(rate_upper, order);
  if (moment_bound < min_beta - 1e-12)
    throw std::invalid_argument("moment bound too small: the lifted optimum would be infeasible");
}

double UtilitySpec::auto_moment_bound(double rate_upper, int order) {
  return std::pow(rate_upper, 2.0 / order);
}

double fractional_power(double r, int j, int order) {
  if (j == 0) return 1.0;
  if (r == 0.0) return 0.0;
  return std::pow(r, static_cast<double>(j) / order);
}

double eval_utility(const UtilitySpec& u, double rate) {
  if (rate < 0.0) throw NegativeRate("rate must be nonnegative");
  double acc = 0.0;
  for (int j = 0; j <= u.order; ++j) acc += u.coefficients[j] * fractional_power(rate, j, u.order);
  return acc;
}

Matrix hankel(const MomentVector& m, int k, int h) {
  if (k < 0 || h < 0 || k + 2 * h > m.order())
    throw IndexOverflow("hankel window exceeds moment vector length");
  Matrix out(h + 1, h + 1);
  for (int a = 0; a <= h; ++a)
    for (int b = 0; b <= h; ++b) out(a, b) = m.m[k + a + b];
  return out;
}

MomentVector dirac_moments(double y, int order) {
  MomentVector mv;
  mv.m.resize(order + 1);
  double p = 1.0;
  for (int j = 0; j <= order; ++j) {
    mv.m[j] = p;
    p *= y;
  }
  return mv;
}

FeasibilityResult check_moment_feasible(const MomentVector& m, double beta, int order,
                                        double tol) {
  if (order <= 0 || order % 2 != 0) throw OddOrder("feasibility check requires even order");
  if (m.order() != order) throw IndexOverflow("moment vector length does not match order");

  FeasibilityResult res;
  const Matrix full = hankel(m, 0, order / 2);
  const double eig_full = geometry::min_eigenvalue(full);
  if (eig_full < -tol) {
    res.feasible = false;
    res.witness = {full, eig_full, "moment"};
    return res;
  }

  const Matrix low = hankel(m, 0, order / 2 - 1);
  const Matrix shifted = hankel(m, 2, order / 2 - 1);
  const Matrix localized = add_scaled(low, beta, shifted, -1.0);
  const double eig_loc = geometry::min_eigenvalue(localized);
  if (eig_loc < -tol) {
    res.feasible = false;
    res.witness = {localized, eig_loc, "localized"};
    return res;
  }

  res.feasible = true;
  return res;
}

}  // namespace numax::moments
