#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "numax/linalg.hpp"

namespace numax::moments {

/// Per-source utility description: a polynomial-like function
///   U(r) = sum_j p[j] * r^(j/order)
/// together with the aggregate-rate window [rate_lower, rate_upper] and the
/// bound moment_bound on the square of the lifted variable y = r^(1/order).
struct UtilitySpec {
  std::vector<double> coefficients;  // p_0 .. p_order
  int order = 0;                     // positive even
  double rate_lower = 0.0;           // xi >= 0
  double rate_upper = 0.0;           // zeta > xi
  double moment_bound = 0.0;         // beta >= zeta^(2/order)

  void validate() const;
  /// Default bound: the smallest value for which the lifted point of any
  /// feasible rate stays feasible.
  static double auto_moment_bound(double rate_upper, int order);
};

struct MomentVector {
  std::vector<double> m;  // m_0 .. m_order, length order+1

  int order() const { return static_cast<int>(m.size()) - 1; }
};

struct NegativeRate : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct OddOrder : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IndexOverflow : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// r^(j/order) with the conventions 0^0 = 1 and 0^(j/order) = 0 for j > 0.
double fractional_power(double r, int j, int order);

double eval_utility(const UtilitySpec& u, double rate);

/// Hankel view of a moment vector: entry (a,b) = m[k + a + b], size (h+1)^2.
/// Requires k + 2h <= order of m.
Matrix hankel(const MomentVector& m, int k, int h);

/// Moments of the Dirac measure at y: m_j = y^j.
MomentVector dirac_moments(double y, int order);

struct FeasibilityWitness {
  Matrix matrix;         // the violating PSD block
  double min_eigenvalue; // its smallest eigenvalue
  std::string which;     // "moment" or "localized"
};

struct FeasibilityResult {
  bool feasible = false;
  // Populated when infeasible.
  FeasibilityWitness witness;
};

/// Existence of a representing Borel measure on [-sqrt(beta), sqrt(beta)]
/// for an even-order truncated moment sequence: both
///   M(0, order, m) >= 0   and   beta*M(0, order-2, m) - M(2, order, m) >= 0
/// must be PSD with minimum eigenvalue >= -tol.
FeasibilityResult check_moment_feasible(const MomentVector& m, double beta, int order,
                                        double tol = 1e-9);

}  // namespace numax::moments
