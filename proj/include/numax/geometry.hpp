#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "numax/linalg.hpp"
#include "numax/moments.hpp"

namespace numax::geometry {

struct NotSymmetric : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoRoot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EigResult {
  std::vector<double> values;  // descending
  Matrix vectors;              // orthonormal columns, same order as values
};

struct JacobiOptions {
  int max_sweeps = 100;
  double off_tol = 1e-12;       // relative off-diagonal tolerance
  double symmetry_tol = 1e-12;  // input symmetry requirement
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
EigResult eig_sym(const Matrix& m, const JacobiOptions& opts = {});

double min_eigenvalue(const Matrix& m);

/// Frobenius-nearest PSD matrix: eigendecompose, clamp negative eigenvalues
/// to zero, reconstruct.
Matrix project_psd(const Matrix& m);

/// Euclidean projection of (value, rate) onto
///   { (a, b) : a <= b^(j/order), 0 <= b <= rate_cap }.
/// For j == order the boundary is the halfspace a <= b; for j < order the
/// boundary point solves a scalar stationarity equation (safeguarded Newton).
struct HypographPoint {
  double value;
  double rate;
};
HypographPoint project_hypograph(double value, double rate, int j, int order, double rate_cap);

/// Euclidean projection of (x, r) onto
///   { x >= 0, lo <= r <= hi, r = sum(x) }.
struct RateSplitPoint {
  std::vector<double> x;
  double rate;
};
RateSplitPoint project_rate_split(std::span<const double> x, double rate, double lo, double hi);

/// Same projection with per-entry upper bounds x_l <= caps_l folded in.
RateSplitPoint project_rate_split_capped(std::span<const double> x, double rate, double lo,
                                         double hi, std::span<const double> caps);

/// Euclidean projection of (m_1..m_order, r) onto the joint hypograph
///   { m_j <= r^(j/order) for all j, 0 <= r <= rate_cap }.
/// For fixed r the optimal m_j clamp to min(m_j, r^(j/order)); the optimal r
/// solves a strictly convex 1-D problem by bisection on the derivative.
struct JointHypographPoint {
  std::vector<double> m;  // length order, entries for j = 1..order
  double rate;
};
JointHypographPoint project_joint_hypograph(std::span<const double> m, double rate, int order,
                                            double rate_cap);

/// Euclidean projection of a moment vector onto { m : H(m) PSD } for a
/// structured linear map H into symmetric matrices (a Hankel window, or the
/// localized combination beta*M(0,l-2) - M(2,l)). Solved exactly by
/// accelerated projected gradient on the dual with eigenvalue clamping;
/// `multipliers` is warm-start state and may be empty.
struct MomentConeSpec {
  // H(m)_{ab} = sum over terms: coef * m[index]; encoded per entry.
  int dim = 0;                       // matrix side length
  std::vector<std::vector<std::pair<int, double>>> entry_terms;  // per (a,b), a<=b row-major upper
  double lipschitz = 0.0;            // lambda_max of H H*
  int moment_len = 0;

  static MomentConeSpec hankel_window(int k, int h, int moment_len);
  static MomentConeSpec localized(double beta, int order);

  Matrix apply(std::span<const double> m) const;
  void apply_adjoint(const Matrix& lambda, std::span<double> out) const;
};

struct MomentConeWork {
  Matrix multipliers;  // dual state, kept across calls for warm starting
};

std::vector<double> project_moment_cone(const MomentConeSpec& spec, std::span<const double> m,
                                        MomentConeWork& work, double tol = 1e-11,
                                        int max_iters = 500);

/// Euclidean projection of a full moment vector plus rate onto
///   { m_0 = 1, M(0,l,m) >= 0, beta*M(0,l-2,m) - M(2,l,m) >= 0,
///     m_j <= r^(j/l) for j = 1..l, 0 <= r <= rate_cap }.
/// Solved by a log-barrier Newton method on the 1+l-dimensional block; the
/// moment body touches the hypograph surface tangentially at Dirac points,
/// where alternating projections degrade to sublinear rates.
struct MomentBlockPoint {
  moments::MomentVector m;
  double r = 0.0;
};

/// Warm-start state: the previous strictly feasible solution lets the
/// barrier ladder begin near its top.
struct MomentBlockWork {
  std::vector<double> warm;  // (m_1..m_l, r) when nonempty
};

MomentBlockPoint project_moment_block(const moments::MomentVector& m, double r, double beta,
                                      int order, double rate_cap, double barrier_t_max = 1e13);
MomentBlockPoint project_moment_block(const moments::MomentVector& m, double r, double beta,
                                      int order, double rate_cap, MomentBlockWork& work,
                                      double barrier_t_max = 1e13);

/// A point in a source's local feasible set.
struct SourcePoint {
  std::vector<double> x;  // first-hop rates, length |L_s|
  moments::MomentVector m;
  double r = 0.0;
};

struct DykstraConfig {
  int max_cycles = 2000;
  double tolerance = 1e-8;
  double inner_tolerance = 1e-10;
  int inner_max_iters = 500;
};

struct ProjectionReport {
  SourcePoint result;
  int iterations = 0;
  double max_constraint_violation = 0.0;
  bool converged = true;
};

/// Scratch space for project_source_set; reusable across calls to avoid
/// repeated allocation and to warm start the PSD dual iterations.
struct SourceProjectionWork {
  MomentConeWork moment_cone;
  MomentConeWork localized_cone;
  MomentBlockWork moment_block;
  std::vector<double> corrections;  // Dykstra correction vectors, flattened
  bool has_spec = false;
  MomentConeSpec spec_moment;
  MomentConeSpec spec_localized;
  double spec_beta = -1.0;
  int spec_order = -1;
};

/// Largest violation of any constraint defining the source set.
double source_set_violation(const SourcePoint& p, const moments::UtilitySpec& u,
                            std::span<const double> link_caps);

/// Projection onto the source set A_s: Dykstra alternating projections over
///   (i) the affine set m_0 = 1,
///   (ii) the PSD cone of M(0, l, m) pulled back to moment coordinates,
///   (iii) the PSD cone of beta*M(0, l-2, m) - M(2, l, m) pulled back,
///   (iv) the hypographs m_j <= r^(j/l) for j = 1..l,
///   (v) per-link caps x_l <= c_l,
///   (vi) the rate-split set { x >= 0, xi <= r <= zeta, r = sum(x) }.
ProjectionReport project_source_set(const SourcePoint& p, const moments::UtilitySpec& u,
                                    std::span<const double> link_caps, const DykstraConfig& cfg,
                                    SourceProjectionWork& work);

/// Convenience overload with fresh scratch space.
ProjectionReport project_source_set(const SourcePoint& p, const moments::UtilitySpec& u,
                                    std::span<const double> link_caps,
                                    const DykstraConfig& cfg = {});

}  // namespace numax::geometry
