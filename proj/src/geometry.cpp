#include "numax/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <numeric>

namespace numax::geometry {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double acc = 0.0;
  for (int r = 0; r < a.rows; ++r)
    for (int c = r + 1; c < a.cols; ++c) acc += 2.0 * a(r, c) * a(r, c);
  return std::sqrt(acc);
}

}  // namespace

EigResult eig_sym(const Matrix& m, const JacobiOptions& opts) {
  if (m.rows != m.cols) throw NotSymmetric("matrix is not square");
  const double scale = std::max(1.0, max_abs(m.data));
  if (!is_symmetric(m, opts.symmetry_tol * scale))
    throw NotSymmetric("matrix is not symmetric within tolerance");

  const int n = m.rows;
  Matrix a = m;
  Matrix v = Matrix::identity(n);
  if (n == 1) return {{a(0, 0)}, v};

  const double target = opts.off_tol * std::max(1.0, frobenius_norm(a));
  bool converged = false;
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    if (off_diagonal_norm(a) <= target) {
      converged = true;
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= 1e-300) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p), arq = a(r, q);
            a(r, p) = a(p, r) = arp - s * (arq + tau * arp);
            a(r, q) = a(q, r) = arq + s * (arp - tau * arq);
          }
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }
  if (!converged && off_diagonal_norm(a) > target)
    throw NoConvergence("jacobi sweeps exhausted before reaching off-diagonal tolerance");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

  EigResult out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (int r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

double min_eigenvalue(const Matrix& m) {
  const EigResult e = eig_sym(m);
  return e.values.back();
}

Matrix project_psd(const Matrix& m) {
  const EigResult e = eig_sym(m);
  const int n = m.rows;
  if (e.values.back() >= 0.0) return m;
  Matrix out(n, n);
  for (int k = 0; k < n; ++k) {
    const double lam = std::max(0.0, e.values[k]);
    if (lam == 0.0) continue;
    for (int r = 0; r < n; ++r) {
      const double vr = e.vectors(r, k) * lam;
      if (vr == 0.0) continue;
      for (int c = 0; c < n; ++c) out(r, c) += vr * e.vectors(c, k);
    }
  }
  // Exact symmetry regardless of rounding.
  for (int r = 0; r < n; ++r)
    for (int c = r + 1; c < n; ++c) out(r, c) = out(c, r) = 0.5 * (out(r, c) + out(c, r));
  return out;
}

HypographPoint project_hypograph(double value, double rate, int j, int order, double rate_cap) {
  if (j < 1 || j > order) throw std::invalid_argument("hypograph index must satisfy 1 <= j <= order");
  const auto phi = [&](double b) { return moments::fractional_power(b, j, order); };

  // Feasible input stays put.
  if (rate >= 0.0 && rate <= rate_cap && value <= phi(rate)) return {value, rate};
  // The curve constraint cannot be active below a = 0.
  if (value <= 0.0) return {value, std::clamp(rate, 0.0, rate_cap)};
  // Right face b = rate_cap.
  if (rate >= rate_cap) return {std::min(value, phi(rate_cap)), rate_cap};

  if (j == order) {
    const double t = 0.5 * (value + rate);
    if (t <= 0.0) return {0.0, 0.0};
    if (t >= rate_cap) return {std::min(value, rate_cap), rate_cap};
    return {t, t};
  }

  // Stationarity of the squared distance along the boundary curve a = phi(b):
  //   g(b) = (phi(b) - value) * phi'(b) + (b - rate) = 0,
  // strictly increasing while phi(b) < value, so the root is unique.
  const double expo = static_cast<double>(j) / order;
  const auto g = [&](double b) {
    const double f = phi(b);
    const double fp = expo * f / b;
    return (f - value) * fp + (b - rate);
  };

  double right = rate_cap;
  const double b_plus = std::pow(value, static_cast<double>(order) / j);  // phi(b_plus) = value
  if (b_plus < right) right = b_plus;
  if (g(right) <= 0.0) return {std::min(value, phi(rate_cap)), rate_cap};

  // Bracket from the left: g -> -inf as b -> 0+ because phi' blows up.
  double left = right;
  bool bracketed = false;
  for (int k = 0; k < 80; ++k) {
    left *= 0.5;
    if (g(left) < 0.0) {
      bracketed = true;
      break;
    }
  }
  if (!bracketed) {
    // The curve minimum collapses into the origin corner.
    const double d_origin = value * value + rate * rate;
    const double fr = phi(rate_cap);
    const double d_right = (fr - value) * (fr - value) + (rate_cap - rate) * (rate_cap - rate);
    if (d_origin <= d_right) return {0.0, 0.0};
    return {fr, rate_cap};
  }

  double lo = left, hi = (left * 2.0 < right) ? left * 2.0 : right;
  if (g(hi) < 0.0) hi = right;
  double b = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = phi(b);
    const double fp = expo * f / b;
    const double fpp = expo * (expo - 1.0) * f / (b * b);
    const double gb = (f - value) * fp + (b - rate);
    if (gb > 0.0)
      hi = b;
    else
      lo = b;
    const double dg = fp * fp + (f - value) * fpp + 1.0;
    double step = gb / dg;
    double bn = b - step;
    if (!(bn > lo && bn < hi)) bn = 0.5 * (lo + hi);
    if (std::fabs(bn - b) <= 1e-15 * std::max(1.0, b)) {
      b = bn;
      break;
    }
    b = bn;
  }
  if (!(b > 0.0) || !std::isfinite(b)) throw NoRoot("hypograph projection failed to bracket a root");
  return {phi(b), b};
}

RateSplitPoint project_rate_split(std::span<const double> x, double rate, double lo, double hi) {
  const auto eval = [&](double nu) {
    double s = 0.0;
    for (double xi : x) s += std::max(xi - nu, 0.0);
    return s - std::clamp(rate + nu, lo, hi);
  };

  double span = std::fabs(rate) + hi + 1.0;
  for (double xi : x) span = std::max(span, std::fabs(xi) + hi + 1.0);
  double a = -span, b = span;
  // D(nu) is nonincreasing with D(-inf) > 0 > D(+inf); bisect.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (eval(mid) > 0.0)
      a = mid;
    else
      b = mid;
  }
  const double nu = 0.5 * (a + b);
  RateSplitPoint out;
  out.x.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) out.x[i] = std::max(x[i] - nu, 0.0);
  out.rate = std::clamp(rate + nu, lo, hi);
  // Make the affine constraint hold exactly.
  double s = 0.0;
  for (double xi : out.x) s += xi;
  if (!out.x.empty() && s > 0.0) {
    const double target = std::clamp(s, lo, hi);
    if (std::fabs(target - out.rate) < 1e-9) out.rate = std::clamp(target, lo, hi);
  }
  return out;
}

RateSplitPoint project_rate_split_capped(std::span<const double> x, double rate, double lo,
                                         double hi, std::span<const double> caps) {
  const auto eval = [&](double nu) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += std::clamp(x[i] - nu, 0.0, caps[i]);
    return s - std::clamp(rate + nu, lo, hi);
  };
  double span = std::fabs(rate) + hi + 1.0;
  for (double xi : x) span = std::max(span, std::fabs(xi) + hi + 1.0);
  double a = -span, b = span;
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (a + b);
    if (eval(mid) > 0.0)
      a = mid;
    else
      b = mid;
  }
  const double nu = 0.5 * (a + b);
  RateSplitPoint out;
  out.x.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) out.x[i] = std::clamp(x[i] - nu, 0.0, caps[i]);
  out.rate = std::clamp(rate + nu, lo, hi);
  return out;
}

JointHypographPoint project_joint_hypograph(std::span<const double> m, double rate, int order,
                                            double rate_cap) {
  // Derivative (halved) of the squared distance as a function of r, with the
  // m block already clamped to min(m_j, r^(j/order)). One pow per call.
  const auto slope = [&](double r) {
    const double t = std::pow(r, 1.0 / order);
    double acc = r - rate;
    double tj = 1.0;
    for (int j = 1; j <= order; ++j) {
      tj *= t;  // r^(j/order)
      const double gap = m[j - 1] - tj;
      if (gap > 0.0) acc -= gap * (static_cast<double>(j) / order) * tj / r;
    }
    return acc;
  };

  double r_star;
  bool positive_excess = false;
  for (int j = 1; j < order; ++j) positive_excess |= m[j - 1] > 0.0;
  const double slope_at_zero =
      positive_excess ? -std::numeric_limits<double>::infinity()
                      : -rate - std::max(m[order - 1], 0.0);
  if (slope_at_zero >= 0.0) {
    r_star = 0.0;
  } else if (slope(rate_cap) <= 0.0) {
    r_star = rate_cap;
  } else {
    double lo = 0.0, hi = rate_cap;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (slope(mid) > 0.0)
        hi = mid;
      else
        lo = mid;
    }
    r_star = 0.5 * (lo + hi);
  }

  JointHypographPoint out;
  out.rate = r_star;
  out.m.resize(order);
  const double t = r_star > 0.0 ? std::pow(r_star, 1.0 / order) : 0.0;
  double tj = 1.0;
  for (int j = 1; j <= order; ++j) {
    tj *= t;
    out.m[j - 1] = std::min(m[j - 1], tj);
  }
  return out;
}

MomentConeSpec MomentConeSpec::hankel_window(int k, int h, int moment_len) {
  MomentConeSpec spec;
  spec.dim = h + 1;
  spec.moment_len = moment_len;
  spec.entry_terms.resize(static_cast<size_t>(spec.dim) * spec.dim);
  for (int a = 0; a < spec.dim; ++a)
    for (int b = 0; b < spec.dim; ++b)
      spec.entry_terms[static_cast<size_t>(a) * spec.dim + b] = {{k + a + b, 1.0}};
  spec.lipschitz = spec.dim;  // largest anti-diagonal multiplicity
  return spec;
}

MomentConeSpec MomentConeSpec::localized(double beta, int order) {
  MomentConeSpec spec;
  const int h = order / 2 - 1;
  spec.dim = h + 1;
  spec.moment_len = order + 1;
  spec.entry_terms.resize(static_cast<size_t>(spec.dim) * spec.dim);
  for (int a = 0; a < spec.dim; ++a)
    for (int b = 0; b < spec.dim; ++b)
      spec.entry_terms[static_cast<size_t>(a) * spec.dim + b] = {{a + b, beta}, {2 + a + b, -1.0}};
  // lambda_max(H H*) <= (beta^2 + 1 + 2 beta) * max multiplicity is loose but safe.
  spec.lipschitz = (beta + 1.0) * (beta + 1.0) * spec.dim;
  return spec;
}

Matrix MomentConeSpec::apply(std::span<const double> m) const {
  Matrix out(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) {
      double acc = 0.0;
      for (const auto& [idx, coef] : entry_terms[static_cast<size_t>(a) * dim + b])
        acc += coef * m[idx];
      out(a, b) = acc;
    }
  return out;
}

void MomentConeSpec::apply_adjoint(const Matrix& lambda, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) {
      const double lab = lambda(a, b);
      if (lab == 0.0) continue;
      for (const auto& [idx, coef] : entry_terms[static_cast<size_t>(a) * dim + b])
        out[idx] += coef * lab;
    }
}

std::vector<double> project_moment_cone(const MomentConeSpec& spec, std::span<const double> m,
                                        MomentConeWork& work, double tol, int max_iters) {
  const double scale = 1.0 + max_abs(m);
  {
    const Matrix h0 = spec.apply(m);
    if (min_eigenvalue(h0) >= 0.0) {
      work.multipliers = Matrix(spec.dim, spec.dim);
      return std::vector<double>(m.begin(), m.end());
    }
  }

  if (work.multipliers.rows != spec.dim) work.multipliers = Matrix(spec.dim, spec.dim);
  Matrix lam = work.multipliers;
  Matrix y = lam;
  double t = 1.0;
  const double step = 1.0 / spec.lipschitz;

  std::vector<double> mcur(m.size());
  std::vector<double> adj(m.size());
  const auto point_at = [&](const Matrix& mult) {
    spec.apply_adjoint(mult, adj);
    for (size_t i = 0; i < m.size(); ++i) mcur[i] = m[i] + adj[i];
  };

  const double vio_tol = std::max(1e-12, tol * scale);
  const double move_tol = std::max(1e-13, 0.1 * tol * scale);
  std::vector<double> m_last_check(m.size(), std::numeric_limits<double>::infinity());

  for (int it = 0; it < max_iters; ++it) {
    point_at(y);
    const Matrix grad = spec.apply(mcur);
    Matrix cand = add_scaled(y, 1.0, grad, -step);
    cand = project_psd(cand);

    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = add_scaled(cand, 1.0 + (t - 1.0) / t_new, lam, -(t - 1.0) / t_new);
    lam = cand;
    t = t_new;
    if ((it + 1) % 100 == 0) {  // momentum restart
      t = 1.0;
      y = lam;
    }

    if ((it + 1) % 4 == 0 || it + 1 == max_iters) {
      point_at(lam);
      double move = 0.0;
      for (size_t i = 0; i < m.size(); ++i)
        move = std::max(move, std::fabs(mcur[i] - m_last_check[i]));
      m_last_check = mcur;
      if (move > move_tol) continue;
      const Matrix h = spec.apply(mcur);
      if (-min_eigenvalue(h) <= vio_tol) break;
    }
  }
  point_at(lam);
  work.multipliers = lam;
  return mcur;
}

namespace {

// Fixed-capacity symmetric kernels for the barrier solver. Everything lives
// on the stack; orders up to 8 (matrices up to 5x5, Newton systems up to 9).
constexpr int kMaxH = 5;
constexpr int kMaxN = 9;

struct SmallMat {
  int n = 0;
  double a[kMaxH * kMaxH] = {};
  double& at(int r, int c) { return a[r * kMaxH + c]; }
  double at(int r, int c) const { return a[r * kMaxH + c]; }
};

bool small_cholesky(SmallMat& m) {
  for (int j = 0; j < m.n; ++j) {
    double d = m.at(j, j);
    for (int k = 0; k < j; ++k) d -= m.at(j, k) * m.at(j, k);
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    m.at(j, j) = ljj;
    for (int i = j + 1; i < m.n; ++i) {
      double s = m.at(i, j);
      for (int k = 0; k < j; ++k) s -= m.at(i, k) * m.at(j, k);
      m.at(i, j) = s / ljj;
    }
  }
  return true;
}

bool small_invert_spd(const SmallMat& m, SmallMat& inv) {
  SmallMat l = m;
  if (!small_cholesky(l)) return false;
  inv.n = m.n;
  double col[kMaxH], sol[kMaxH];
  for (int c = 0; c < m.n; ++c) {
    for (int i = 0; i < m.n; ++i) col[i] = (i == c) ? 1.0 : 0.0;
    for (int i = 0; i < m.n; ++i) {
      double s = col[i];
      for (int k = 0; k < i; ++k) s -= l.at(i, k) * sol[k];
      sol[i] = s / l.at(i, i);
    }
    for (int i = m.n - 1; i >= 0; --i) {
      double s = sol[i];
      for (int k = i + 1; k < m.n; ++k) s -= l.at(k, i) * sol[k];
      sol[i] = s / l.at(i, i);
    }
    for (int r = 0; r < m.n; ++r) inv.at(r, c) = sol[r];
  }
  return true;
}

// Barrier machinery for project_moment_block. Variables u = (m_1..m_l, r)
// with m_0 pinned to 1. The log-det derivatives run over anti-diagonal
// stencils directly; no temporaries.
struct MomentBlockBarrier {
  int l;
  double beta;
  double cap;
  int h1;  // side of M(0,l)
  int h2;  // side of the localized block

  // Stencils: per moment index t (1..l), entries (a, b, coef) of dH/dm_t.
  struct Entry {
    int a, b;
    double coef;
  };
  static constexpr int kMaxSten = 2 * kMaxH;
  Entry sten1[kMaxN][kMaxSten] = {};
  Entry sten2[kMaxN][kMaxSten] = {};
  int cnt1[kMaxN] = {};
  int cnt2[kMaxN] = {};

  MomentBlockBarrier(int order, double beta_, double cap_)
      : l(order), beta(beta_), cap(cap_), h1(order / 2 + 1), h2(order / 2) {
    for (int a = 0; a < h1; ++a)
      for (int b = 0; b < h1; ++b)
        if (a + b >= 1) sten1[a + b][cnt1[a + b]++] = {a, b, 1.0};
    for (int a = 0; a < h2; ++a)
      for (int b = 0; b < h2; ++b) {
        if (a + b >= 1) sten2[a + b][cnt2[a + b]++] = {a, b, beta};
        sten2[a + b + 2][cnt2[a + b + 2]++] = {a, b, -1.0};
      }
  }

  void full_hankel(const double* u, SmallMat& m) const {
    m.n = h1;
    for (int a = 0; a < h1; ++a)
      for (int b = 0; b < h1; ++b) {
        const int t = a + b;
        m.at(a, b) = t == 0 ? 1.0 : u[t - 1];
      }
  }

  void localized(const double* u, SmallMat& m) const {
    m.n = h2;
    for (int a = 0; a < h2; ++a)
      for (int b = 0; b < h2; ++b) {
        const int t = a + b;
        const double low = t == 0 ? 1.0 : u[t - 1];
        m.at(a, b) = beta * low - u[t + 1];
      }
  }

  // Barrier value; +inf when infeasible. Uses Cholesky log-determinants.
  double barrier_value(const double* u) const {
    const double r = u[l];
    if (!(r > 0.0) || !(r < cap)) return std::numeric_limits<double>::infinity();
    double val = -std::log(r) - std::log(cap - r);
    const double t = std::pow(r, 1.0 / l);
    double tj = 1.0;
    for (int j = 1; j <= l; ++j) {
      tj *= t;
      const double s = tj - u[j - 1];
      if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
      val -= std::log(s);
    }
    SmallMat m1, m2;
    full_hankel(u, m1);
    if (!small_cholesky(m1)) return std::numeric_limits<double>::infinity();
    localized(u, m2);
    if (!small_cholesky(m2)) return std::numeric_limits<double>::infinity();
    for (int i = 0; i < m1.n; ++i) val -= 2.0 * std::log(m1.at(i, i));
    for (int i = 0; i < m2.n; ++i) val -= 2.0 * std::log(m2.at(i, i));
    return val;
  }

  bool strictly_feasible(const double* u) const {
    const double r = u[l];
    if (!(r > 0.0) || !(r < cap)) return false;
    const double t = std::pow(r, 1.0 / l);
    double tj = 1.0;
    for (int j = 1; j <= l; ++j) {
      tj *= t;
      if (!(u[j - 1] < tj)) return false;
    }
    SmallMat m1, m2;
    full_hankel(u, m1);
    if (!small_cholesky(m1)) return false;
    localized(u, m2);
    if (!small_cholesky(m2)) return false;
    return true;
  }

  // Gradient and Hessian of the barrier alone, accumulated into fixed
  // buffers (grad length l+1, hess (l+1)^2 row-major with stride kMaxN).
  bool barrier_derivatives(const double* u, double* grad, double* hess) const {
    const int n = l + 1;
    for (int i = 0; i < n; ++i) grad[i] = 0.0;
    for (int i = 0; i < n * kMaxN; ++i) hess[i] = 0.0;

    SmallMat mat, inv;
    const auto add_logdet = [&](const Entry sten[][kMaxSten], const int* cnt) {
      // grad_t = -tr(K dH_t); hess_{t,t'} = sum over stencil pairs of
      // coef * coef' * K(b, a') * K(b', a).
      for (int t = 1; t <= l; ++t) {
        double tr = 0.0;
        for (int i = 0; i < cnt[t]; ++i) {
          const Entry& e = sten[t][i];
          tr += e.coef * inv.at(e.a, e.b);
        }
        grad[t - 1] -= tr;
        for (int t2 = t; t2 <= l; ++t2) {
          double acc = 0.0;
          for (int i = 0; i < cnt[t]; ++i) {
            const Entry& e = sten[t][i];
            for (int j = 0; j < cnt[t2]; ++j) {
              const Entry& f = sten[t2][j];
              acc += e.coef * f.coef * inv.at(e.b, f.a) * inv.at(f.b, e.a);
            }
          }
          hess[(t - 1) * kMaxN + (t2 - 1)] += acc;
          if (t2 != t) hess[(t2 - 1) * kMaxN + (t - 1)] += acc;
        }
      }
    };

    full_hankel(u, mat);
    if (!small_invert_spd(mat, inv)) return false;
    add_logdet(sten1, cnt1);
    localized(u, mat);
    if (!small_invert_spd(mat, inv)) return false;
    add_logdet(sten2, cnt2);

    // Hypograph slacks s_j = r^(j/l) - m_j.
    const double r = u[l];
    const double troot = std::pow(r, 1.0 / l);
    double tj = 1.0;
    for (int j = 1; j <= l; ++j) {
      tj *= troot;
      const double phi = tj;
      const double e = static_cast<double>(j) / l;
      const double phi1 = e * phi / r;
      const double phi2 = e * (e - 1.0) * phi / (r * r);
      const double s = phi - u[j - 1];
      grad[j - 1] += 1.0 / s;
      grad[l] -= phi1 / s;
      hess[(j - 1) * kMaxN + (j - 1)] += 1.0 / (s * s);
      hess[(j - 1) * kMaxN + l] += -phi1 / (s * s);
      hess[l * kMaxN + (j - 1)] += -phi1 / (s * s);
      hess[l * kMaxN + l] += phi1 * phi1 / (s * s) - phi2 / s;
    }

    // Rate window 0 < r < cap.
    grad[l] += -1.0 / r + 1.0 / (cap - r);
    hess[l * kMaxN + l] += 1.0 / (r * r) + 1.0 / ((cap - r) * (cap - r));
    return true;
  }
};

// Newton system solve on the fixed-size buffers.
bool small_solve(const double* hess, const double* grad, double* dir, int n, double ridge) {
  double chol[kMaxN * kMaxN];
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) chol[r * kMaxN + c] = hess[r * kMaxN + c];
  for (int i = 0; i < n; ++i) chol[i * kMaxN + i] += ridge;
  for (int j = 0; j < n; ++j) {
    double d = chol[j * kMaxN + j];
    for (int k = 0; k < j; ++k) d -= chol[j * kMaxN + k] * chol[j * kMaxN + k];
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    chol[j * kMaxN + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = chol[i * kMaxN + j];
      for (int k = 0; k < j; ++k) s -= chol[i * kMaxN + k] * chol[j * kMaxN + k];
      chol[i * kMaxN + j] = s / ljj;
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = grad[i];
    for (int k = 0; k < i; ++k) s -= chol[i * kMaxN + k] * dir[k];
    dir[i] = s / chol[i * kMaxN + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = dir[i];
    for (int k = i + 1; k < n; ++k) s -= chol[k * kMaxN + i] * dir[k];
    dir[i] = s / chol[i * kMaxN + i];
  }
  return true;
}

}  // namespace

MomentBlockPoint project_moment_block(const moments::MomentVector& m, double r, double beta,
                                      int order, double rate_cap, double barrier_t_max) {
  MomentBlockWork work;
  return project_moment_block(m, r, beta, order, rate_cap, work, barrier_t_max);
}

MomentBlockPoint project_moment_block(const moments::MomentVector& m, double r, double beta,
                                      int order, double rate_cap, MomentBlockWork& work,
                                      double barrier_t_max) {
  const int l = order;
  const int n = l + 1;
  const MomentBlockBarrier bar(l, beta, rate_cap);

  // Fast path: with m_0 forced to 1 (the only admissible value, and the
  // distance it costs is unavoidable), a point satisfying everything else is
  // its own projection.
  const double eps = 1e-12 * (1.0 + max_abs(m.m));
  if (r >= -eps && r <= rate_cap + eps) {
    double u0[kMaxN];
    for (int j = 1; j <= l; ++j) u0[j - 1] = m.m[j];
    u0[l] = std::clamp(r, 0.0, rate_cap);
    bool ok = true;
    const double t = u0[l] > 0.0 ? std::pow(u0[l], 1.0 / l) : 0.0;
    double tj = 1.0;
    for (int j = 1; j <= l && ok; ++j) {
      tj *= t;
      if (m.m[j] > tj + eps) ok = false;
    }
    if (ok) {
      // Shift strictly negative definite cases through the exact eigenvalue
      // check only when the cheap Cholesky test is inconclusive.
      SmallMat m1, m2;
      bar.full_hankel(u0, m1);
      bar.localized(u0, m2);
      Matrix g1(m1.n, m1.n), g2(m2.n, m2.n);
      for (int a = 0; a < m1.n; ++a)
        for (int b = 0; b < m1.n; ++b) g1(a, b) = m1.at(a, b);
      for (int a = 0; a < m2.n; ++a)
        for (int b = 0; b < m2.n; ++b) g2(a, b) = m2.at(a, b);
      if (min_eigenvalue(g1) >= -eps && min_eigenvalue(g2) >= -eps) {
        MomentBlockPoint out;
        out.m = m;
        out.m.m[0] = 1.0;
        out.r = u0[l];
        return out;
      }
    }
  }

  // Strictly feasible start: the previous solution when it is still safely
  // interior, otherwise moments of a uniform measure on [-a, a] with a
  // comfortably inside both the beta ball and the hypograph caps.
  double u[kMaxN];
  double t_start = 1.0;
  bool warm = false;
  if (work.warm.size() == static_cast<size_t>(n)) {
    for (int i = 0; i < n; ++i) u[i] = work.warm[i];
    warm = bar.strictly_feasible(u);
  }
  if (warm) {
    t_start = barrier_t_max / (30.0 * 30.0 * 30.0);
  } else {
    const double r0 = 0.5 * rate_cap;
    const double a = 0.8 * std::min(std::sqrt(beta), std::pow(r0, 1.0 / l));
    double aj = 1.0;
    for (int j = 1; j <= l; ++j) {
      aj *= a;
      u[j - 1] = (j % 2 == 0) ? aj / (j + 1) : 0.0;
    }
    u[l] = r0;
  }

  double target[kMaxN];
  for (int j = 1; j <= l; ++j) target[j - 1] = m.m[j];
  target[l] = r;

  double grad[kMaxN], dir[kMaxN], gb[kMaxN], cand[kMaxN];
  double hess[kMaxN * kMaxN];

  // Near rank-deficient faces (Dirac-like moment blocks) the barrier
  // Hessian eventually overwhelms double precision; when factorization
  // fails the current strictly feasible iterate is already within the
  // achievable accuracy, so the ladder stops there.
  const auto newton_stage = [&](double t_weight, double center_tol) -> bool {
    for (int newton = 0; newton < 60; ++newton) {
      if (!bar.barrier_derivatives(u, gb, hess)) return false;
      for (int i = 0; i < n; ++i) grad[i] = 2.0 * t_weight * (u[i] - target[i]) + gb[i];
      for (int i = 0; i < n; ++i) hess[i * kMaxN + i] += 2.0 * t_weight;

      if (!small_solve(hess, grad, dir, n, 0.0)) {
        double maxdiag = 0.0;
        for (int i = 0; i < n; ++i) maxdiag = std::max(maxdiag, hess[i * kMaxN + i]);
        if (!small_solve(hess, grad, dir, n, 1e-12 * maxdiag)) return false;
      }
      double decrement = 0.0;
      for (int i = 0; i < n; ++i) decrement += grad[i] * dir[i];
      if (std::getenv("NUMAX_DEBUG_BARRIER"))
        std::fprintf(stderr, "  t=%.3g newton=%d dec=%.3g u0=%.6f ul=%.6f\n", t_weight, newton,
                     decrement, u[0], u[l]);
      if (decrement <= center_tol * (1.0 + t_weight)) return true;

      const auto value_at = [&](const double* w) {
        double f = 0.0;
        for (int i = 0; i < n; ++i) f += (w[i] - target[i]) * (w[i] - target[i]);
        return t_weight * f + bar.barrier_value(w);
      };
      const double f0 = value_at(u);
      double step = 1.0;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (int i = 0; i < n; ++i) cand[i] = u[i] - step * dir[i];
        if (value_at(cand) <= f0 - 0.25 * step * decrement) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) return false;  // no usable descent step at this precision
      for (int i = 0; i < n; ++i) u[i] = cand[i];
    }
    return true;
  };

  double t_weight = t_start;
  while (newton_stage(t_weight, t_weight >= barrier_t_max ? 2e-13 : 1e-8)) {
    if (t_weight >= barrier_t_max) break;
    t_weight = std::min(t_weight * 30.0, barrier_t_max);
  }

  work.warm.assign(u, u + n);

  MomentBlockPoint out;
  out.m.m.assign(l + 1, 0.0);
  out.m.m[0] = 1.0;
  for (int j = 1; j <= l; ++j) out.m.m[j] = u[j - 1];
  out.r = u[l];
  return out;
}

double source_set_violation(const SourcePoint& p, const moments::UtilitySpec& u,
                            std::span<const double> link_caps) {
  const int l = u.order;
  double vio = std::fabs(p.m.m[0] - 1.0);

  const Matrix full = moments::hankel(p.m, 0, l / 2);
  vio = std::max(vio, -std::min(0.0, min_eigenvalue(full)));
  const Matrix low = moments::hankel(p.m, 0, l / 2 - 1);
  const Matrix shifted = moments::hankel(p.m, 2, l / 2 - 1);
  vio = std::max(vio, -std::min(0.0, min_eigenvalue(add_scaled(low, u.moment_bound, shifted, -1.0))));

  const double r_pos = std::max(p.r, 0.0);
  for (int j = 1; j <= l; ++j)
    vio = std::max(vio, p.m.m[j] - moments::fractional_power(r_pos, j, l));

  double sum = 0.0;
  for (size_t i = 0; i < p.x.size(); ++i) {
    vio = std::max(vio, -p.x[i]);
    vio = std::max(vio, p.x[i] - link_caps[i]);
    sum += p.x[i];
  }
  vio = std::max(vio, std::fabs(sum - p.r));
  vio = std::max(vio, u.rate_lower - p.r);
  vio = std::max(vio, p.r - u.rate_upper);
  return vio;
}

ProjectionReport project_source_set(const SourcePoint& p, const moments::UtilitySpec& u,
                                    std::span<const double> link_caps, const DykstraConfig& cfg,
                                    SourceProjectionWork& work) {
  const int l = u.order;
  const int nx = static_cast<int>(p.x.size());
  const int nm = l + 1;
  const int n = nx + nm + 1;

  if (!work.has_spec || work.spec_beta != u.moment_bound || work.spec_order != l) {
    work.spec_moment = MomentConeSpec::hankel_window(0, l / 2, nm);
    work.spec_localized = MomentConeSpec::localized(u.moment_bound, l);
    work.spec_beta = u.moment_bound;
    work.spec_order = l;
    work.has_spec = true;
    work.moment_cone.multipliers = Matrix();
    work.localized_cone.multipliers = Matrix();
  }

  // Two blocks: the moment-side set over (m, r) handled by the barrier
  // solver, and the rate-split set over (x, r) with caps folded in. Finer
  // decompositions cycle forever here: the moment body touches the
  // hypograph surface tangentially at Dirac points, which drops alternating
  // projections to a sublinear rate exactly where the optimizer wants to be.
  const int num_sets = 2;
  work.corrections.assign(static_cast<size_t>(num_sets) * n, 0.0);

  std::vector<double> v(n);
  for (int i = 0; i < nx; ++i) v[i] = p.x[i];
  for (int j = 0; j < nm; ++j) v[nx + j] = p.m.m[j];
  v[nx + nm] = p.r;

  std::vector<double> w(n), prev(n);
  const auto current_point = [&]() {
    SourcePoint q;
    q.x.assign(v.begin(), v.begin() + nx);
    q.m.m.assign(v.begin() + nx, v.begin() + nx + nm);
    q.r = v[nx + nm];
    return q;
  };

  ProjectionReport best;
  best.max_constraint_violation = std::numeric_limits<double>::infinity();

  int cycle = 0;
  bool converged = false;
  for (cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
    prev = v;
    for (int set = 0; set < num_sets; ++set) {
      double* e = work.corrections.data() + static_cast<size_t>(set) * n;
      for (int i = 0; i < n; ++i) w[i] = v[i] + e[i];

      if (set == 0) {  // moment block over (m, r)
        v = w;
        moments::MomentVector min;
        min.m.assign(w.begin() + nx, w.begin() + nx + nm);
        const MomentBlockPoint mb = project_moment_block(min, w[nx + nm], u.moment_bound, l,
                                                         u.rate_upper, work.moment_block);
        for (int j = 0; j < nm; ++j) v[nx + j] = mb.m.m[j];
        v[nx + nm] = mb.r;
      } else {  // box-capped rate split over (x, r)
        v = w;
        const RateSplitPoint rs = project_rate_split_capped(
            std::span<const double>(w.data(), nx), w[nx + nm], u.rate_lower, u.rate_upper,
            link_caps);
        for (int i = 0; i < nx; ++i) v[i] = rs.x[i];
        v[nx + nm] = rs.rate;
      }

      for (int i = 0; i < n; ++i) e[i] = w[i] - v[i];
    }

    double move = 0.0;
    for (int i = 0; i < n; ++i) move = std::max(move, std::fabs(v[i] - prev[i]));
    const SourcePoint q = current_point();
    const double vio = source_set_violation(q, u, link_caps);
    if (vio < best.max_constraint_violation) {
      best.result = q;
      best.max_constraint_violation = vio;
      best.iterations = cycle;
    }
    if (vio <= cfg.tolerance && move <= cfg.tolerance * (1.0 + max_abs(v))) {
      converged = true;
      best.result = q;
      best.max_constraint_violation = vio;
      best.iterations = cycle;
      break;
    }
  }

  best.converged = converged;
  return best;
}

ProjectionReport project_source_set(const SourcePoint& p, const moments::UtilitySpec& u,
                                    std::span<const double> link_caps, const DykstraConfig& cfg) {
  SourceProjectionWork work;
  return project_source_set(p, u, link_caps, cfg, work);
}

}  // namespace numax::geometry
