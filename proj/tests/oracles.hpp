#pragma once

// Test-only oracles. Everything here is deliberately independent of the
// library's implementation paths: a Householder+QL eigensolver (the library
// uses cyclic Jacobi), brute-force grid searches, and feasible-point
// samplers.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "numax/geometry.hpp"
#include "numax/linalg.hpp"
#include "numax/moments.hpp"

namespace oracle {

// Householder reduction to tridiagonal form, then QL with implicit shifts.
// Eigenvalues come back ascending in d; eigenvectors are the columns of z.
inline void eig_sym_ql(const numax::Matrix& in, std::vector<double>& d, numax::Matrix& z) {
  const int n = in.rows;
  z = in;
  d.assign(n, 0.0);
  std::vector<double> e(n, 0.0);

  for (int i = n - 1; i >= 1; --i) {
    const int l = i - 1;
    double h = 0.0, scale = 0.0;
    if (l > 0) {
      for (int k = 0; k <= l; ++k) scale += std::fabs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (int k = 0; k <= l; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = (f >= 0.0 ? -std::sqrt(h) : std::sqrt(h));
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j <= l; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += z(j, k) * z(i, k);
          for (int k = j + 1; k <= l; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        const double hh = f / (h + h);
        for (int j = 0; j <= l; ++j) {
          f = z(i, j);
          e[j] = g = e[j] - hh * f;
          for (int k = 0; k <= j; ++k) z(j, k) -= (f * e[k] + g * z(i, k));
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (int i = 0; i < n; ++i) {
    const int l = i - 1;
    if (d[i] != 0.0) {
      for (int j = 0; j <= l; ++j) {
        double g = 0.0;
        for (int k = 0; k <= l; ++k) g += z(i, k) * z(k, j);
        for (int k = 0; k <= l; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (int j = 0; j <= l; ++j) z(j, i) = z(i, j) = 0.0;
  }

  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
        if (std::fabs(e[m]) <= 1e-300 + 1e-16 * dd) break;
      }
      if (m != l) {
        if (iter++ == 60) throw std::runtime_error("QL oracle: too many iterations");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::fabs(r) : -std::fabs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        for (int i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (int k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && m - 1 >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

// Independent eigen-clamp PSD projection through the QL path.
inline numax::Matrix project_psd_ql(const numax::Matrix& m) {
  std::vector<double> d;
  numax::Matrix z;
  eig_sym_ql(m, d, z);
  const int n = m.rows;
  numax::Matrix out(n, n);
  for (int k = 0; k < n; ++k) {
    const double lam = std::max(0.0, d[k]);
    if (lam == 0.0) continue;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) out(r, c) += lam * z(r, k) * z(c, k);
  }
  return out;
}

// Grid oracle for the hypograph projection: for each rate b on the grid, the
// nearest feasible value coordinate is min(a0, b^(j/l)).
inline numax::geometry::HypographPoint hypograph_grid(double a0, double b0, int j, int order,
                                                      double cap, int points) {
  double best_d = std::numeric_limits<double>::infinity();
  numax::geometry::HypographPoint best{0.0, 0.0};
  for (int i = 0; i <= points; ++i) {
    const double b = cap * static_cast<double>(i) / points;
    const double a = std::min(a0, numax::moments::fractional_power(b, j, order));
    const double d = (a - a0) * (a - a0) + (b - b0) * (b - b0);
    if (d < best_d) {
      best_d = d;
      best = {a, b};
    }
  }
  return best;
}

// Grid oracle for the rate-split projection over a 2-link source.
inline numax::geometry::RateSplitPoint rate_split_grid2(double x1, double x2, double r0, double lo,
                                                        double hi, double xmax, int points) {
  double best_d = std::numeric_limits<double>::infinity();
  numax::geometry::RateSplitPoint best;
  best.x = {0.0, 0.0};
  best.rate = lo;
  for (int i = 0; i <= points; ++i) {
    for (int j = 0; j <= points; ++j) {
      const double a = xmax * static_cast<double>(i) / points;
      const double b = xmax * static_cast<double>(j) / points;
      const double r = a + b;
      if (r < lo || r > hi) continue;
      const double d = (a - x1) * (a - x1) + (b - x2) * (b - x2) + (r - r0) * (r - r0);
      if (d < best_d) {
        best_d = d;
        best = {{a, b}, r};
      }
    }
  }
  return best;
}

// Random feasible points of a source set: Dirac mixtures for the moment block
// and a random split of the aggregate rate over the first-hop links.
inline numax::geometry::SourcePoint sample_source_point(const numax::moments::UtilitySpec& u,
                                                        const std::vector<double>& caps,
                                                        std::mt19937_64& rng) {
  using namespace numax;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  geometry::SourcePoint p;
  const int l = u.order;

  double cap_total = 0.0;
  for (double c : caps) cap_total += c;
  const double hi = std::min(u.rate_upper, cap_total);
  const double r = u.rate_lower + (hi - u.rate_lower) * uni(rng);
  p.r = r;

  // Rate split by random proportions, then repair against per-link caps.
  p.x.assign(caps.size(), 0.0);
  std::vector<double> weights(caps.size());
  double wsum = 0.0;
  for (auto& w : weights) {
    w = 0.05 + uni(rng);
    wsum += w;
  }
  double remaining = r;
  for (int pass = 0; pass < 8 && remaining > 1e-12; ++pass) {
    double free_w = 0.0;
    for (size_t i = 0; i < caps.size(); ++i)
      if (p.x[i] < caps[i] - 1e-12) free_w += weights[i];
    if (free_w <= 0.0) break;
    double placed = 0.0;
    for (size_t i = 0; i < caps.size(); ++i) {
      if (p.x[i] >= caps[i] - 1e-12) continue;
      const double want = remaining * weights[i] / free_w;
      const double add = std::min(want, caps[i] - p.x[i]);
      p.x[i] += add;
      placed += add;
    }
    remaining -= placed;
  }
  // If caps cannot carry r the caller picked an infeasible window; clamp r.
  double sum = 0.0;
  for (double v : p.x) sum += v;
  p.r = sum;
  if (p.r < u.rate_lower) return sample_source_point(u, caps, rng);

  // Dirac mixture with atoms below r^(1/l) in magnitude.
  const double ymax = std::min(std::sqrt(u.moment_bound),
                               numax::moments::fractional_power(p.r, 1, l));
  const int atoms = 1 + static_cast<int>(uni(rng) * 3);
  std::vector<double> ys(atoms), ws(atoms);
  double tot = 0.0;
  for (int a = 0; a < atoms; ++a) {
    ys[a] = (2.0 * uni(rng) - 1.0) * ymax;
    ws[a] = 0.05 + uni(rng);
    tot += ws[a];
  }
  p.m.m.assign(l + 1, 0.0);
  for (int a = 0; a < atoms; ++a) {
    const auto dm = numax::moments::dirac_moments(ys[a], l);
    for (int j = 0; j <= l; ++j) p.m.m[j] += (ws[a] / tot) * dm.m[j];
  }
  return p;
}

inline double source_point_distance(const numax::geometry::SourcePoint& a,
                                    const numax::geometry::SourcePoint& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.x.size(); ++i) acc += (a.x[i] - b.x[i]) * (a.x[i] - b.x[i]);
  for (size_t j = 0; j < a.m.m.size(); ++j) acc += (a.m.m[j] - b.m.m[j]) * (a.m.m[j] - b.m.m[j]);
  acc += (a.r - b.r) * (a.r - b.r);
  return std::sqrt(acc);
}

}  // namespace oracle
