#include "numax/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace numax {

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
  return t;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  assert(a.cols == b.rows);
  Matrix out(a.rows, b.cols);
  for (int r = 0; r < a.rows; ++r) {
    for (int k = 0; k < a.cols; ++k) {
      const double arK = a(r, k);
      if (arK == 0.0) continue;
      for (int c = 0; c < b.cols; ++c) out(r, c) += arK * b(k, c);
    }
  }
  return out;
}

Matrix add_scaled(const Matrix& a, double sa, const Matrix& b, double sb) {
  assert(a.rows == b.rows && a.cols == b.cols);
  Matrix out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = sa * a.data[i] + sb * b.data[i];
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  assert(static_cast<size_t>(a.cols) == x.size());
  std::vector<double> y(a.rows, 0.0);
  for (int r = 0; r < a.rows; ++r) {
    double acc = 0.0;
    const double* row = a.data.data() + static_cast<size_t>(r) * a.cols;
    for (int c = 0; c < a.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  assert(a.rows == b.rows && a.cols == b.cols);
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return std::sqrt(acc);
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows != a.cols) return false;
  for (int r = 0; r < a.rows; ++r)
    for (int c = r + 1; c < a.cols; ++c)
      if (std::fabs(a(r, c) - a(c, r)) > tol) return false;
  return true;
}

bool cholesky(Matrix& a) {
  const int n = a.rows;
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0)) return false;
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
      a(j, i) = 0.0;
    }
  }
  return true;
}

bool solve_spd(const Matrix& a, std::span<const double> b, std::span<double> x) {
  Matrix l = a;
  if (!cholesky(l)) return false;
  const int n = a.rows;
  // Forward substitution L y = b.
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  // Backward substitution L^T x = y.
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return true;
}

bool invert_spd(const Matrix& a, Matrix& inv) {
  Matrix l = a;
  if (!cholesky(l)) return false;
  const int n = a.rows;
  inv = Matrix(n, n);
  std::vector<double> col(n), sol(n);
  for (int c = 0; c < n; ++c) {
    std::fill(col.begin(), col.end(), 0.0);
    col[c] = 1.0;
    for (int i = 0; i < n; ++i) {
      double s = col[i];
      for (int k = 0; k < i; ++k) s -= l(i, k) * sol[k];
      sol[i] = s / l(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = sol[i];
      for (int k = i + 1; k < n; ++k) s -= l(k, i) * sol[k];
      sol[i] = s / l(i, i);
    }
    for (int r = 0; r < n; ++r) inv(r, c) = sol[r];
  }
  return true;
}

}  // namespace numax
