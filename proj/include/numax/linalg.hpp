#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace numax {

/// Dense row-major matrix. Everything in this project is desk scale, so a
/// flat std::vector is all the storage strategy we need.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

Matrix transpose(const Matrix& a);
Matrix multiply(const Matrix& a, const Matrix& b);
Matrix add_scaled(const Matrix& a, double sa, const Matrix& b, double sb);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs(std::span<const double> a);

/// Frobenius norm of the difference a - b.
double frobenius_distance(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

bool is_symmetric(const Matrix& a, double tol);

/// In-place Cholesky factorization; returns false when the matrix is not
/// positive definite.
bool cholesky(Matrix& a);

/// Solves a x = b for symmetric positive definite a. Returns false when the
/// factorization fails.
bool solve_spd(const Matrix& a, std::span<const double> b, std::span<double> x);

/// Inverse of a symmetric positive definite matrix; returns false on failure.
bool invert_spd(const Matrix& a, Matrix& inv);

}  // namespace numax
