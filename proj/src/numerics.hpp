#pragma once

#include <cstddef>
#include <vector>

namespace fussl {

// Dense row-major matrix of 64-bit reals. Rows are samples throughout the
// project; columns are features/embedding dimensions.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool all_finite() const;
};

// Whitening result: `whitened = centered(input) * transform` and
// `residual` is the Frobenius distance of the whitened covariance from I.
struct WhitenReport {
  Matrix transform;  // cols x cols
  Matrix whitened;   // same shape as the input
  double residual = 0.0;
};

// a (r x k) times b (k x c). Fixed i-k-j accumulation order, so identical
// inputs give bit-identical outputs.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Lower-triangular L with L * L^T == a. `a` must be square and symmetric
// within 1e-9 (scaled by max |a_ij|). A pivot <= 1e-12 raises numeric_error
// naming the failing pivot index.
Matrix cholesky(const Matrix& a);

// Centers the columns of z, computes cov(z) + eps*I, and whitens with the
// inverse transpose of its Cholesky factor applied on the right.
//
// Residual bound: each eigenvalue of (I - cov(whitened)) equals
// eps / (lambda + eps) for an eigenvalue lambda of the raw covariance, so
// residual <= sqrt(cols) always, and is O(eps / lambda_min) for full-rank
// input. Requires z.rows >= 2.
WhitenReport whiten_batch(const Matrix& z, double eps);

// Each row divided by max(row L2 norm, eps). Zero rows pass through.
Matrix l2_normalize_rows(const Matrix& z, double eps);

// C_ij = sum_m za[m,i] * zb[m,j] / (|za[:,i]| * |zb[:,j]|), norms guarded
// by 1e-12. Entries lie in [-1, 1] up to rounding (Cauchy-Schwarz).
Matrix cross_correlation(const Matrix& za, const Matrix& zb);

// Column-centered, unbiased (1/(rows-1)) covariance. Symmetric by
// construction. Requires rows >= 2.
Matrix covariance(const Matrix& z);

double frobenius_distance(const Matrix& a, const Matrix& b);

}  // namespace fussl
