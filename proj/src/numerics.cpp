#include "numerics.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace fussl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> column_means(const Matrix& z) {
  std::vector<double> mean(z.cols, 0.0);
  for (std::size_t r = 0; r < z.rows; ++r) {
    const double* row = z.row(r);
    for (std::size_t c = 0; c < z.cols; ++c) mean[c] += row[c];
  }
  for (auto& m : mean) m /= static_cast<double>(z.rows);
  return mean;
}

Matrix center_columns(const Matrix& z) {
  const auto mean = column_means(z);
  Matrix out(z.rows, z.cols);
  for (std::size_t r = 0; r < z.rows; ++r) {
    for (std::size_t c = 0; c < z.cols; ++c) out(r, c) = z(r, c) - mean[c];
  }
  return out;
}

// Inverse of an upper-triangular matrix by back substitution.
Matrix invert_upper(const Matrix& u) {
  const std::size_t n = u.rows;
  Matrix inv(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    inv(col, col) = 1.0 / u(col, col);
    for (std::size_t r = col; r-- > 0;) {
      double s = 0.0;
      for (std::size_t k = r + 1; k <= col; ++k) s += u(r, k) * inv(k, col);
      inv(r, col) = -s / u(r, r);
    }
  }
  return inv;
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ (" +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + ")");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
  }
  return out;
}

Matrix cholesky(const Matrix& a) {
  require(a.rows == a.cols, "cholesky: matrix not square");
  double max_abs = 0.0;
  for (double v : a.data) max_abs = std::max(max_abs, std::abs(v));
  const double sym_tol = 1e-9 * std::max(1.0, max_abs);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = r + 1; c < a.cols; ++c) {
      require(std::abs(a(r, c) - a(c, r)) <= sym_tol,
              "cholesky: matrix not symmetric");
    }
  }

  const std::size_t n = a.rows;
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (diag <= 1e-12) {
      throw numeric_error("cholesky: non-positive-definite pivot at index " +
                          std::to_string(j) + " (value " +
                          std::to_string(diag) + ")");
    }
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

WhitenReport whiten_batch(const Matrix& z, double eps) {
  require(z.rows >= 2, "whiten_batch: need at least 2 rows");
  require(eps > 0.0, "whiten_batch: eps must be positive");

  Matrix cov = covariance(z);
  for (std::size_t i = 0; i < cov.rows; ++i) cov(i, i) += eps;

  const Matrix l = cholesky(cov);
  WhitenReport report;
  report.transform = invert_upper(transpose(l));
  report.whitened = matmul(center_columns(z), report.transform);
  report.residual =
      frobenius_distance(covariance(report.whitened), Matrix::identity(z.cols));
  return report;
}

Matrix l2_normalize_rows(const Matrix& z, double eps) {
  Matrix out(z.rows, z.cols);
  for (std::size_t r = 0; r < z.rows; ++r) {
    double sq = 0.0;
    const double* src = z.row(r);
    for (std::size_t c = 0; c < z.cols; ++c) sq += src[c] * src[c];
    const double inv = 1.0 / std::max(std::sqrt(sq), eps);
    double* dst = out.row(r);
    for (std::size_t c = 0; c < z.cols; ++c) dst[c] = src[c] * inv;
  }
  return out;
}

Matrix cross_correlation(const Matrix& za, const Matrix& zb) {
  require(za.same_shape(zb), "cross_correlation: shape mismatch");
  constexpr double kNormGuard = 1e-12;

  const std::size_t n = za.rows, d = za.cols;
  std::vector<double> norm_a(d, 0.0), norm_b(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      norm_a[c] += za(r, c) * za(r, c);
      norm_b[c] += zb(r, c) * zb(r, c);
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    norm_a[c] = std::max(std::sqrt(norm_a[c]), kNormGuard);
    norm_b[c] = std::max(std::sqrt(norm_b[c]), kNormGuard);
  }

  Matrix out = matmul(transpose(za), zb);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out(i, j) /= norm_a[i] * norm_b[j];
    }
  }
  return out;
}

Matrix covariance(const Matrix& z) {
  require(z.rows >= 2, "covariance: need at least 2 rows");
  const Matrix c = center_columns(z);
  const double scale = 1.0 / static_cast<double>(z.rows - 1);

  Matrix out(z.cols, z.cols);
  for (std::size_t i = 0; i < z.cols; ++i) {
    for (std::size_t j = i; j < z.cols; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < z.rows; ++r) s += c(r, i) * c(r, j);
      out(i, j) = s * scale;
      out(j, i) = out(i, j);
    }
  }
  return out;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "frobenius_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace fussl
