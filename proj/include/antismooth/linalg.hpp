// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "antismooth/rng.hpp"

namespace antismooth {

/// Operand shapes do not fit together.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input for which the quantity is mathematically undefined (zero norm, ...).
struct undefined_input_error : std::domain_error {
  using std::domain_error::domain_error;
};

/// Parameter outside its admissible range.
struct parameter_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major 64-bit matrix. Never empty; every entry finite when built
/// from external data.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols))
      throw shape_error("Matrix: data length " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    if (!all_finite()) throw parameter_error("Matrix: non-finite entry");
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows)
      : Matrix(from_nested(std::vector<std::vector<double>>(rows.begin(), rows.end()))) {}

  static Matrix from_nested(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().empty()) throw shape_error("Matrix: empty nested data");
    std::vector<double> data;
    data.reserve(rows.size() * rows.front().size());
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw shape_error("Matrix: ragged nested data");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), rows.front().size(), std::move(data));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  /// Row vector (1 x n).
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  static Matrix column_vector(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }

  static Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = stddev * rng.normal();
    return m;
  }

  static Matrix random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = rng.uniform(lo, hi);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<std::vector<double>> to_nested() const {
    std::vector<std::vector<double>> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i].assign(row(i).begin(), row(i).end());
    return out;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) noexcept {
    for (double& x : data_) x *= s;
    return *this;
  }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  static std::size_t checked_size(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw shape_error("Matrix: dimensions must be >= 1");
    return rows * cols;
  }
  void require_same_shape(const Matrix& o, const char* what) const {
    if (!same_shape(o))
      throw shape_error(std::string(what) + ": " + std::to_string(rows_) + "x" +
                        std::to_string(cols_) + " vs " + std::to_string(o.rows_) + "x" +
                        std::to_string(o.cols_));
  }

  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }

/// Dense product with fixed (i, k, j) summation order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw shape_error("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                      " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Matrix c(a.rows(), b.cols());
  const std::size_t m = a.rows(), inner = a.cols(), p = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

/// a * b^T. Same summation order as matmul(a, transpose(b)).
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw shape_error("matmul_bt: inner dimensions differ");
  return matmul(a, transpose(b));
}

/// a^T * b without materializing the transpose.
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw shape_error("matmul_at: row counts differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto ar = a.row(k);
    const auto br = b.row(k);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      const double aki = ar[i];
      double* crow = c.row(i).data();
      for (std::size_t j = 0; j < br.size(); ++j) crow[j] += aki * br[j];
    }
  }
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw shape_error("hadamard: shape mismatch");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] *= b.data()[k];
  return c;
}

/// Columns [c0, c1) of m.
inline Matrix column_block(const Matrix& m, std::size_t c0, std::size_t c1) {
  if (c0 >= c1 || c1 > m.cols()) throw shape_error("column_block: bad range");
  Matrix out(m.rows(), c1 - c0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = m(i, j);
  return out;
}

/// Rows [r0, r1) of m.
inline Matrix row_block(const Matrix& m, std::size_t r0, std::size_t r1) {
  if (r0 >= r1 || r1 > m.rows()) throw shape_error("row_block: bad range");
  Matrix out(r1 - r0, m.cols());
  std::copy(m.data().begin() + static_cast<std::ptrdiff_t>(r0 * m.cols()),
            m.data().begin() + static_cast<std::ptrdiff_t>(r1 * m.cols()), out.data().begin());
  return out;
}

/// Horizontal concatenation [m_1 | m_2 | ...].
inline Matrix hconcat(std::span<const Matrix> parts) {
  if (parts.empty()) throw shape_error("hconcat: no parts");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw shape_error("hconcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(parts.front().rows(), cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      std::copy(p.row(i).begin(), p.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.cols();
  }
  return out;
}

inline double frobenius_norm(const Matrix& m) noexcept {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& m) noexcept {
  double s = 0.0;
  for (double x : m.data()) s = std::max(s, std::abs(x));
  return s;
}

inline double vector_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double max_row_norm(const Matrix& m) noexcept {
  double g = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) g = std::max(g, vector_norm(m.row(i)));
  return g;
}

/// Per-column mean as a 1 x cols row vector.
inline Matrix column_means(const Matrix& m) {
  Matrix mean(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) mean(0, j) += m(i, j);
  mean *= 1.0 / static_cast<double>(m.rows());
  return mean;
}

struct SpectralNormResult {
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

struct SpectralNormOptions {
  double tol = 1e-10;
  std::size_t max_iter = 10'000;
  std::uint64_t seed = 0;
};

/// Largest singular value by power iteration on m^T m. Stops once the
/// eigen-residual ||m^T m v - lambda v|| drops below tol * lambda; a result
/// that hit max_iter carries converged = false.
inline SpectralNormResult spectral_norm_estimate(const Matrix& m, SpectralNormOptions opt = {}) {
  if (!(opt.tol > 0.0)) throw parameter_error("spectral_norm: tol must be > 0");
  if (opt.max_iter < 1) throw parameter_error("spectral_norm: max_iter must be >= 1");
  const std::size_t n = m.cols();
  Rng rng = Rng::keyed(opt.seed, "specnorm");
  std::vector<double> v(n), mv(m.rows()), w(n);
  for (double& x : v) x = rng.normal();
  double nv = vector_norm(v);
  for (double& x : v) x /= nv;

  SpectralNormResult res;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    std::fill(mv.begin(), mv.end(), 0.0);
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += m(i, j) * v[j];
      mv[i] = s;
    }
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) w[j] += m(i, j) * mv[i];
    // Rayleigh quotient v^T (m^T m) v with ||v|| = 1.
    double lambda = 0.0;
    for (double x : mv) lambda += x * x;
    res.iterations = it;
    if (lambda == 0.0) {
      // v lies in the null space; a zero matrix has sigma_max = 0.
      if (max_abs(m) == 0.0) {
        res.value = 0.0;
        res.converged = true;
        return res;
      }
      for (std::size_t j = 0; j < n; ++j) v[j] = (j == it % n) ? 1.0 : 0.0;
      continue;
    }
    double resid = 0.0;
    for (std::size_t j = 0; j < n; ++j) resid += (w[j] - lambda * v[j]) * (w[j] - lambda * v[j]);
    resid = std::sqrt(resid);
    res.value = std::sqrt(lambda);
    if (resid <= opt.tol * lambda) {
      res.converged = true;
      return res;
    }
    const double nw = vector_norm(w);
    for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / nw;
  }
  return res;
}

inline double spectral_norm(const Matrix& m, double tol = 1e-10, std::size_t max_iter = 10'000) {
  return spectral_norm_estimate(m, {tol, max_iter, 0}).value;
}

/// Row-stochastic square matrix: nonnegative entries, rows summing to one.
class AttentionMap {
 public:
  /// Validates squareness, nonnegativity and unit row sums within tol.
  static AttentionMap from_matrix(Matrix m, double tol = 1e-12) {
    if (!m.is_square()) throw shape_error("AttentionMap: matrix must be square");
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (double x : m.row(i)) {
        if (x < 0.0) throw parameter_error("AttentionMap: negative entry");
        s += x;
      }
      if (std::abs(s - 1.0) > tol)
        throw parameter_error("AttentionMap: row " + std::to_string(i) + " sums to " +
                              std::to_string(s));
    }
    return AttentionMap(std::move(m));
  }

  static AttentionMap uniform(std::size_t n) {
    return AttentionMap(Matrix(n, n, 1.0 / static_cast<double>(n)));
  }

  std::size_t n() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }

 private:
  explicit AttentionMap(Matrix m) : m_(std::move(m)) {}
  friend AttentionMap softmax_rows(const Matrix& p);
  Matrix m_;
};

/// Row-wise softmax with per-row max subtraction. Square input yields an
/// AttentionMap; use softmax_rows_matrix for rectangular logits.
inline Matrix softmax_rows_matrix(const Matrix& p) {
  Matrix a(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto pr = p.row(i);
    const double mx = *std::max_element(pr.begin(), pr.end());
    auto ar = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < pr.size(); ++j) {
      ar[j] = std::exp(pr[j] - mx);
      s += ar[j];
    }
    for (double& x : ar) x /= s;
  }
  return a;
}

inline AttentionMap softmax_rows(const Matrix& p) {
  if (!p.is_square()) throw shape_error("softmax_rows: attention logits must be square");
  return AttentionMap(softmax_rows_matrix(p));
}

using complex = std::complex<double>;

class ComplexMatrix {
 public:
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {
    if (rows == 0 || cols == 0) throw shape_error("ComplexMatrix: dimensions must be >= 1");
  }

  static ComplexMatrix from_real(const Matrix& m) {
    ComplexMatrix c(m.rows(), m.cols());
    for (std::size_t k = 0; k < m.size(); ++k) c.data_[k] = m.data()[k];
    return c;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  complex& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const complex& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  ComplexMatrix adjoint() const {
    ComplexMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = std::conj((*this)(i, j));
    return t;
  }

  Matrix real() const {
    Matrix r(rows_, cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) r.data()[k] = data_[k].real();
    return r;
  }

  double max_abs_imag() const noexcept {
    double s = 0.0;
    for (const auto& z : data_) s = std::max(s, std::abs(z.imag()));
    return s;
  }

  double frobenius_norm() const noexcept {
    double s = 0.0;
    for (const auto& z : data_) s += std::norm(z);
    return std::sqrt(s);
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<complex> data_;
};

inline ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) throw shape_error("matmul(complex): inner dimensions differ");
  ComplexMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const complex aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

/// Unitary DFT matrix, entry (k, t) = exp(2 pi i k t / n) / sqrt(n) for
/// zero-based k, t. Row 0 is the constant (DC) basis vector.
inline ComplexMatrix dft_matrix(std::size_t n) {
  if (n == 0) throw parameter_error("dft_matrix: n must be >= 1");
  ComplexMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays in [0, 2 pi).
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) /
                           static_cast<double>(n);
      f(k, t) = std::polar(scale, angle);
    }
  return f;
}

}  // namespace antismooth
