// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

// Independent oracles and small generators shared by the test suites.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "antismooth/linalg.hpp"
#include "antismooth/rng.hpp"

namespace antismooth::testing {

/// Plain i-j-k triple loop.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

/// Largest singular value from a two-sided Jacobi SVD.
inline double jacobi_sigma_max(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  return svd.singularValues()(0);
}

using cplx = std::complex<double>;
using CMat = std::vector<std::vector<cplx>>;

/// F[k][t] = exp(2 pi i k t / n) / sqrt(n), built with std::polar directly.
inline CMat dft_oracle(std::size_t n) {
  CMat f(n, std::vector<cplx>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t)
      f[k][t] = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                           2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
  return f;
}

inline CMat cmul(const CMat& a, const CMat& b) {
  CMat c(a.size(), std::vector<cplx>(b.front().size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b.front().size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline CMat cadjoint(const CMat& a) {
  CMat c(a.front().size(), std::vector<cplx>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.front().size(); ++j) c[j][i] = std::conj(a[i][j]);
  return c;
}

inline CMat as_complex(const Matrix& m) {
  CMat c(m.rows(), std::vector<cplx>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) c[i][j] = m(i, j);
  return c;
}

/// Re( F^{-1} diag(mask) F X ): the frequency-mask route to DC/HC.
inline Matrix dft_mask_filter(const Matrix& x, const std::vector<double>& mask) {
  const std::size_t n = x.rows();
  const CMat f = dft_oracle(n);
  CMat fx = cmul(f, as_complex(x));
  for (std::size_t k = 0; k < n; ++k)
    for (auto& v : fx[k]) v *= mask[k];
  const CMat back = cmul(cadjoint(f), fx);
  Matrix out(n, x.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = back[i][j].real();
  return out;
}

inline std::vector<double> dc_mask(std::size_t n) {
  std::vector<double> m(n, 0.0);
  m[0] = 1.0;
  return m;
}

inline std::vector<double> hc_mask(std::size_t n) {
  std::vector<double> m(n, 1.0);
  m[0] = 0.0;
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, 1.0); }

/// 11^T / n.
inline Matrix uniform_map(std::size_t n) { return Matrix(n, n, 1.0 / static_cast<double>(n)); }

/// Central difference of f at x along coordinate `index` of `v`.
inline double central_difference(std::span<double> v, std::size_t index, double step,
                                 const std::function<double()>& f) {
  const double orig = v[index];
  v[index] = orig + step;
  const double up = f();
  v[index] = orig - step;
  const double down = f();
  v[index] = orig;
  return (up - down) / (2.0 * step);
}

/// |g - fd| <= rel * max(|g|, |fd|) + abs_floor.
inline bool gradients_agree(double g, double fd, double rel, double abs_floor) {
  return std::abs(g - fd) <= rel * std::max(std::abs(g), std::abs(fd)) + abs_floor;
}

}  // namespace antismooth::testing
