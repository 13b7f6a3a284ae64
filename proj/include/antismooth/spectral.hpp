// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "antismooth/linalg.hpp"

namespace antismooth {

// Tokens are rows, channels are columns; every column is an n-point signal.
// DC keeps the zero-frequency bin of each channel, which is its mean
// replicated over the tokens. HC is everything else.

inline Matrix dc_component(const Matrix& x) {
  const Matrix mean = column_means(x);
  Matrix dc(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) dc(i, j) = mean(0, j);
  return dc;
}

inline Matrix hc_component(const Matrix& x) { return x - dc_component(x); }

/// X = dc + hc with dc in span(1) and hc orthogonal to it.
struct SpectralSplit {
  Matrix dc;
  Matrix hc;
  double source_norm = 0.0;
};

inline SpectralSplit split(const Matrix& x) {
  Matrix dc = dc_component(x);
  Matrix hc = x - dc;
  return {std::move(dc), std::move(hc), frobenius_norm(x)};
}

/// Fraction of Frobenius energy outside the DC band, ||HC[X]|| / ||X||.
inline double hc_proportion(const Matrix& x) {
  const double total = frobenius_norm(x);
  if (total == 0.0) throw undefined_input_error("hc_proportion: zero matrix");
  return frobenius_norm(hc_component(x)) / total;
}

/// Intensity ||Lambda_i||_2 of each frequency band, where
/// Lambda = F A F^{-1} is the Fourier-domain kernel of A.
inline std::vector<double> attention_spectrum(const Matrix& a) {
  if (!a.is_square()) throw shape_error("attention_spectrum: map must be square");
  const ComplexMatrix f = dft_matrix(a.rows());
  const ComplexMatrix lambda = matmul(matmul(f, ComplexMatrix::from_real(a)), f.adjoint());
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += std::norm(lambda(i, j));
    out[i] = std::sqrt(s);
  }
  return out;
}

inline std::vector<double> attention_spectrum(const AttentionMap& a) {
  return attention_spectrum(a.matrix());
}

namespace detail {

inline double abs_cosine(std::span<const double> u, std::span<const double> v, double nu,
                         double nv) {
  double dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
  return std::abs(dot) / (nu * nv);
}

}  // namespace detail

/// Mean absolute cosine similarity between distinct columns, averaged over
/// heads. Takes raw matrices so AttnScale-modified maps can be measured too.
inline double attn_cosine_similarity(std::span<const Matrix> heads) {
  if (heads.empty()) throw parameter_error("attn_cosine_similarity: no heads");
  const std::size_t n = heads.front().rows();
  if (n < 2) throw parameter_error("attn_cosine_similarity: n must be >= 2");
  double total = 0.0;
  for (const Matrix& a : heads) {
    if (!a.is_square() || a.rows() != n) throw shape_error("attn_cosine_similarity: head shape");
    const Matrix at = transpose(a);  // columns of a as contiguous rows
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
      norms[i] = vector_norm(at.row(i));
      if (norms[i] == 0.0) throw undefined_input_error("attn_cosine_similarity: zero column");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        total += detail::abs_cosine(at.row(i), at.row(j), norms[i], norms[j]);
  }
  const double pairs = static_cast<double>(n * (n - 1)) / 2.0;
  return total / (pairs * static_cast<double>(heads.size()));
}

inline double attn_cosine_similarity(std::span<const AttentionMap> heads) {
  std::vector<Matrix> ms;
  ms.reserve(heads.size());
  for (const auto& h : heads) ms.push_back(h.matrix());
  return attn_cosine_similarity(std::span<const Matrix>(ms));
}

/// Mean absolute cosine similarity between distinct token rows.
inline double feat_cosine_similarity(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n < 2) throw parameter_error("feat_cosine_similarity: need >= 2 tokens");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = vector_norm(x.row(i));
    if (norms[i] == 0.0) throw undefined_input_error("feat_cosine_similarity: zero row");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      total += detail::abs_cosine(x.row(i), x.row(j), norms[i], norms[j]);
  return total / (static_cast<double>(n * (n - 1)) / 2.0);
}

}  // namespace antismooth
