// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "antismooth/linalg.hpp"
#include "antismooth/spectral.hpp"

namespace antismooth {

enum class Variant { baseline, attnscale, featscale };
enum class Activation { relu, gelu };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::attnscale: return "attnscale";
    case Variant::featscale: return "featscale";
  }
  return "baseline";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "attnscale") return Variant::attnscale;
  if (s == "featscale") return Variant::featscale;
  return std::nullopt;
}

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  return std::nullopt;
}

struct SAHeadWeights {
  Matrix w_q;  // d x d_q
  Matrix w_k;  // d x d_q
  Matrix w_v;  // d x d_head

  void validate(std::size_t d) const {
    if (w_q.cols() != w_k.cols()) throw shape_error("SAHeadWeights: w_q/w_k widths differ");
    if (w_q.rows() != d || w_k.rows() != d || w_v.rows() != d)
      throw shape_error("SAHeadWeights: weight rows must equal token dim");
  }
};

struct LayerNormParams {
  std::vector<double> scale;
  std::vector<double> shift;

  static LayerNormParams identity(std::size_t d) {
    return {std::vector<double>(d, 1.0), std::vector<double>(d, 0.0)};
  }
};

/// Weights of one transformer block, including the AttnScale omegas (one per
/// head) and the FeatScale channel weights (s for DC, t for HC).
struct BlockParams {
  std::vector<SAHeadWeights> heads;
  Matrix w_o;  // (H * d_head) x d
  LayerNormParams ln1;
  LayerNormParams ln2;
  Matrix ffn_w1;  // d x d_ff
  std::vector<double> ffn_b1;
  Matrix ffn_w2;  // d_ff x d
  std::vector<double> ffn_b2;
  std::vector<double> attnscale_omega;
  std::vector<double> featscale_s;
  std::vector<double> featscale_t;
  Variant variant = Variant::baseline;

  std::size_t dim() const noexcept { return w_o.cols(); }
  std::size_t num_heads() const noexcept { return heads.size(); }
  std::size_t head_dim() const noexcept { return heads.front().w_v.cols(); }

  /// Rows [h*d_head, (h+1)*d_head) of w_o: the projection applied to head h.
  Matrix w_o_block(std::size_t h) const {
    return row_block(w_o, h * head_dim(), (h + 1) * head_dim());
  }

  void validate() const {
    if (heads.empty()) throw shape_error("BlockParams: no heads");
    const std::size_t d = dim();
    std::size_t concat = 0;
    for (const auto& h : heads) {
      h.validate(d);
      if (h.w_v.cols() != head_dim()) throw shape_error("BlockParams: unequal head widths");
      concat += h.w_v.cols();
    }
    if (w_o.rows() != concat) throw shape_error("BlockParams: w_o rows != H * d_head");
    if (ln1.scale.size() != d || ln1.shift.size() != d || ln2.scale.size() != d ||
        ln2.shift.size() != d)
      throw shape_error("BlockParams: layer norm width");
    if (ffn_w1.rows() != d || ffn_w2.cols() != d || ffn_w1.cols() != ffn_w2.rows() ||
        ffn_b1.size() != ffn_w1.cols() || ffn_b2.size() != d)
      throw shape_error("BlockParams: ffn shapes");
    if (attnscale_omega.size() != heads.size()) throw shape_error("BlockParams: omega count");
    if (featscale_s.size() != d || featscale_t.size() != d)
      throw shape_error("BlockParams: featscale width");
  }
};

/// P = (X W_Q)(X W_K)^T / sqrt(d_q).
inline Matrix attention_logits(const Matrix& x, const SAHeadWeights& h) {
  h.validate(x.cols());
  Matrix p = matmul_bt(matmul(x, h.w_q), matmul(x, h.w_k));
  p *= 1.0 / std::sqrt(static_cast<double>(h.w_q.cols()));
  return p;
}

/// softmax(P) X W_V, evaluated as A (X W_V).
inline Matrix self_attention(const Matrix& x, const SAHeadWeights& h) {
  const AttentionMap a = softmax_rows(attention_logits(x, h));
  return matmul(a.matrix(), matmul(x, h.w_v));
}

/// A_LP + (omega + 1) A_HP with A_LP = 11^T/n. Rows keep summing to one,
/// but entries can go negative once omega > 0.
inline Matrix attn_scale(const Matrix& a, double omega) {
  if (!a.is_square()) throw shape_error("attn_scale: map must be square");
  const double lp = 1.0 / static_cast<double>(a.rows());
  Matrix out(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) out.data()[k] = lp + (omega + 1.0) * (a.data()[k] - lp);
  return out;
}

inline Matrix attn_scale(const AttentionMap& a, double omega) { return attn_scale(a.matrix(), omega); }

struct MultiHeadResult {
  Matrix output;
  std::vector<Matrix> maps;  // effective per-head maps (after AttnScale, if any)
  std::vector<Matrix> logits;
};

inline MultiHeadResult multi_head_sa_detailed(const Matrix& x, const BlockParams& p) {
  if (x.cols() != p.dim()) throw shape_error("multi_head_sa: token dim mismatch");
  MultiHeadResult res{Matrix(1, 1), {}, {}};
  std::vector<Matrix> outs;
  outs.reserve(p.num_heads());
  for (std::size_t h = 0; h < p.num_heads(); ++h) {
    Matrix logits = attention_logits(x, p.heads[h]);
    Matrix a = softmax_rows(logits).matrix();
    if (p.variant == Variant::attnscale) a = attn_scale(a, p.attnscale_omega[h]);
    outs.push_back(matmul(a, matmul(x, p.heads[h].w_v)));
    res.maps.push_back(std::move(a));
    res.logits.push_back(std::move(logits));
  }
  res.output = matmul(hconcat(outs), p.w_o);
  return res;
}

inline Matrix multi_head_sa(const Matrix& x, const BlockParams& p) {
  return multi_head_sa_detailed(x, p).output;
}

/// DC[Y](diag(s) + I) + HC[Y](diag(t) + I).
inline Matrix feat_scale(const Matrix& y, std::span<const double> s, std::span<const double> t) {
  if (s.size() != y.cols() || t.size() != y.cols()) throw shape_error("feat_scale: width mismatch");
  const Matrix mean = column_means(y);
  Matrix out(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const double dc = mean(0, j);
      const double hc = y(i, j) - dc;
      out(i, j) = dc * (s[j] + 1.0) + hc * (t[j] + 1.0);
    }
  return out;
}

inline constexpr double kLayerNormEps = 1e-6;

/// Per-token normalization with population variance, then affine map.
inline Matrix layer_norm(const Matrix& x, std::span<const double> scale,
                         std::span<const double> shift, double eps = kLayerNormEps) {
  if (scale.size() != x.cols() || shift.size() != x.cols())
    throw shape_error("layer_norm: width mismatch");
  if (!(eps > 0.0)) throw parameter_error("layer_norm: eps must be > 0");
  const double d = static_cast<double>(x.cols());
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < r.size(); ++j) out(i, j) = (r[j] - mean) * inv * scale[j] + shift[j];
  }
  return out;
}

inline Matrix layer_norm(const Matrix& x, const LayerNormParams& ln, double eps = kLayerNormEps) {
  return layer_norm(x, ln.scale, ln.shift, eps);
}

inline double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_derivative(double x) noexcept {
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
         x * std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

/// sup |act'|: 1 for ReLU; GELU' peaks at x = sqrt(2).
inline double activation_lipschitz(Activation act) noexcept {
  if (act == Activation::relu) return 1.0;
  return gelu_derivative(std::numbers::sqrt2);
}

inline double apply_activation(Activation act, double x) noexcept {
  return act == Activation::relu ? (x > 0.0 ? x : 0.0) : gelu(x);
}

/// Adds a bias vector to every row.
inline Matrix add_row_bias(Matrix m, std::span<const double> b) {
  if (b.size() != m.cols()) throw shape_error("add_row_bias: width mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += b[j];
  return m;
}

/// act(X W1 + b1) W2 + b2, row-wise.
inline Matrix ffn(const Matrix& x, const BlockParams& p, Activation act = Activation::relu) {
  if (x.cols() != p.ffn_w1.rows()) throw shape_error("ffn: token dim mismatch");
  Matrix hidden = add_row_bias(matmul(x, p.ffn_w1), p.ffn_b1);
  for (double& v : hidden.data()) v = apply_activation(act, v);
  return add_row_bias(matmul(hidden, p.ffn_w2), p.ffn_b2);
}

struct BlockResult {
  Matrix output;
  std::vector<Matrix> maps;
};

/// X' = MSA(LN(X)) + X;  Y = FFN(LN(X')) + X'. FeatScale, when enabled,
/// rescales the MSA branch before the residual add.
inline BlockResult transformer_block_detailed(const Matrix& x, const BlockParams& p,
                                              Activation act = Activation::relu) {
  MultiHeadResult mh = multi_head_sa_detailed(layer_norm(x, p.ln1), p);
  Matrix branch = p.variant == Variant::featscale
                      ? feat_scale(mh.output, p.featscale_s, p.featscale_t)
                      : std::move(mh.output);
  Matrix mid = branch + x;
  Matrix y = ffn(layer_norm(mid, p.ln2), p, act) + mid;
  return {std::move(y), std::move(mh.maps)};
}

inline Matrix transformer_block(const Matrix& x, const BlockParams& p,
                                Activation act = Activation::relu) {
  return transformer_block_detailed(x, p, act).output;
}

}  // namespace antismooth
