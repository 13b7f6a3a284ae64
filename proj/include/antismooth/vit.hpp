// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <concepts>
#include <string>
#include <type_traits>
#include <cstdint>
#include <span>
#include <vector>

#include "antismooth/attention.hpp"
#include "antismooth/rng.hpp"
#include "antismooth/spectral.hpp"

namespace antismooth {

struct ViTConfig {
  std::size_t depth = 12;
  std::size_t heads = 2;
  std::size_t tokens = 16;
  std::size_t dim = 32;
  std::size_t d_q = 16;
  std::size_t d_head = 16;
  std::size_t d_ff = 128;
  std::size_t num_classes = 2;
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  Activation activation = Activation::relu;
  /// Weight init std is init_scale / sqrt(fan_in).
  double init_scale = 1.0;

  void validate() const {
    if (heads < 1 || tokens < 1 || dim < 1 || d_q < 1 || d_head < 1 || num_classes < 1)
      throw parameter_error("ViTConfig: counts must be >= 1");
    if (d_ff < dim) throw parameter_error("ViTConfig: d_ff must be >= dim");
    if (!(init_scale >= 0.0)) throw parameter_error("ViTConfig: init_scale must be >= 0");
  }
};

/// Token classifier: learned positional encoding, a stack of blocks, mean
/// pooling and a linear head.
struct ViTModel {
  ViTConfig config;
  std::vector<BlockParams> blocks;
  Matrix readout;       // d x num_classes
  Matrix pos_encoding;  // n x d
};

/// Random block weights; AttnScale omega and FeatScale s/t start at zero so
/// every variant computes the baseline function at initialization.
inline BlockParams init_block(const ViTConfig& c, Rng rng) {
  auto weight = [&](std::size_t rows, std::size_t cols, std::string_view label) {
    Rng r = rng.split(label);
    return Matrix::random_normal(rows, cols, r, c.init_scale / std::sqrt(static_cast<double>(rows)));
  };
  BlockParams p{
      .heads = {},
      .w_o = weight(c.heads * c.d_head, c.dim, "w_o"),
      .ln1 = LayerNormParams::identity(c.dim),
      .ln2 = LayerNormParams::identity(c.dim),
      .ffn_w1 = weight(c.dim, c.d_ff, "ffn_w1"),
      .ffn_b1 = std::vector<double>(c.d_ff, 0.0),
      .ffn_w2 = weight(c.d_ff, c.dim, "ffn_w2"),
      .ffn_b2 = std::vector<double>(c.dim, 0.0),
      .attnscale_omega = std::vector<double>(c.heads, 0.0),
      .featscale_s = std::vector<double>(c.dim, 0.0),
      .featscale_t = std::vector<double>(c.dim, 0.0),
      .variant = c.variant,
  };
  for (std::size_t h = 0; h < c.heads; ++h) {
    Rng hr = rng.split(h);
    auto hw = [&](std::size_t cols, std::string_view label) {
      Rng r = hr.split(label);
      return Matrix::random_normal(c.dim, cols, r, c.init_scale / std::sqrt(static_cast<double>(c.dim)));
    };
    p.heads.push_back({hw(c.d_q, "w_q"), hw(c.d_q, "w_k"), hw(c.d_head, "w_v")});
  }
  return p;
}

/// Initialization depends on (seed, layer) only, never on the variant, so
/// baseline/attnscale/featscale runs of one seed share every weight.
inline ViTModel init_model(const ViTConfig& c) {
  c.validate();
  Rng root = Rng::keyed(c.seed, "init");
  ViTModel m{c, {}, Matrix(c.dim, c.num_classes), Matrix(c.tokens, c.dim)};
  for (std::size_t l = 0; l < c.depth; ++l) m.blocks.push_back(init_block(c, root.split(l)));
  Rng rr = root.split("readout");
  m.readout = Matrix::random_normal(c.dim, c.num_classes, rr, 1.0 / std::sqrt(static_cast<double>(c.dim)));
  Rng pr = root.split("pos_encoding");
  m.pos_encoding = Matrix::random_normal(c.tokens, c.dim, pr, 0.02);
  return m;
}

/// Calls fn(name, rows, cols, values) for every trainable tensor in a fixed
/// order. Vectors are reported as 1 x k. Works on const and mutable models.
template <typename Model, typename Fn>
  requires std::same_as<std::remove_const_t<Model>, ViTModel>
void visit_parameters(Model& m, Fn&& fn) {
  auto mat = [&](const std::string& name, auto& matrix) {
    fn(name, matrix.rows(), matrix.cols(), matrix.data());
  };
  auto vec = [&](const std::string& name, auto& v) {
    fn(name, std::size_t{1}, v.size(), std::span(v));
  };
  mat("pos_encoding", m.pos_encoding);
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    auto& b = m.blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    for (std::size_t h = 0; h < b.heads.size(); ++h) {
      const std::string hp = pre + "heads." + std::to_string(h) + ".";
      mat(hp + "w_q", b.heads[h].w_q);
      mat(hp + "w_k", b.heads[h].w_k);
      mat(hp + "w_v", b.heads[h].w_v);
    }
    mat(pre + "w_o", b.w_o);
    vec(pre + "ln1.scale", b.ln1.scale);
    vec(pre + "ln1.shift", b.ln1.shift);
    vec(pre + "ln2.scale", b.ln2.scale);
    vec(pre + "ln2.shift", b.ln2.shift);
    mat(pre + "ffn_w1", b.ffn_w1);
    vec(pre + "ffn_b1", b.ffn_b1);
    mat(pre + "ffn_w2", b.ffn_w2);
    vec(pre + "ffn_b2", b.ffn_b2);
    vec(pre + "attnscale_omega", b.attnscale_omega);
    vec(pre + "featscale_s", b.featscale_s);
    vec(pre + "featscale_t", b.featscale_t);
  }
  mat("readout", m.readout);
}

struct LayerTrace {
  Matrix features;
  std::vector<Matrix> maps;
  double hc_proportion = 0.0;
  double m_attn = 0.0;
  double m_feat = 0.0;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<LayerTrace> trace;
};

// Diagnostics are reported as 0 where undefined (all-zero features, zero
// token rows) so traces stay finite.
inline double safe_hc_proportion(const Matrix& x) {
  return frobenius_norm(x) == 0.0 ? 0.0 : hc_proportion(x);
}

inline double safe_feat_similarity(const Matrix& x) {
  if (x.rows() < 2) return 0.0;
  try {
    return feat_cosine_similarity(x);
  } catch (const undefined_input_error&) {
    return 0.0;
  }
}

inline double safe_attn_similarity(std::span<const Matrix> maps) {
  if (maps.empty() || maps.front().rows() < 2) return 0.0;
  try {
    return attn_cosine_similarity(maps);
  } catch (const undefined_input_error&) {
    return 0.0;
  }
}

/// logits = mean_rows(X) * readout.
inline std::vector<double> readout_logits(const Matrix& x, const Matrix& readout) {
  const Matrix pooled = matmul(column_means(x), readout);
  return {pooled.data().begin(), pooled.data().end()};
}

/// Runs the block stack on tokens (positional encoding already added) and
/// records per-layer diagnostics.
inline ForwardResult vit_forward(const Matrix& tokens, std::span<const BlockParams> blocks,
                                 const Matrix& readout, Activation act = Activation::relu,
                                 bool with_trace = true) {
  if (readout.rows() != tokens.cols()) throw shape_error("vit_forward: readout rows != dim");
  ForwardResult res;
  Matrix x = tokens;
  for (const BlockParams& p : blocks) {
    BlockResult br = transformer_block_detailed(x, p, act);
    x = std::move(br.output);
    if (with_trace) {
      LayerTrace t{x, std::move(br.maps), 0.0, 0.0, 0.0};
      t.hc_proportion = safe_hc_proportion(x);
      t.m_attn = safe_attn_similarity(t.maps);
      t.m_feat = safe_feat_similarity(x);
      res.trace.push_back(std::move(t));
    }
  }
  res.logits = readout_logits(x, readout);
  return res;
}

inline ForwardResult model_forward(const ViTModel& m, const Matrix& tokens, bool with_trace = true) {
  if (!tokens.same_shape(m.pos_encoding)) throw shape_error("model_forward: token matrix shape");
  return vit_forward(tokens + m.pos_encoding, m.blocks, m.readout, m.config.activation, with_trace);
}

}  // namespace antismooth
