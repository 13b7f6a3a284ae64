// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "antismooth/attention.hpp"
#include "antismooth/linalg.hpp"
#include "antismooth/spectral.hpp"
#include "antismooth/vit.hpp"

namespace antismooth {

/// sqrt(n e^{2a} / (e^{2a} + n - 1)), the per-application HC gain of a
/// softmax map whose logits are bounded by a in magnitude. Lies in [1, sqrt n].
inline double smoothing_base_factor(double alpha, std::size_t n) {
  if (n == 0) throw parameter_error("smoothing_base_factor: n must be >= 1");
  const double nn = static_cast<double>(n);
  // n e^{2a} / (e^{2a} + n - 1) = n / (1 + (n - 1) e^{-2a}); stable for large a.
  return std::sqrt(nn / (1.0 + (nn - 1.0) * std::exp(-2.0 * alpha)));
}

enum class BoundKind { sa, msa, residual, ffn, ffn_residual };

inline std::string_view to_string(BoundKind k) {
  switch (k) {
    case BoundKind::sa: return "sa";
    case BoundKind::msa: return "msa";
    case BoundKind::residual: return "residual";
    case BoundKind::ffn: return "ffn";
    case BoundKind::ffn_residual: return "ffn_residual";
  }
  return "sa";
}

/// Upper bound on ||HC[f(X)]||_F / ||HC[X]||_F for one block component.
/// sigma1 carries ||W_V||_2 for kind sa; h_heads is 1 there.
struct RateBound {
  double alpha = 0.0;
  std::size_t n = 1;
  double sigma1 = 0.0;
  double sigma2 = 1.0;
  double sigma3 = 1.0;
  std::size_t h_heads = 1;
  BoundKind kind = BoundKind::sa;
  double value = 0.0;

  double base_factor() const { return smoothing_base_factor(alpha, n); }

  /// Recomputes value from the fields alone.
  double recompute() const {
    const double msa = sigma1 * sigma2 * static_cast<double>(h_heads) * base_factor();
    switch (kind) {
      case BoundKind::sa: return base_factor() * sigma1;
      case BoundKind::msa: return msa;
      case BoundKind::residual: return 1.0 + msa;
      case BoundKind::ffn: return sigma3 * (1.0 + msa);
      case BoundKind::ffn_residual: return (1.0 + sigma3) * (1.0 + msa);
    }
    return 0.0;
  }
};

/// One step of a smoothing trajectory. ratio is absent when the DC part
/// vanishes and the HC/DC ratio is undefined.
struct TrajectoryRecord {
  std::size_t step = 0;
  double hc_norm = 0.0;
  double dc_norm = 0.0;
  std::optional<double> ratio;
  std::optional<double> bound_log;
  // Curve records only: ||HC[X_l]|| / ||HC[X_0]|| and its log.
  double measured_ratio = 0.0;
  double measured_log = 0.0;
};

inline TrajectoryRecord trajectory_record(std::size_t step, const Matrix& z) {
  const SpectralSplit s = split(z);
  TrajectoryRecord r;
  r.step = step;
  r.hc_norm = frobenius_norm(s.hc);
  r.dc_norm = frobenius_norm(s.dc);
  if (r.dc_norm > 0.0) r.ratio = r.hc_norm / r.dc_norm;
  return r;
}

/// HC/DC ratio of A^t z for t = 0..t_max.
inline std::vector<TrajectoryRecord> low_pass_trajectory(const Matrix& a, std::span<const double> z,
                                                         std::size_t t_max) {
  if (!a.is_square()) throw shape_error("low_pass_trajectory: map must be square");
  if (z.size() != a.rows()) throw shape_error("low_pass_trajectory: signal length != n");
  if (t_max < 1) throw parameter_error("low_pass_trajectory: t_max must be >= 1");
  Matrix v = Matrix::column_vector(z);
  std::vector<TrajectoryRecord> out;
  out.reserve(t_max + 1);
  out.push_back(trajectory_record(0, v));
  for (std::size_t t = 1; t <= t_max; ++t) {
    v = matmul(a, v);
    out.push_back(trajectory_record(t, v));
  }
  return out;
}

inline std::vector<TrajectoryRecord> low_pass_trajectory(const AttentionMap& a,
                                                         std::span<const double> z,
                                                         std::size_t t_max) {
  return low_pass_trajectory(a.matrix(), z, t_max);
}

struct CompositionResult {
  std::vector<TrajectoryRecord> records;  // records[k] after k factors applied
  double max_row_sum_error = 0.0;         // of the running product
  double min_entry = 0.0;
};

/// Applies A_1, then A_2, ... to z, tracking the ratio after each factor and
/// the stochasticity of the running product A_k ... A_1.
inline CompositionResult composition_low_pass(std::span<const AttentionMap> maps,
                                              std::span<const double> z) {
  if (maps.empty()) throw parameter_error("composition_low_pass: no maps");
  const std::size_t n = maps.front().n();
  if (z.size() != n) throw shape_error("composition_low_pass: signal length != n");
  CompositionResult res;
  Matrix v = Matrix::column_vector(z);
  Matrix product = Matrix::identity(n);
  res.records.push_back(trajectory_record(0, v));
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (maps[k].n() != n) throw shape_error("composition_low_pass: maps differ in size");
    v = matmul(maps[k].matrix(), v);
    product = matmul(maps[k].matrix(), product);
    res.records.push_back(trajectory_record(k + 1, v));
  }
  res.min_entry = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double x : product.row(i)) {
      s += x;
      res.min_entry = std::min(res.min_entry, x);
    }
    res.max_row_sum_error = std::max(res.max_row_sum_error, std::abs(s - 1.0));
  }
  return res;
}

/// Single-head SA bound with alpha = max |P_ij|.
inline RateBound sa_rate_bound(const Matrix& p, const Matrix& w_v) {
  if (!p.is_square()) throw shape_error("sa_rate_bound: logits must be square");
  RateBound b;
  b.kind = BoundKind::sa;
  b.alpha = max_abs(p);
  b.n = p.rows();
  b.sigma1 = spectral_norm(w_v);
  b.value = b.recompute();
  return b;
}

/// gamma^2 ||W_Q W_K^T||_2 / sqrt(d_q) for dot-product logits with token
/// norms at most gamma.
inline double alpha_bound_dot(double gamma, const Matrix& w_q, const Matrix& w_k, std::size_t d_q) {
  if (gamma < 0.0) throw parameter_error("alpha_bound_dot: gamma must be >= 0");
  if (d_q == 0) throw parameter_error("alpha_bound_dot: d_q must be >= 1");
  return gamma * gamma * spectral_norm(matmul_bt(w_q, w_k)) / std::sqrt(static_cast<double>(d_q));
}

/// Logits x_i^T u_q + x_j^T u_k + b. The bias enters as |b|: with b < 0 the
/// logit can reach -(||u_q|| + ||u_k||) gamma + b, beyond |(...) gamma + b|.
inline double alpha_bound_logistic(double gamma, std::span<const double> u_q,
                                   std::span<const double> u_k, double b) {
  if (gamma < 0.0) throw parameter_error("alpha_bound_logistic: gamma must be >= 0");
  return (vector_norm(u_k) + vector_norm(u_q)) * gamma + std::abs(b);
}

/// Logits -||x_i^T W_Q - x_j^T W_K||^2 / tau.
inline double alpha_bound_l2(double gamma, const Matrix& w_q, const Matrix& w_k, double tau) {
  if (!(tau > 0.0)) throw parameter_error("alpha_bound_l2: tau must be > 0");
  if (gamma < 0.0) throw parameter_error("alpha_bound_l2: gamma must be >= 0");
  const double s = spectral_norm(w_k) + spectral_norm(w_q);
  return s * s * gamma * gamma / tau;
}

/// Max over heads of max |P^h_ij| for the block's logits on x.
inline double max_head_alpha(const Matrix& x, const BlockParams& block) {
  double alpha = 0.0;
  for (const auto& h : block.heads) alpha = std::max(alpha, max_abs(attention_logits(x, h)));
  return alpha;
}

/// sigma1 sigma2 H base(alpha), sigma1 = max_h ||W_V^h||, sigma2 = max_h ||W_O^h||.
inline RateBound msa_rate_bound(const BlockParams& block, double alpha, std::size_t n) {
  block.validate();
  RateBound b;
  b.kind = BoundKind::msa;
  b.alpha = alpha;
  b.n = n;
  b.h_heads = block.num_heads();
  b.sigma1 = 0.0;
  b.sigma2 = 0.0;
  for (std::size_t h = 0; h < block.num_heads(); ++h) {
    b.sigma1 = std::max(b.sigma1, spectral_norm(block.heads[h].w_v));
    b.sigma2 = std::max(b.sigma2, spectral_norm(block.w_o_block(h)));
  }
  b.value = b.recompute();
  return b;
}

inline RateBound residual_rate_bound(const RateBound& msa) {
  if (msa.kind != BoundKind::msa) throw parameter_error("residual_rate_bound: expects an msa bound");
  RateBound b = msa;
  b.kind = BoundKind::residual;
  b.value = b.recompute();
  return b;
}

/// sigma3 (1 + msa), or (1 + sigma3)(1 + msa) when the FFN has its own skip.
inline RateBound ffn_rate_bound(const RateBound& res, double sigma3, bool with_ffn_residual) {
  if (res.kind != BoundKind::residual)
    throw parameter_error("ffn_rate_bound: expects a residual bound");
  if (sigma3 < 0.0) throw parameter_error("ffn_rate_bound: sigma3 must be >= 0");
  RateBound b = res;
  b.sigma3 = sigma3;
  b.kind = with_ffn_residual ? BoundKind::ffn_residual : BoundKind::ffn;
  b.value = b.recompute();
  return b;
}

/// Certified Lipschitz constant of the row-wise FFN: Lip(act) ||W1||_2 ||W2||_2.
inline double ffn_lipschitz(const BlockParams& block, Activation act) {
  return activation_lipschitz(act) * spectral_norm(block.ffn_w1) * spectral_norm(block.ffn_w2);
}

/// argmin_beta ||A - beta 11^T/n||_F = 1^T A 1 / n.
inline double optimal_lowpass_beta(const Matrix& a) {
  if (!a.is_square()) throw shape_error("optimal_lowpass_beta: matrix must be square");
  double s = 0.0;
  for (double x : a.data()) s += x;
  return s / static_cast<double>(a.rows());
}

enum class CurveMode { attention_only, no_residual, full };

inline std::string_view to_string(CurveMode m) {
  switch (m) {
    case CurveMode::attention_only: return "attention_only";
    case CurveMode::no_residual: return "no_residual";
    case CurveMode::full: return "full";
  }
  return "attention_only";
}

inline std::optional<CurveMode> parse_curve_mode(std::string_view s) {
  if (s == "attention_only") return CurveMode::attention_only;
  if (s == "no_residual") return CurveMode::no_residual;
  if (s == "full") return CurveMode::full;
  return std::nullopt;
}

/// One LayerNorm-free layer in the given mode plus the matching bound.
///   attention_only: X_l = MSA(X)                  bound msa
///   no_residual:    X_l = FFN(MSA(X) + X)         bound ffn
///   full:           X' = MSA(X) + X; X_l = FFN(X') + X'   bound ffn_residual
/// Variant-specific scaling is ignored: the bounds only cover softmax maps.
struct ModeStep {
  Matrix output;
  RateBound bound;
};

inline ModeStep mode_layer(const Matrix& x, const BlockParams& block, Activation act, CurveMode mode) {
  BlockParams plain = block;
  plain.variant = Variant::baseline;
  RateBound msa = msa_rate_bound(plain, max_head_alpha(x, plain), x.rows());
  Matrix attn = multi_head_sa(x, plain);
  if (mode == CurveMode::attention_only) return {std::move(attn), msa};
  Matrix mid = attn + x;
  const RateBound res = residual_rate_bound(msa);
  const double sigma3 = ffn_lipschitz(plain, act);
  if (mode == CurveMode::no_residual) return {ffn(mid, plain, act), ffn_rate_bound(res, sigma3, false)};
  Matrix y = ffn(mid, plain, act) + mid;
  return {std::move(y), ffn_rate_bound(res, sigma3, true)};
}

/// Measured log(||HC[X_l]|| / ||HC[X_0]||) against the bound
/// log(gamma_l ||HC[X_{l-1}]|| / ||HC[X_0]||), chained from the measured
/// previous layer. measured_log is -inf once HC vanishes (ratio then 0).
inline std::vector<TrajectoryRecord> upper_bound_curve(std::span<const BlockParams> blocks,
                                                       const Matrix& x0, Activation act,
                                                       CurveMode mode) {
  const double hc0 = frobenius_norm(hc_component(x0));
  if (hc0 == 0.0) throw undefined_input_error("upper_bound_curve: HC[X_0] is zero");
  std::vector<TrajectoryRecord> out;
  Matrix x = x0;
  double prev_hc = hc0;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    ModeStep step = mode_layer(x, blocks[l], act, mode);
    x = std::move(step.output);
    TrajectoryRecord r = trajectory_record(l + 1, x);
    const double measured = r.hc_norm / hc0;
    r.measured_ratio = measured;
    r.measured_log = measured > 0.0 ? std::log(measured) : -std::numeric_limits<double>::infinity();
    const double bound = step.bound.value * prev_hc / hc0;
    r.bound_log = bound > 0.0 ? std::log(bound) : -std::numeric_limits<double>::infinity();
    prev_hc = r.hc_norm;
    out.push_back(r);
  }
  return out;
}

}  // namespace antismooth
