// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "antismooth/attention.hpp"
#include "antismooth/linalg.hpp"
#include "antismooth/vit.hpp"

namespace antismooth::ad {

/// Misuse of the tape (non-scalar loss, foreign handle, double backward).
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// Receives the node's output gradient and accumulates into its inputs.
using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

/// Append-only record of matrix operations. Inputs always precede the nodes
/// that consume them, so a single reverse sweep visits every node once.
class Tape {
 public:
  Var leaf(Matrix value) { return push(std::move(value), {}); }

  Var push(Matrix value, BackwardFn backward) {
    if (done_) throw contract_error("Tape: cannot record after backward()");
    nodes_.push_back({std::move(value), std::move(backward)});
    grads_.emplace_back();
    return {nodes_.size() - 1};
  }

  const Matrix& value(Var v) const { return node(v).value; }

  /// Gradient of the loss w.r.t. v; zeros when v did not influence the loss.
  Matrix grad(Var v) const {
    const auto& g = grads_.at(v.id);
    if (g) return *g;
    const Matrix& val = node(v).value;
    return Matrix(val.rows(), val.cols());
  }

  void accumulate(Var v, const Matrix& g) {
    auto& slot = grads_.at(v.id);
    if (slot) *slot += g;
    else slot = g;
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
  void backward(Var loss) {
    if (done_) throw contract_error("Tape: backward() already ran");
    const Matrix& lv = node(loss).value;
    if (lv.rows() != 1 || lv.cols() != 1) throw contract_error("Tape: loss must be a 1x1 scalar");
    done_ = true;
    grads_[loss.id] = Matrix(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!grads_[i] || !nodes_[i].backward) continue;
      nodes_[i].backward(*this, *grads_[i]);
      ++visited_;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t visited() const noexcept { return visited_; }

 private:
  struct Node {
    Matrix value;
    BackwardFn backward;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw contract_error("Tape: unknown variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::vector<std::optional<Matrix>> grads_;
  bool done_ = false;
  std::size_t visited_ = 0;
};

inline Var matmul(Tape& t, Var a, Var b) {
  return t.push(antismooth::matmul(t.value(a), t.value(b)), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, matmul_bt(g, tp.value(b)));
    tp.accumulate(b, matmul_at(tp.value(a), g));
  });
}

/// a * b^T.
inline Var matmul_bt(Tape& t, Var a, Var b) {
  return t.push(antismooth::matmul_bt(t.value(a), t.value(b)), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, antismooth::matmul(g, tp.value(b)));
    tp.accumulate(b, matmul_at(g, tp.value(a)));
  });
}

inline Var add(Tape& t, Var a, Var b) {
  return t.push(t.value(a) + t.value(b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  return t.push(t.value(a) - t.value(b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -1.0 * g);
  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.push(s * t.value(a), [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, s * g); });
}

inline Matrix column_sums(const Matrix& g) {
  Matrix s(1, g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) s(0, j) += g(i, j);
  return s;
}

/// a + 1 b^T for a 1 x k bias b.
inline Var add_row_bias(Tape& t, Var a, Var bias) {
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1) throw shape_error("ad::add_row_bias: bias must be 1 x k");
  return t.push(antismooth::add_row_bias(t.value(a), bv.data()), [a, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(bias, column_sums(g));
  });
}

/// a_ij * (1 + w_j) for a 1 x k weight w.
inline Var scale_columns_plus_one(Tape& t, Var a, Var w) {
  const Matrix& av = t.value(a);
  const Matrix& wv = t.value(w);
  if (wv.rows() != 1 || wv.cols() != av.cols()) throw shape_error("ad::scale_columns: width");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j) * (wv(0, j) + 1.0);
  return t.push(std::move(out), [a, w](Tape& tp, const Matrix& g) {
    const Matrix& av2 = tp.value(a);
    const Matrix& wv2 = tp.value(w);
    Matrix ga(g.rows(), g.cols());
    Matrix gw(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        ga(i, j) = g(i, j) * (wv2(0, j) + 1.0);
        gw(0, j) += g(i, j) * av2(i, j);
      }
    tp.accumulate(a, ga);
    tp.accumulate(w, gw);
  });
}

/// DC projection (column means broadcast over rows). Self-adjoint.
inline Var dc_component(Tape& t, Var a) {
  return t.push(antismooth::dc_component(t.value(a)),
                [a](Tape& tp, const Matrix& g) { tp.accumulate(a, antismooth::dc_component(g)); });
}

/// Column means as a 1 x k row (mean pooling over tokens).
inline Var mean_rows(Tape& t, Var a) {
  const std::size_t n = t.value(a).rows();
  return t.push(column_means(t.value(a)), [a, n](Tape& tp, const Matrix& g) {
    Matrix ga(n, g.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) = g(0, j) / static_cast<double>(n);
    tp.accumulate(a, ga);
  });
}

inline Var softmax_rows(Tape& t, Var p) {
  return t.push(softmax_rows_matrix(t.value(p)), [p, self = t.size()](Tape& tp, const Matrix& g) {
    const Matrix& a = tp.value(Var{self});
    Matrix gp(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) dot += g(i, j) * a(i, j);
      for (std::size_t j = 0; j < a.cols(); ++j) gp(i, j) = a(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(p, gp);
  });
}

/// AttnScale on a map, with omega read from entry (0, head) of a 1 x H row.
inline Var attn_scale(Tape& t, Var a, Var omegas, std::size_t head) {
  const double omega = t.value(omegas)(0, head);
  return t.push(antismooth::attn_scale(t.value(a), omega), [a, omegas, head](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    const double w = tp.value(omegas)(0, head);
    const double lp = 1.0 / static_cast<double>(av.rows());
    double gw = 0.0;
    for (std::size_t k = 0; k < av.size(); ++k) gw += g.data()[k] * (av.data()[k] - lp);
    tp.accumulate(a, (w + 1.0) * g);
    Matrix go(1, tp.value(omegas).cols());
    go(0, head) = gw;
    tp.accumulate(omegas, go);
  });
}

inline Var layer_norm(Tape& t, Var x, Var scale, Var shift, double eps = kLayerNormEps) {
  const Matrix& xv = t.value(x);
  const Matrix& sv = t.value(scale);
  const Matrix& bv = t.value(shift);
  Matrix out = antismooth::layer_norm(xv, sv.data(), bv.data(), eps);
  return t.push(std::move(out), [x, scale, shift, eps](Tape& tp, const Matrix& g) {
    const Matrix& xv2 = tp.value(x);
    const Matrix& sv2 = tp.value(scale);
    const std::size_t d = xv2.cols();
    const double dd = static_cast<double>(d);
    Matrix gx(xv2.rows(), d);
    Matrix gs(1, d);
    Matrix gb(1, d);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t i = 0; i < xv2.rows(); ++i) {
      const auto r = xv2.row(i);
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= dd;
      double var = 0.0;
      for (double v : r) var += (v - mean) * (v - mean);
      var /= dd;
      const double inv = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (r[j] - mean) * inv;
        dxhat[j] = g(i, j) * sv2(0, j);
        gs(0, j) += g(i, j) * xhat[j];
        gb(0, j) += g(i, j);
        m1 += dxhat[j];
        m2 += dxhat[j] * xhat[j];
      }
      m1 /= dd;
      m2 /= dd;
      for (std::size_t j = 0; j < d; ++j) gx(i, j) = inv * (dxhat[j] - m1 - xhat[j] * m2);
    }
    tp.accumulate(x, gx);
    tp.accumulate(scale, gs);
    tp.accumulate(shift, gb);
  });
}

inline Var activation(Tape& t, Var a, Activation act) {
  Matrix out = t.value(a);
  for (double& v : out.data()) v = apply_activation(act, v);
  return t.push(std::move(out), [a, act](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t k = 0; k < av.size(); ++k) {
      const double x = av.data()[k];
      const double d = act == Activation::relu ? (x > 0.0 ? 1.0 : 0.0) : gelu_derivative(x);
      ga.data()[k] = g.data()[k] * d;
    }
    tp.accumulate(a, ga);
  });
}

inline Var hconcat(Tape& t, std::span<const Var> parts) {
  std::vector<Matrix> values;
  std::vector<std::size_t> widths;
  for (Var v : parts) {
    values.push_back(t.value(v));
    widths.push_back(values.back().cols());
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return t.push(antismooth::hconcat(values), [ids, widths](Tape& tp, const Matrix& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tp.accumulate(ids[k], column_block(g, offset, offset + widths[k]));
      offset += widths[k];
    }
  });
}

/// 0.5 * ||a||_F^2 as a 1 x 1 node.
inline Var half_squared_norm(Tape& t, Var a) {
  const double n = frobenius_norm(t.value(a));
  return t.push(Matrix(1, 1, 0.5 * n * n),
                [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g(0, 0) * tp.value(a)); });
}

/// -log softmax(z)_label for a 1 x C logit row.
inline Var softmax_cross_entropy(Tape& t, Var logits, std::size_t label) {
  const Matrix& z = t.value(logits);
  if (z.rows() != 1 || label >= z.cols()) throw shape_error("softmax_cross_entropy: bad logits/label");
  const Matrix p = softmax_rows_matrix(z);
  return t.push(Matrix(1, 1, -std::log(std::max(p(0, label), std::numeric_limits<double>::min()))),
                [logits, label, p](Tape& tp, const Matrix& g) {
                  Matrix gz = p;
                  gz(0, label) -= 1.0;
                  tp.accumulate(logits, g(0, 0) * gz);
                });
}

// ---------------------------------------------------------------------------
// ViT on the tape

struct HeadVars {
  Var w_q, w_k, w_v;
};

struct BlockVars {
  std::vector<HeadVars> heads;
  Var w_o, ln1_scale, ln1_shift, ln2_scale, ln2_shift, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Var omega, feat_s, feat_t;
};

/// Every model parameter as a tape leaf, in visit_parameters order.
struct ModelVars {
  std::vector<Var> flat;
  Var pos_encoding;
  std::vector<BlockVars> blocks;
  Var readout;
};

inline ModelVars bind_parameters(Tape& t, const ViTModel& m) {
  ModelVars mv;
  visit_parameters(m, [&](const std::string&, std::size_t r, std::size_t c, std::span<const double> v) {
    mv.flat.push_back(t.leaf(Matrix(r, c, std::vector<double>(v.begin(), v.end()))));
  });
  std::size_t k = 0;
  auto next = [&] { return mv.flat.at(k++); };
  mv.pos_encoding = next();
  for (const auto& b : m.blocks) {
    BlockVars bv;
    for (std::size_t h = 0; h < b.heads.size(); ++h) {
      HeadVars hv{};
      hv.w_q = next();
      hv.w_k = next();
      hv.w_v = next();
      bv.heads.push_back(hv);
    }
    bv.w_o = next();
    bv.ln1_scale = next();
    bv.ln1_shift = next();
    bv.ln2_scale = next();
    bv.ln2_shift = next();
    bv.ffn_w1 = next();
    bv.ffn_b1 = next();
    bv.ffn_w2 = next();
    bv.ffn_b2 = next();
    bv.omega = next();
    bv.feat_s = next();
    bv.feat_t = next();
    mv.blocks.push_back(std::move(bv));
  }
  mv.readout = next();
  return mv;
}

/// Same arithmetic as antismooth::transformer_block, recorded on the tape.
/// AttnScale/FeatScale parameters join the graph only for their variant.
inline Var transformer_block(Tape& t, Var x, const BlockVars& b, Variant variant, Activation act) {
  const Var ln1 = layer_norm(t, x, b.ln1_scale, b.ln1_shift);
  std::vector<Var> head_out;
  for (std::size_t h = 0; h < b.heads.size(); ++h) {
    const HeadVars& hv = b.heads[h];
    const double inv_sqrt_dq = 1.0 / std::sqrt(static_cast<double>(t.value(hv.w_q).cols()));
    const Var logits = scale(t, matmul_bt(t, matmul(t, ln1, hv.w_q), matmul(t, ln1, hv.w_k)), inv_sqrt_dq);
    Var a = softmax_rows(t, logits);
    if (variant == Variant::attnscale) a = attn_scale(t, a, b.omega, h);
    head_out.push_back(matmul(t, a, matmul(t, ln1, hv.w_v)));
  }
  Var branch = matmul(t, hconcat(t, head_out), b.w_o);
  if (variant == Variant::featscale) {
    const Var dc = dc_component(t, branch);
    const Var hc = sub(t, branch, dc);
    branch = add(t, scale_columns_plus_one(t, dc, b.feat_s), scale_columns_plus_one(t, hc, b.feat_t));
  }
  const Var mid = add(t, branch, x);
  const Var ln2 = layer_norm(t, mid, b.ln2_scale, b.ln2_shift);
  const Var hidden = activation(t, add_row_bias(t, matmul(t, ln2, b.ffn_w1), b.ffn_b1), act);
  const Var ff = add_row_bias(t, matmul(t, hidden, b.ffn_w2), b.ffn_b2);
  return add(t, ff, mid);
}

/// Returns the 1 x C logits node for one token matrix.
inline Var model_logits(Tape& t, const ModelVars& mv, const ViTModel& m, const Matrix& tokens) {
  Var x = add(t, t.leaf(tokens), mv.pos_encoding);
  for (std::size_t l = 0; l < mv.blocks.size(); ++l)
    x = transformer_block(t, x, mv.blocks[l], m.blocks[l].variant, m.config.activation);
  return matmul(t, mean_rows(t, x), mv.readout);
}

/// Gradients shaped like the model itself (each tensor holds d loss / d param).
inline ViTModel gradients_as_model(const Tape& t, const ModelVars& mv, const ViTModel& m) {
  ViTModel g = m;
  std::size_t k = 0;
  visit_parameters(g, [&](const std::string&, std::size_t, std::size_t, std::span<double> v) {
    const Matrix gm = t.grad(mv.flat.at(k++));
    std::copy(gm.data().begin(), gm.data().end(), v.begin());
  });
  return g;
}

struct LossAndGrad {
  double loss = 0.0;
  ViTModel grads;
};

/// Cross-entropy loss of one sample and the gradient for every parameter
/// (zero for parameters outside the variant's graph).
inline LossAndGrad grad(const ViTModel& m, const Matrix& tokens, std::size_t label) {
  Tape t;
  const ModelVars mv = bind_parameters(t, m);
  const Var loss = softmax_cross_entropy(t, model_logits(t, mv, m, tokens), label);
  t.backward(loss);
  return {t.value(loss)(0, 0), gradients_as_model(t, mv, m)};
}

}  // namespace antismooth::ad
