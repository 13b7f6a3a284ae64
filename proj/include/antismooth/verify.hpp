// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "antismooth/attention.hpp"
#include "antismooth/rng.hpp"
#include "antismooth/spectral.hpp"
#include "antismooth/theory.hpp"
#include "antismooth/vit.hpp"

namespace antismooth {

// Thresholds of the verification suites.
inline constexpr double kBoundSlack = 1e-9;
inline constexpr double kThm1RatioLimit = 1e-6;
inline constexpr std::size_t kThm1Steps = 200;
inline constexpr double kCor2RatioLimit = 1e-3;
inline constexpr std::size_t kCor2Factors = 64;
inline constexpr double kStochasticTol = 1e-10;
inline constexpr double kLemma5ScanTol = 1e-8;
inline constexpr double kLemma5StochasticTol = 1e-10;

inline constexpr const char* kLayerNormCaveat =
    "rate bounds exclude LayerNorm; checked on LayerNorm-free compositions";

struct Violation {
  std::size_t trial = 0;
  std::size_t n = 0;
  double measured = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  std::string detail;
};

/// Outcome of one suite. A margin is (limit - measured); negative beyond the
/// slack means violation. Only the first kMaxStoredViolations are kept.
struct SuiteReport {
  static constexpr std::size_t kMaxStoredViolations = 100;

  std::string suite;
  std::size_t trials = 0;
  std::size_t checks = 0;
  std::size_t violation_count = 0;
  std::vector<Violation> violations;
  double worst_margin = std::numeric_limits<double>::infinity();
  double runtime_seconds = 0.0;
  std::vector<std::pair<std::string, double>> notes;
  std::string caveat;

  bool passed() const noexcept { return violation_count == 0; }

  /// Records one check; a violation when measured > limit + slack.
  void check(std::size_t trial, std::size_t n, double measured, double limit, double slack,
             std::string_view detail) {
    ++checks;
    const double margin = limit - measured;
    if (!std::isfinite(measured) || !std::isfinite(limit)) {
      fail(trial, n, measured, limit, -std::numeric_limits<double>::infinity(), detail);
      return;
    }
    worst_margin = std::min(worst_margin, margin);
    if (margin < -slack) fail(trial, n, measured, limit, margin, detail);
  }

  void fail(std::size_t trial, std::size_t n, double measured, double limit, double margin,
            std::string_view detail) {
    ++violation_count;
    worst_margin = std::min(worst_margin, margin);
    if (violations.size() < kMaxStoredViolations)
      violations.push_back({trial, n, measured, limit, margin, std::string(detail)});
  }
};

inline constexpr std::array<std::string_view, 8> kSuiteNames = {
    "thm1", "cor2", "thm3", "prop1", "prop2", "prop3", "lemma4", "lemma5"};

namespace detail {

/// Standard normal logits.
inline Matrix random_logits(std::size_t n, Rng& r) { return Matrix::random_normal(n, n, r, 1.0); }

inline std::vector<double> positive_unit_signal(std::size_t n, Rng& r) {
  std::vector<double> z(n);
  for (double& v : z) v = r.uniform(0.5, 1.5);
  const double nz = vector_norm(z);
  for (double& v : z) v /= nz;
  return z;
}

inline SAHeadWeights random_head(std::size_t d, std::size_t d_q, std::size_t d_head, Rng& r) {
  const double qk = r.uniform(0.1, 2.0) / std::sqrt(static_cast<double>(d));
  const double vs = r.uniform(0.1, 2.0) / std::sqrt(static_cast<double>(d));
  return {Matrix::random_normal(d, d_q, r, qk), Matrix::random_normal(d, d_q, r, qk),
          Matrix::random_normal(d, d_head, r, vs)};
}

/// Baseline block with random weights (omega, s, t unused).
inline BlockParams random_block(std::size_t d, std::size_t heads, std::size_t d_q,
                                std::size_t d_head, std::size_t d_ff, Rng& r) {
  std::vector<SAHeadWeights> hs;
  for (std::size_t h = 0; h < heads; ++h) hs.push_back(random_head(d, d_q, d_head, r));
  Matrix w_o = Matrix::random_normal(heads * d_head, d, r,
                                     r.uniform(0.2, 1.5) / std::sqrt(static_cast<double>(heads * d_head)));
  Matrix w1 = Matrix::random_normal(d, d_ff, r, r.uniform(0.2, 1.5) / std::sqrt(static_cast<double>(d)));
  Matrix w2 = Matrix::random_normal(d_ff, d, r, r.uniform(0.2, 1.5) / std::sqrt(static_cast<double>(d_ff)));
  BlockParams p{.heads = std::move(hs),
                .w_o = std::move(w_o),
                .ln1 = LayerNormParams::identity(d),
                .ln2 = LayerNormParams::identity(d),
                .ffn_w1 = std::move(w1),
                .ffn_b1 = {},
                .ffn_w2 = std::move(w2),
                .ffn_b2 = {},
                .attnscale_omega = std::vector<double>(heads, 0.0),
                .featscale_s = std::vector<double>(d, 0.0),
                .featscale_t = std::vector<double>(d, 0.0),
                .variant = Variant::baseline};
  p.ffn_b1.resize(d_ff);
  for (double& b : p.ffn_b1) b = r.normal(0.0, 0.5);
  p.ffn_b2.resize(d);
  for (double& b : p.ffn_b2) b = r.normal(0.0, 0.5);
  return p;
}

inline Matrix random_tokens(std::size_t n, std::size_t d, Rng& r) {
  return Matrix::random_normal(n, d, r, r.uniform(0.1, 3.0));
}

inline double hc_norm(const Matrix& x) { return frobenius_norm(hc_component(x)); }

inline double slack_for(double bound) { return kBoundSlack * std::max(1.0, std::abs(bound)); }

inline constexpr std::array<std::size_t, 3> kBoundSizes = {4, 8, 16};

template <typename Body>
SuiteReport timed_suite(std::string_view name, std::size_t trials, Body&& body) {
  SuiteReport rep;
  rep.suite = std::string(name);
  rep.trials = trials;
  const auto t0 = std::chrono::steady_clock::now();
  body(rep);
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (rep.checks == 0) rep.worst_margin = 0.0;
  return rep;
}

}  // namespace detail

/// A^200 z has HC/DC ratio below 1e-6 for random softmax maps,
/// n cycling through {4, 8, 16, 32}.
inline SuiteReport verify_thm1(std::size_t trials, std::uint64_t seed) {
  return detail::timed_suite("thm1", trials, [&](SuiteReport& rep) {
    constexpr std::array<std::size_t, 4> sizes = {4, 8, 16, 32};
    const Rng root = Rng::keyed(seed, "thm1");
    for (std::size_t i = 0; i < trials; ++i) {
      Rng r = root.split(i);
      const std::size_t n = sizes[i % sizes.size()];
      const AttentionMap a = softmax_rows(detail::random_logits(n, r));
      const auto z = detail::positive_unit_signal(n, r);
      const auto traj = low_pass_trajectory(a, z, kThm1Steps);
      const auto& last = traj.back();
      if (!last.ratio) {
        rep.fail(i, n, std::numeric_limits<double>::quiet_NaN(), kThm1RatioLimit,
                 -std::numeric_limits<double>::infinity(), "undefined ratio");
        continue;
      }
      rep.check(i, n, *last.ratio, kThm1RatioLimit, 0.0, "HC/DC ratio after 200 steps");
    }
  });
}

/// Products of 64 distinct softmax maps (n = 16): ratio below 1e-3, product
/// row-stochastic within 1e-10 and strictly positive.
inline SuiteReport verify_cor2(std::size_t trials, std::uint64_t seed) {
  return detail::timed_suite("cor2", trials, [&](SuiteReport& rep) {
    constexpr std::size_t n = 16;
    const Rng root = Rng::keyed(seed, "cor2");
    for (std::size_t i = 0; i < trials; ++i) {
      Rng r = root.split(i);
      std::vector<AttentionMap> maps;
      for (std::size_t k = 0; k < kCor2Factors; ++k) maps.push_back(softmax_rows(detail::random_logits(n, r)));
      const auto z = detail::positive_unit_signal(n, r);
      const CompositionResult c = composition_low_pass(maps, z);
      const auto& last = c.records.back();
      rep.check(i, n, last.ratio.value_or(std::numeric_limits<double>::infinity()), kCor2RatioLimit,
                0.0, "HC/DC ratio after 64 factors");
      rep.check(i, n, c.max_row_sum_error, kStochasticTol, 0.0, "product row-sum error");
      if (!(c.min_entry > 0.0)) rep.fail(i, n, c.min_entry, 0.0, c.min_entry, "product has entry <= 0");
    }
  });
}

/// ||HC[SA(X)]|| <= base(alpha) ||W_V|| ||HC[X]|| and alpha below its
/// dot-product bound, for `trials` draws at each n in {4, 8, 16}.
inline SuiteReport verify_thm3(std::size_t trials, std::uint64_t seed) {
  return detail::timed_suite("thm3", trials, [&](SuiteReport& rep) {
    rep.caveat = kLayerNormCaveat;
    const Rng root = Rng::keyed(seed, "thm3");
    for (std::size_t n : detail::kBoundSizes)
      for (std::size_t i = 0; i < trials; ++i) {
        Rng r = root.split(n).split(i);
        const std::size_t d = 8, d_q = 4;
        const Matrix x = detail::random_tokens(n, d, r);
        const SAHeadWeights h = detail::random_head(d, d_q, d, r);
        const Matrix p = attention_logits(x, h);
        const RateBound b = sa_rate_bound(p, h.w_v);
        const double measured = detail::hc_norm(self_attention(x, h));
        const double bound = b.value * detail::hc_norm(x);
        rep.check(i, n, measured, bound, detail::slack_for(bound), "SA rate");
        const double ab = alpha_bound_dot(max_row_norm(x), h.w_q, h.w_k, d_q);
        rep.check(i, n, b.alpha, ab, detail::slack_for(ab), "alpha dot-product bound");
      }
  });
}

namespace detail {

struct BlockDraw {
  Matrix x;
  BlockParams block;
};

inline BlockDraw block_draw(std::size_t n, Rng& r) {
  const std::size_t d = 8;
  const std::size_t heads = 1 + r.below(3);
  const std::size_t d_head = 2 + r.below(5);
  Matrix x = random_tokens(n, d, r);
  return {std::move(x), random_block(d, heads, 4, d_head, 2 * d, r)};
}

template <typename Measure>
SuiteReport block_suite(std::string_view name, std::size_t trials, std::uint64_t seed,
                        Measure&& measure) {
  return timed_suite(name, trials, [&](SuiteReport& rep) {
    rep.caveat = kLayerNormCaveat;
    const Rng root = Rng::keyed(seed, name);
    for (std::size_t n : kBoundSizes)
      for (std::size_t i = 0; i < trials; ++i) {
        Rng r = root.split(n).split(i);
        BlockDraw draw = block_draw(n, r);
        const RateBound msa = msa_rate_bound(draw.block, max_head_alpha(draw.x, draw.block), n);
        measure(rep, i, n, draw, msa);
      }
  });
}

}  // namespace detail

/// ||HC[MSA(X)]|| <= sigma1 sigma2 H base(alpha) ||HC[X]||.
inline SuiteReport verify_prop1(std::size_t trials, std::uint64_t seed) {
  return detail::block_suite("prop1", trials, seed,
                             [](SuiteReport& rep, std::size_t i, std::size_t n,
                                const detail::BlockDraw& d, const RateBound& msa) {
                               const double measured = detail::hc_norm(multi_head_sa(d.x, d.block));
                               const double bound = msa.value * detail::hc_norm(d.x);
                               rep.check(i, n, measured, bound, detail::slack_for(bound), "MSA rate");
                             });
}

/// ||HC[MSA(X) + X]|| <= (1 + msa) ||HC[X]||.
inline SuiteReport verify_prop2(std::size_t trials, std::uint64_t seed) {
  return detail::block_suite("prop2", trials, seed,
                             [](SuiteReport& rep, std::size_t i, std::size_t n,
                                const detail::BlockDraw& d, const RateBound& msa) {
                               const double measured = detail::hc_norm(multi_head_sa(d.x, d.block) + d.x);
                               const double bound = residual_rate_bound(msa).value * detail::hc_norm(d.x);
                               rep.check(i, n, measured, bound, detail::slack_for(bound), "residual rate");
                             });
}

/// ReLU FFN with certified sigma3 = ||W1|| ||W2||: Y = FFN(MSA(X) + X) and,
/// with its own skip, Y = FFN(X') + X'. The LayerNorm-included block is only
/// measured (worst measured/bound ratio noted), not asserted.
inline SuiteReport verify_prop3(std::size_t trials, std::uint64_t seed) {
  double worst_ln_ratio = 0.0;
  SuiteReport rep = detail::block_suite(
      "prop3", trials, seed,
      [&](SuiteReport& rp, std::size_t i, std::size_t n, const detail::BlockDraw& d,
          const RateBound& msa) {
        const RateBound res = residual_rate_bound(msa);
        const double sigma3 = ffn_lipschitz(d.block, Activation::relu);
        const double hx = detail::hc_norm(d.x);
        const Matrix mid = multi_head_sa(d.x, d.block) + d.x;
        const Matrix y = ffn(mid, d.block, Activation::relu);
        const double b1 = ffn_rate_bound(res, sigma3, false).value * hx;
        rp.check(i, n, detail::hc_norm(y), b1, detail::slack_for(b1), "FFN rate");
        const double b2 = ffn_rate_bound(res, sigma3, true).value * hx;
        rp.check(i, n, detail::hc_norm(y + mid), b2, detail::slack_for(b2), "FFN+skip rate");
        const double ln_measured = detail::hc_norm(transformer_block(d.x, d.block, Activation::relu));
        worst_ln_ratio = std::max(worst_ln_ratio, ln_measured / b2);
      });
  rep.notes.emplace_back("layernorm_block_worst_measured_over_bound", worst_ln_ratio);
  return rep;
}

/// ||HC[X]|| <= ||X - 1 z^T|| for random z, with equality at z = X^T 1 / n.
inline SuiteReport verify_lemma4(std::size_t trials, std::uint64_t seed) {
  return detail::timed_suite("lemma4", trials, [&](SuiteReport& rep) {
    const Rng root = Rng::keyed(seed, "lemma4");
    for (std::size_t i = 0; i < trials; ++i) {
      Rng r = root.split(i);
      const std::size_t n = 2 + r.below(15), d = 1 + r.below(8);
      const Matrix x = detail::random_tokens(n, d, r);
      const double hx = detail::hc_norm(x);
      auto residual = [&](const Matrix& z) {
        Matrix diff = x;
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = 0; b < d; ++b) diff(a, b) -= z(0, b);
        return frobenius_norm(diff);
      };
      const Matrix z = column_means(x) + Matrix::random_normal(1, d, r, r.uniform(1e-3, 2.0));
      // measured = ||HC X||, limit = ||X - 1 z^T||.
      rep.check(i, n, hx, residual(z), 0.0, "HC norm vs offset residual");
      const double at_opt = residual(column_means(x));
      if (std::abs(at_opt - hx) > 1e-9 * std::max(1.0, hx))
        rep.fail(i, n, at_opt, hx, hx - at_opt, "z* = X^T 1/n does not attain the minimum");
    }
  });
}

namespace detail {

/// Golden-section minimization of ||A - beta 11^T/n||_F^2 in binary128, on
/// a bracket derived from ||A||_F only. The objective is flat near its
/// minimum, so double or x87 precision cannot resolve beta to 1e-8.
inline double lowpass_beta_scan(const Matrix& a) {
  using quad = __float128;
  const quad n = static_cast<quad>(a.rows());
  auto objective = [&](quad beta) {
    quad s = 0;
    for (double v : a.data()) {
      const quad e = static_cast<quad>(v) - beta / n;
      s += e * e;
    }
    return s;
  };
  const quad r = static_cast<quad>(frobenius_norm(a)) + 1;
  quad lo = -r, hi = r;
  const quad g = static_cast<quad>(0.6180339887498948482045868343656381L);
  quad c = hi - g * (hi - lo), d = lo + g * (hi - lo);
  quad fc = objective(c), fd = objective(d);
  for (int it = 0; it < 400 && hi - lo > static_cast<quad>(1e-15); ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - g * (hi - lo);
      fc = objective(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + g * (hi - lo);
      fd = objective(d);
    }
  }
  return static_cast<double>((lo + hi) / 2);
}

}  // namespace detail

/// Closed-form beta* agrees with the scan; equals 1 for row-stochastic maps.
inline SuiteReport verify_lemma5(std::size_t trials, std::uint64_t seed) {
  return detail::timed_suite("lemma5", trials, [&](SuiteReport& rep) {
    const Rng root = Rng::keyed(seed, "lemma5");
    for (std::size_t i = 0; i < trials; ++i) {
      Rng r = root.split(i);
      const std::size_t n = 2 + r.below(31);
      const bool stochastic = i % 2 == 0;
      const Matrix a = stochastic ? softmax_rows(detail::random_logits(n, r)).matrix()
                                  : Matrix::random_normal(n, n, r, r.uniform(0.1, 2.0));
      const double beta = optimal_lowpass_beta(a);
      const double scan = detail::lowpass_beta_scan(a);
      rep.check(i, n, std::abs(beta - scan), kLemma5ScanTol, 0.0, "closed form vs scan");
      if (stochastic)
        rep.check(i, n, std::abs(beta - 1.0), kLemma5StochasticTol, 0.0, "beta* = 1 for stochastic A");
    }
  });
}

inline std::optional<SuiteReport> run_suite(std::string_view name, std::size_t trials,
                                            std::uint64_t seed) {
  if (name == "thm1") return verify_thm1(trials, seed);
  if (name == "cor2") return verify_cor2(trials, seed);
  if (name == "thm3") return verify_thm3(trials, seed);
  if (name == "prop1") return verify_prop1(trials, seed);
  if (name == "prop2") return verify_prop2(trials, seed);
  if (name == "prop3") return verify_prop3(trials, seed);
  if (name == "lemma4") return verify_lemma4(trials, seed);
  if (name == "lemma5") return verify_lemma5(trials, seed);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Attention-only bound curves on random deep models.

struct CurveSuiteResult {
  SuiteReport dominance;  // measured <= bound, every layer of every model
  SuiteReport monotone;   // HC strictly decreasing under the contraction scaling
  std::vector<std::vector<TrajectoryRecord>> curves;
};

inline ViTConfig curve_model_config(std::uint64_t seed, std::size_t depth = 12) {
  ViTConfig c;
  c.depth = depth;
  c.seed = seed;
  return c;
}

/// Scales each head's W_V so sigma1 sigma2 H sqrt(n) < 1: the MSA bound is
/// then below one whatever alpha is, making HC contract every layer.
inline void enforce_contraction(BlockParams& b, std::size_t n) {
  double sigma2 = 0.0;
  for (std::size_t h = 0; h < b.num_heads(); ++h) sigma2 = std::max(sigma2, spectral_norm(b.w_o_block(h)));
  const double target = 0.99 / (std::sqrt(static_cast<double>(n)) * sigma2 * static_cast<double>(b.num_heads()));
  for (auto& h : b.heads) {
    const double s = spectral_norm(h.w_v);
    if (s > target) h.w_v *= target / s;
  }
}

inline CurveSuiteResult verify_attention_curves(std::size_t models, std::uint64_t seed,
                                                std::size_t depth = 12) {
  CurveSuiteResult out;
  out.dominance = detail::timed_suite("curve_dominance", models, [&](SuiteReport& rep) {
    for (std::size_t s = 0; s < models; ++s) {
      const ViTModel m = init_model(curve_model_config(seed * 1000003u + s, depth));
      Rng xr = Rng::keyed(seed, "curve_inputs").split(s);
      const Matrix x0 = Matrix::random_normal(m.config.tokens, m.config.dim, xr);
      auto curve = upper_bound_curve(m.blocks, x0, m.config.activation, CurveMode::attention_only);
      for (const auto& rec : curve) {
        const double bound = std::exp(*rec.bound_log);
        rep.check(s, rec.step, rec.measured_ratio, bound, detail::slack_for(bound), "measured vs chained bound");
      }
      out.curves.push_back(std::move(curve));
    }
  });
  out.monotone = detail::timed_suite("curve_monotone", models, [&](SuiteReport& rep) {
    for (std::size_t s = 0; s < models; ++s) {
      ViTModel m = init_model(curve_model_config(seed * 1000003u + s, depth));
      for (auto& b : m.blocks) enforce_contraction(b, m.config.tokens);
      Rng xr = Rng::keyed(seed, "curve_inputs").split(s);
      const Matrix x0 = Matrix::random_normal(m.config.tokens, m.config.dim, xr);
      const auto curve = upper_bound_curve(m.blocks, x0, m.config.activation, CurveMode::attention_only);
      double prev = 1.0;
      for (const auto& rec : curve) {
        // measured must drop strictly: margin = prev - measured > 0.
        if (!(rec.measured_ratio < prev)) rep.fail(s, rec.step, rec.measured_ratio, prev, prev - rec.measured_ratio, "HC did not decrease");
        else rep.check(s, rec.step, rec.measured_ratio, prev, 0.0, "HC decrease");
        prev = rec.measured_ratio;
      }
    }
  });
  return out;
}

}  // namespace antismooth
