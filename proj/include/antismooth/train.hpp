// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "antismooth/autograd.hpp"
#include "antismooth/rng.hpp"
#include "antismooth/spectral.hpp"
#include "antismooth/vit.hpp"

namespace antismooth {

/// Token-sequence classification task whose classes live in different
/// frequency bands. Class 0 carries its signal in the DC band, class c >= 1
/// in band freq_signal + c - 1. Every sample also gets a random DC offset of
/// up to +-nuisance_dc * amplitude along the signal direction, so the DC band
/// alone cannot separate the classes and the HC evidence matters.
struct SyntheticTask {
  std::size_t n_tokens = 16;
  std::size_t dim = 32;
  std::size_t classes = 2;
  std::size_t freq_signal = 3;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  double amplitude = 1.0;
  double nuisance_dc = 1.0;

  void validate() const {
    if (n_tokens < 2 || dim < 1) throw parameter_error("SyntheticTask: need n_tokens >= 2, dim >= 1");
    if (classes < 2) throw parameter_error("SyntheticTask: need >= 2 classes");
    if (freq_signal < 1 || freq_signal + classes - 2 > n_tokens / 2)
      throw parameter_error("SyntheticTask: signal bands must lie in [1, n/2]");
    if (noise_std < 0.0 || nuisance_dc < 0.0) throw parameter_error("SyntheticTask: negative scale");
  }
};

struct Dataset {
  std::vector<Matrix> tokens;
  std::vector<std::size_t> labels;
};

/// Unit-energy-per-token band pattern (norm sqrt(n)); band 0 is the constant.
inline std::vector<double> band_pattern(std::size_t n, std::size_t band) {
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i)
    f[i] = std::cos(2.0 * std::numbers::pi * static_cast<double>(band * i) / static_cast<double>(n));
  const double scale = std::sqrt(static_cast<double>(n)) / vector_norm(f);
  for (double& v : f) v *= scale;
  return f;
}

/// Deterministic in (task.seed, stream, count). Labels cycle 0..classes-1.
inline Dataset generate_task(const SyntheticTask& task, std::size_t count,
                             std::string_view stream = "train") {
  task.validate();
  if (count < 1) throw parameter_error("generate_task: count must be >= 1");
  Rng base = Rng::keyed(task.seed, "task");
  Rng dir_rng = base.split("direction");
  std::vector<double> u(task.dim);
  for (double& v : u) v = dir_rng.normal();
  const double un = vector_norm(u);
  for (double& v : u) v /= un;

  std::vector<std::vector<double>> patterns;
  patterns.push_back(band_pattern(task.n_tokens, 0));
  for (std::size_t c = 1; c < task.classes; ++c)
    patterns.push_back(band_pattern(task.n_tokens, task.freq_signal + c - 1));

  Rng samples = base.split(stream);
  Dataset ds;
  for (std::size_t s = 0; s < count; ++s) {
    Rng r = samples.split(s);
    const std::size_t label = s % task.classes;
    const double offset = task.nuisance_dc * task.amplitude * r.uniform(-1.0, 1.0);
    Matrix x(task.n_tokens, task.dim);
    for (std::size_t i = 0; i < task.n_tokens; ++i) {
      const double coeff = task.amplitude * patterns[label][i] + offset;
      for (std::size_t j = 0; j < task.dim; ++j) x(i, j) = coeff * u[j] + task.noise_std * r.normal();
    }
    ds.tokens.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  return ds;
}

struct TrainConfig {
  ViTConfig model;
  SyntheticTask task;
  std::size_t epochs = 20;
  double lr = 0.01;
  double momentum = 0.0;
  std::size_t batch_size = 32;
  std::size_t train_samples = 512;
  std::size_t test_samples = 256;
  std::size_t probe_samples = 32;
  std::vector<std::uint64_t> seeds = {0};

  void validate() const {
    model.validate();
    task.validate();
    if (epochs < 1) throw parameter_error("TrainConfig: epochs must be >= 1");
    if (!(lr >= 0.0)) throw parameter_error("TrainConfig: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw parameter_error("TrainConfig: momentum in [0, 1)");
    if (batch_size < 1 || train_samples < 1 || test_samples < 1)
      throw parameter_error("TrainConfig: sample counts must be >= 1");
    if (task.n_tokens != model.tokens || task.dim != model.dim || task.classes != model.num_classes)
      throw parameter_error("TrainConfig: task and model shapes disagree");
  }
};

struct TrainRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> hc_proportion;  // per layer
  std::vector<double> m_attn;
  std::vector<double> m_feat;
  std::vector<std::vector<double>> omega;  // [layer][head]
  std::vector<std::vector<double>> s;      // [layer][channel]
  std::vector<std::vector<double>> t;
  std::vector<double> s_norm;  // per layer ||s_l||
  std::vector<double> t_norm;
};

struct TrainResult {
  ViTModel model;
  std::vector<TrainRecord> records;
  bool diverged = false;
};

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double accuracy(const ViTModel& m, const Dataset& ds) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.tokens.size(); ++i)
    if (argmax(model_forward(m, ds.tokens[i], false).logits) == ds.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.tokens.size());
}

/// Per-layer diagnostics averaged over the first `probe` samples, plus the
/// current scaling parameters.
inline TrainRecord snapshot(const ViTModel& m, const Dataset& test, std::size_t probe) {
  TrainRecord r;
  const std::size_t depth = m.blocks.size();
  r.hc_proportion.assign(depth, 0.0);
  r.m_attn.assign(depth, 0.0);
  r.m_feat.assign(depth, 0.0);
  const std::size_t count = std::min(probe, test.tokens.size());
  for (std::size_t i = 0; i < count; ++i) {
    const ForwardResult f = model_forward(m, test.tokens[i], true);
    for (std::size_t l = 0; l < depth; ++l) {
      r.hc_proportion[l] += f.trace[l].hc_proportion / static_cast<double>(count);
      r.m_attn[l] += f.trace[l].m_attn / static_cast<double>(count);
      r.m_feat[l] += f.trace[l].m_feat / static_cast<double>(count);
    }
  }
  for (const auto& b : m.blocks) {
    r.omega.push_back(b.attnscale_omega);
    r.s.push_back(b.featscale_s);
    r.t.push_back(b.featscale_t);
    r.s_norm.push_back(vector_norm(b.featscale_s));
    r.t_norm.push_back(vector_norm(b.featscale_t));
  }
  return r;
}

/// Mini-batch gradient descent with fixed learning rate (momentum optional,
/// off by default). Record 0 is the untrained model; record e follows epoch e.
/// A non-finite loss stops training with diverged = true and keeps the
/// records gathered so far.
///
/// `start`, when given, replaces the seeded initialization (resume or
/// fine-tune); its shapes must match cfg.model.
inline TrainResult train(const TrainConfig& cfg, Variant variant, std::uint64_t seed,
                         const ViTModel* start = nullptr) {
  cfg.validate();
  ViTConfig mc = cfg.model;
  mc.variant = variant;
  mc.seed = seed;
  if (start) {
    const ViTConfig& sc = start->config;
    if (sc.depth != mc.depth || sc.heads != mc.heads || sc.tokens != mc.tokens || sc.dim != mc.dim ||
        sc.d_q != mc.d_q || sc.d_head != mc.d_head || sc.d_ff != mc.d_ff || sc.num_classes != mc.num_classes)
      throw parameter_error("train: starting model shape differs from the config");
  }
  SyntheticTask task = cfg.task;
  task.seed = seed;
  const Dataset train_set = generate_task(task, cfg.train_samples, "train");
  const Dataset test_set = generate_task(task, cfg.test_samples, "test");

  TrainResult res{start ? *start : init_model(mc), {}, false};
  if (start) {
    res.model.config = mc;
    for (auto& b : res.model.blocks) b.variant = variant;
  }
  ViTModel& m = res.model;

  auto full_loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < train_set.tokens.size(); ++i) {
      const auto logits = model_forward(m, train_set.tokens[i], false).logits;
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double v : logits) z += std::exp(v - mx);
      total += std::log(z) + mx - logits[train_set.labels[i]];
    }
    return total / static_cast<double>(train_set.tokens.size());
  };

  TrainRecord r0 = snapshot(m, test_set, cfg.probe_samples);
  r0.epoch = 0;
  r0.loss = full_loss();
  r0.accuracy = accuracy(m, test_set);
  res.records.push_back(std::move(r0));

  std::vector<std::vector<double>> velocity;
  visit_parameters(m, [&](const std::string&, std::size_t, std::size_t, std::span<double> v) {
    velocity.emplace_back(v.size(), 0.0);
  });

  std::vector<std::size_t> order(train_set.tokens.size());
  const Rng shuffle_root = Rng::keyed(seed, "shuffle");
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng sr = shuffle_root.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[sr.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::vector<double>> acc;
      for (std::size_t k = start; k < stop; ++k) {
        ad::LossAndGrad lg = ad::grad(m, train_set.tokens[order[k]], train_set.labels[order[k]]);
        epoch_loss += lg.loss;
        std::size_t p = 0;
        visit_parameters(lg.grads, [&](const std::string&, std::size_t, std::size_t,
                                       std::span<double> g) {
          if (acc.size() <= p) acc.emplace_back(g.size(), 0.0);
          for (std::size_t j = 0; j < g.size(); ++j) acc[p][j] += g[j];
          ++p;
        });
      }
      if (!std::isfinite(epoch_loss)) {
        res.diverged = true;
        return res;
      }
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      std::size_t p = 0;
      visit_parameters(m, [&](const std::string&, std::size_t, std::size_t, std::span<double> v) {
        for (std::size_t j = 0; j < v.size(); ++j) {
          velocity[p][j] = cfg.momentum * velocity[p][j] + acc[p][j] * inv_batch;
          v[j] -= cfg.lr * velocity[p][j];
        }
        ++p;
      });
    }
    TrainRecord r = snapshot(m, test_set, cfg.probe_samples);
    r.epoch = epoch;
    r.loss = epoch_loss / static_cast<double>(order.size());
    r.accuracy = accuracy(m, test_set);
    const bool finite = std::isfinite(r.loss) &&
                        std::all_of(r.hc_proportion.begin(), r.hc_proportion.end(),
                                    [](double v) { return std::isfinite(v); });
    res.records.push_back(std::move(r));
    if (!finite) {
      res.diverged = true;
      return res;
    }
  }
  return res;
}

/// Mean of omega over the given layer range (all heads).
inline double mean_omega(const TrainRecord& r, std::size_t first, std::size_t last) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t l = first; l < last && l < r.omega.size(); ++l)
    for (double w : r.omega[l]) {
      s += w;
      ++k;
    }
  return k == 0 ? 0.0 : s / static_cast<double>(k);
}

struct VariantOutcome {
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  bool diverged = false;
  double final_accuracy = 0.0;
  double final_hc_proportion = 0.0;
  double final_m_feat = 0.0;
  double final_m_attn = 0.0;
  double omega_early = 0.0;  // mean omega over the first 4 layers
  double omega_late = 0.0;   // mean omega over the last 4 layers
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

inline MeanSd mean_sd(std::span<const double> v) {
  MeanSd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) r.sd += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(r.sd / static_cast<double>(v.size() - 1));
  }
  return r;
}

struct VariantSummary {
  Variant variant = Variant::baseline;
  MeanSd accuracy, hc_proportion, m_feat, m_attn;
};

struct ComparisonReport {
  std::vector<std::uint64_t> seeds;
  std::vector<VariantOutcome> outcomes;  // seed-major, variants in enum order
  std::vector<VariantSummary> summaries;

  const VariantOutcome& at(Variant v, std::uint64_t seed) const {
    for (const auto& o : outcomes)
      if (o.variant == v && o.seed == seed) return o;
    throw parameter_error("ComparisonReport: no such run");
  }
};

inline VariantOutcome summarize_run(const TrainResult& r, Variant v, std::uint64_t seed) {
  const TrainRecord& last = r.records.back();
  VariantOutcome o;
  o.variant = v;
  o.seed = seed;
  o.diverged = r.diverged;
  o.final_accuracy = last.accuracy;
  o.final_hc_proportion = last.hc_proportion.empty() ? 0.0 : last.hc_proportion.back();
  o.final_m_feat = last.m_feat.empty() ? 0.0 : last.m_feat.back();
  o.final_m_attn = last.m_attn.empty() ? 0.0 : last.m_attn.back();
  const std::size_t depth = last.omega.size();
  const std::size_t span = std::min<std::size_t>(4, depth);
  o.omega_early = mean_omega(last, 0, span);
  o.omega_late = mean_omega(last, depth - span, depth);
  return o;
}

/// Trains baseline, AttnScale and FeatScale on every seed. Variants of one
/// seed share their initial weights and data.
template <typename OnRun = decltype([](const TrainResult&, Variant, std::uint64_t) {})>
ComparisonReport compare_variants(const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                                  OnRun on_run = {}) {
  if (seeds.size() < 3) throw parameter_error("compare_variants: need >= 3 seeds");
  ComparisonReport rep;
  rep.seeds.assign(seeds.begin(), seeds.end());
  constexpr Variant kVariants[] = {Variant::baseline, Variant::attnscale, Variant::featscale};
  for (std::uint64_t seed : seeds)
    for (Variant v : kVariants) {
      const TrainResult r = train(cfg, v, seed);
      on_run(r, v, seed);
      rep.outcomes.push_back(summarize_run(r, v, seed));
    }
  for (Variant v : kVariants) {
    std::vector<double> acc, hc, mf, ma;
    for (const auto& o : rep.outcomes)
      if (o.variant == v) {
        acc.push_back(o.final_accuracy);
        hc.push_back(o.final_hc_proportion);
        mf.push_back(o.final_m_feat);
        ma.push_back(o.final_m_attn);
      }
    rep.summaries.push_back({v, mean_sd(acc), mean_sd(hc), mean_sd(mf), mean_sd(ma)});
  }
  return rep;
}

}  // namespace antismooth
