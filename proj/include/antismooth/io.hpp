// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>  // nlohmann/json, vendored

#include "antismooth/attention.hpp"
#include "antismooth/linalg.hpp"
#include "antismooth/train.hpp"
#include "antismooth/verify.hpp"
#include "antismooth/vit.hpp"

namespace antismooth {

using json = nlohmann::json;

/// Malformed or inconsistent JSON document.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Text formatting.

/// %.17g, enough digits to round-trip any double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Minimal CSV builder; fields are numbers or identifiers, never quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string_view> header) : width_(header.size()) {
    bool first = true;
    for (auto h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }

  CsvWriter& field(std::string_view s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& field(double v) { return field(std::string_view(format_double(v))); }
  CsvWriter& field(std::uint64_t v) { return field(std::string_view(std::to_string(v))); }
  CsvWriter& field(std::size_t v, int) { return field(static_cast<std::uint64_t>(v)); }

  void end_row() {
    if (col_ != width_) throw std::logic_error("CsvWriter: row width mismatch");
    out_ << '\n';
    col_ = 0;
  }

  std::string str() const { return out_.str(); }

 private:
  void sep() {
    if (col_ > 0) out_ << ',';
    ++col_;
  }

  std::size_t width_;
  std::size_t col_ = 0;
  std::ostringstream out_;
};

inline void write_text(const std::filesystem::path& p, std::string_view text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open for writing: " + p.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw io_error("write failed: " + p.string());
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw io_error("cannot open for reading: " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw format_error(std::string(what) + ": " + e.what());
  }
}

inline json read_json(const std::filesystem::path& p) { return parse_json(read_text(p), p.string()); }

/// Indented dump with a trailing newline.
inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

/// FNV-1a 64 of the compact canonical dump (object keys sorted), as 16 hex digits.
inline std::string config_hash(const json& config) {
  const std::uint64_t h = detail::fnv1a64(config.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Field access helpers.

namespace detail {

template <typename T>
T get_field(const json& j, std::string_view key, std::string_view ctx) {
  const auto it = j.find(key);
  if (it == j.end()) throw format_error(std::string(ctx) + ": missing field '" + std::string(key) + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw format_error(std::string(ctx) + "." + std::string(key) + ": " + e.what());
  }
}

/// Reads `key` into `out` when present; absent keys keep their default.
template <typename T>
void read_optional(const json& j, std::string_view key, T& out, std::string_view ctx) {
  if (j.contains(key)) out = get_field<T>(j, key, ctx);
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known,
                           std::string_view ctx) {
  if (!j.is_object()) throw format_error(std::string(ctx) + ": expected an object");
  const std::set<std::string_view> k(known);
  for (const auto& [key, _] : j.items())
    if (!k.contains(key)) throw format_error(std::string(ctx) + ": unknown field '" + key + "'");
}

inline std::uint64_t get_count(const json& j, std::string_view key, std::string_view ctx) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw format_error(std::string(ctx) + "." + std::string(key) + ": expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline void read_count(const json& j, std::string_view key, std::size_t& out, std::string_view ctx) {
  if (j.contains(key)) out = static_cast<std::size_t>(get_count(j, key, ctx));
}

inline void read_seed(const json& j, std::string_view key, std::uint64_t& out, std::string_view ctx) {
  if (j.contains(key)) out = get_count(j, key, ctx);
}

inline void read_real(const json& j, std::string_view key, double& out, std::string_view ctx) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number()) throw format_error(std::string(ctx) + "." + std::string(key) + ": expected a number");
  out = j.at(key).get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrices and vectors.

inline json to_json(const Matrix& m) { return m.to_nested(); }

inline Matrix matrix_from_json(const json& j, std::string_view ctx) {
  try {
    return Matrix::from_nested(j.get<std::vector<std::vector<double>>>());
  } catch (const json::exception& e) {
    throw format_error(std::string(ctx) + ": expected a nested list of numbers (" + e.what() + ")");
  } catch (const std::invalid_argument& e) {
    throw format_error(std::string(ctx) + ": " + e.what());
  } catch (const std::domain_error& e) {
    throw format_error(std::string(ctx) + ": " + e.what());
  }
}

inline std::vector<double> vector_from_json(const json& j, std::string_view ctx) {
  try {
    return j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw format_error(std::string(ctx) + ": expected a list of numbers (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------
// Configurations.

inline json to_json(const ViTConfig& c) {
  return {{"depth", c.depth},        {"heads", c.heads},
          {"tokens", c.tokens},      {"dim", c.dim},
          {"d_q", c.d_q},            {"d_head", c.d_head},
          {"d_ff", c.d_ff},          {"num_classes", c.num_classes},
          {"variant", to_string(c.variant)}, {"seed", c.seed},
          {"activation", to_string(c.activation)}, {"init_scale", c.init_scale}};
}

inline ViTConfig vit_config_from_json(const json& j, std::string_view ctx = "model") {
  detail::reject_unknown(j, {"depth", "heads", "tokens", "dim", "d_q", "d_head", "d_ff", "num_classes",
                             "variant", "seed", "activation", "init_scale"},
                         ctx);
  ViTConfig c;
  detail::read_count(j, "depth", c.depth, ctx);
  detail::read_count(j, "heads", c.heads, ctx);
  detail::read_count(j, "tokens", c.tokens, ctx);
  detail::read_count(j, "dim", c.dim, ctx);
  detail::read_count(j, "d_q", c.d_q, ctx);
  detail::read_count(j, "d_head", c.d_head, ctx);
  detail::read_count(j, "d_ff", c.d_ff, ctx);
  detail::read_count(j, "num_classes", c.num_classes, ctx);
  detail::read_seed(j, "seed", c.seed, ctx);
  detail::read_real(j, "init_scale", c.init_scale, ctx);
  if (j.contains("variant")) {
    const auto v = parse_variant(detail::get_field<std::string>(j, "variant", ctx));
    if (!v) throw format_error(std::string(ctx) + ".variant: unknown variant");
    c.variant = *v;
  }
  if (j.contains("activation")) {
    const auto a = parse_activation(detail::get_field<std::string>(j, "activation", ctx));
    if (!a) throw format_error(std::string(ctx) + ".activation: unknown activation");
    c.activation = *a;
  }
  try {
    c.validate();
  } catch (const parameter_error& e) {
    throw format_error(std::string(ctx) + ": " + e.what());
  }
  return c;
}

inline json to_json(const SyntheticTask& t) {
  return {{"n_tokens", t.n_tokens},       {"dim", t.dim},
          {"classes", t.classes},         {"freq_signal", t.freq_signal},
          {"noise_std", t.noise_std},     {"seed", t.seed},
          {"amplitude", t.amplitude},     {"nuisance_dc", t.nuisance_dc}};
}

inline SyntheticTask task_from_json(const json& j, std::string_view ctx = "task") {
  detail::reject_unknown(j, {"n_tokens", "dim", "classes", "freq_signal", "noise_std", "seed", "amplitude",
                             "nuisance_dc"},
                         ctx);
  SyntheticTask t;
  detail::read_count(j, "n_tokens", t.n_tokens, ctx);
  detail::read_count(j, "dim", t.dim, ctx);
  detail::read_count(j, "classes", t.classes, ctx);
  detail::read_count(j, "freq_signal", t.freq_signal, ctx);
  detail::read_real(j, "noise_std", t.noise_std, ctx);
  detail::read_seed(j, "seed", t.seed, ctx);
  detail::read_real(j, "amplitude", t.amplitude, ctx);
  detail::read_real(j, "nuisance_dc", t.nuisance_dc, ctx);
  try {
    t.validate();
  } catch (const parameter_error& e) {
    throw format_error(std::string(ctx) + ": " + e.what());
  }
  return t;
}

inline json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"task", to_json(c.task)},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"train_samples", c.train_samples},
          {"test_samples", c.test_samples},
          {"probe_samples", c.probe_samples},
          {"seeds", c.seeds}};
}

/// Absent fields take their defaults; unknown fields are rejected.
inline TrainConfig train_config_from_json(const json& j) {
  constexpr std::string_view ctx = "config";
  detail::reject_unknown(j, {"model", "task", "epochs", "lr", "momentum", "batch_size", "train_samples",
                             "test_samples", "probe_samples", "seeds"},
                         ctx);
  TrainConfig c;
  if (j.contains("model")) c.model = vit_config_from_json(j.at("model"), "config.model");
  if (j.contains("task")) c.task = task_from_json(j.at("task"), "config.task");
  detail::read_count(j, "epochs", c.epochs, ctx);
  detail::read_real(j, "lr", c.lr, ctx);
  detail::read_real(j, "momentum", c.momentum, ctx);
  detail::read_count(j, "batch_size", c.batch_size, ctx);
  detail::read_count(j, "train_samples", c.train_samples, ctx);
  detail::read_count(j, "test_samples", c.test_samples, ctx);
  detail::read_count(j, "probe_samples", c.probe_samples, ctx);
  if (j.contains("seeds")) {
    c.seeds.clear();
    const json& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw format_error("config.seeds: expected a non-empty list");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number_unsigned()) throw format_error("config.seeds: expected nonnegative integers");
      c.seeds.push_back(s[i].get<std::uint64_t>());
    }
  }
  try {
    c.validate();
  } catch (const parameter_error& e) {
    throw format_error(std::string(ctx) + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline json to_json(const BlockParams& p) {
  json heads = json::array();
  for (const auto& h : p.heads) heads.push_back({{"w_q", to_json(h.w_q)}, {"w_k", to_json(h.w_k)}, {"w_v", to_json(h.w_v)}});
  return {{"heads", heads},
          {"w_o", to_json(p.w_o)},
          {"ln1", {{"scale", p.ln1.scale}, {"shift", p.ln1.shift}}},
          {"ln2", {{"scale", p.ln2.scale}, {"shift", p.ln2.shift}}},
          {"ffn_w1", to_json(p.ffn_w1)},
          {"ffn_b1", p.ffn_b1},
          {"ffn_w2", to_json(p.ffn_w2)},
          {"ffn_b2", p.ffn_b2},
          {"attnscale_omega", p.attnscale_omega},
          {"featscale_s", p.featscale_s},
          {"featscale_t", p.featscale_t},
          {"variant", to_string(p.variant)}};
}

inline BlockParams block_from_json(const json& j, std::string_view ctx) {
  const std::string c(ctx);
  detail::reject_unknown(j, {"heads", "w_o", "ln1", "ln2", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
                             "attnscale_omega", "featscale_s", "featscale_t", "variant"},
                         ctx);
  auto need = [&](std::string_view key) -> const json& {
    if (!j.contains(key)) throw format_error(c + ": missing field '" + std::string(key) + "'");
    return j.at(key);
  };
  std::vector<SAHeadWeights> heads;
  const json& hj = need("heads");
  if (!hj.is_array()) throw format_error(c + ".heads: expected a list");
  for (std::size_t h = 0; h < hj.size(); ++h) {
    const std::string hc = c + ".heads[" + std::to_string(h) + "]";
    detail::reject_unknown(hj[h], {"w_q", "w_k", "w_v"}, hc);
    if (!hj[h].contains("w_q") || !hj[h].contains("w_k") || !hj[h].contains("w_v"))
      throw format_error(hc + ": needs w_q, w_k, w_v");
    heads.push_back({matrix_from_json(hj[h]["w_q"], hc + ".w_q"), matrix_from_json(hj[h]["w_k"], hc + ".w_k"),
                     matrix_from_json(hj[h]["w_v"], hc + ".w_v")});
  }
  auto ln = [&](std::string_view key) {
    const json& l = need(key);
    const std::string lc = c + "." + std::string(key);
    detail::reject_unknown(l, {"scale", "shift"}, lc);
    if (!l.contains("scale") || !l.contains("shift")) throw format_error(lc + ": needs scale and shift");
    return LayerNormParams{vector_from_json(l["scale"], lc + ".scale"), vector_from_json(l["shift"], lc + ".shift")};
  };
  const auto variant = parse_variant(detail::get_field<std::string>(j, "variant", ctx));
  if (!variant) throw format_error(c + ".variant: unknown variant");
  BlockParams p{.heads = std::move(heads),
                .w_o = matrix_from_json(need("w_o"), c + ".w_o"),
                .ln1 = ln("ln1"),
                .ln2 = ln("ln2"),
                .ffn_w1 = matrix_from_json(need("ffn_w1"), c + ".ffn_w1"),
                .ffn_b1 = vector_from_json(need("ffn_b1"), c + ".ffn_b1"),
                .ffn_w2 = matrix_from_json(need("ffn_w2"), c + ".ffn_w2"),
                .ffn_b2 = vector_from_json(need("ffn_b2"), c + ".ffn_b2"),
                .attnscale_omega = vector_from_json(need("attnscale_omega"), c + ".attnscale_omega"),
                .featscale_s = vector_from_json(need("featscale_s"), c + ".featscale_s"),
                .featscale_t = vector_from_json(need("featscale_t"), c + ".featscale_t"),
                .variant = *variant};
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw format_error(c + ": " + e.what());
  }
  return p;
}

inline json to_json(const ViTModel& m) {
  json blocks = json::array();
  for (const auto& b : m.blocks) blocks.push_back(to_json(b));
  return {{"config", to_json(m.config)},
          {"blocks", blocks},
          {"readout", to_json(m.readout)},
          {"pos_encoding", to_json(m.pos_encoding)}};
}

/// Parses and cross-checks a checkpoint against its own config.
inline ViTModel model_from_json(const json& j) {
  detail::reject_unknown(j, {"config", "blocks", "readout", "pos_encoding"}, "checkpoint");
  for (std::string_view k : {"config", "blocks", "readout", "pos_encoding"})
    if (!j.contains(k)) throw format_error("checkpoint: missing field '" + std::string(k) + "'");
  const ViTConfig c = vit_config_from_json(j.at("config"), "checkpoint.config");
  const json& bj = j.at("blocks");
  if (!bj.is_array()) throw format_error("checkpoint.blocks: expected a list");
  ViTModel m{c, {}, matrix_from_json(j.at("readout"), "checkpoint.readout"),
             matrix_from_json(j.at("pos_encoding"), "checkpoint.pos_encoding")};
  for (std::size_t l = 0; l < bj.size(); ++l)
    m.blocks.push_back(block_from_json(bj[l], "checkpoint.blocks[" + std::to_string(l) + "]"));
  if (m.blocks.size() != c.depth) throw format_error("checkpoint: block count != config.depth");
  if (m.readout.rows() != c.dim || m.readout.cols() != c.num_classes)
    throw format_error("checkpoint.readout: expected dim x num_classes");
  if (m.pos_encoding.rows() != c.tokens || m.pos_encoding.cols() != c.dim)
    throw format_error("checkpoint.pos_encoding: expected tokens x dim");
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const BlockParams& b = m.blocks[l];
    if (b.dim() != c.dim || b.num_heads() != c.heads || b.head_dim() != c.d_head ||
        b.heads.front().w_q.cols() != c.d_q || b.ffn_w1.cols() != c.d_ff)
      throw format_error("checkpoint.blocks[" + std::to_string(l) + "]: shape disagrees with config");
  }
  return m;
}

inline ViTModel load_checkpoint(const std::filesystem::path& p) { return model_from_json(read_json(p)); }

inline void save_checkpoint(const std::filesystem::path& p, const ViTModel& m) { write_text(p, dump_json(to_json(m))); }

// ---------------------------------------------------------------------------
// Verification reports.

inline json to_json(const SuiteReport& r) {
  json v = json::array();
  for (const auto& x : r.violations)
    v.push_back({{"trial", x.trial}, {"n", x.n}, {"measured", x.measured}, {"bound", x.bound},
                 {"margin", x.margin}, {"detail", x.detail}});
  json j = {{"suite", r.suite},
            {"trials", r.trials},
            {"checks", r.checks},
            {"violation_count", r.violation_count},
            {"violations", v},
            {"worst_margin", r.worst_margin},
            {"runtime", r.runtime_seconds}};
  if (!r.caveat.empty()) j["caveat"] = r.caveat;
  if (!r.notes.empty()) {
    json notes = json::object();
    for (const auto& [k, val] : r.notes) notes[k] = val;
    j["notes"] = notes;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Training exports.

inline std::string metrics_csv(const std::vector<TrainRecord>& records, Variant v, std::uint64_t seed) {
  CsvWriter w({"epoch", "variant", "seed", "loss", "acc", "layer", "hc_prop", "m_attn", "m_feat"});
  for (const auto& r : records)
    for (std::size_t l = 0; l < r.hc_proportion.size(); ++l) {
      w.field(std::uint64_t{r.epoch}).field(to_string(v)).field(seed).field(r.loss).field(r.accuracy);
      w.field(std::uint64_t{l + 1}).field(r.hc_proportion[l]).field(r.m_attn[l]).field(r.m_feat[l]);
      w.end_row();
    }
  return w.str();
}

inline std::string omega_csv(const std::vector<TrainRecord>& records) {
  CsvWriter w({"epoch", "layer", "head", "omega"});
  for (const auto& r : records)
    for (std::size_t l = 0; l < r.omega.size(); ++l)
      for (std::size_t h = 0; h < r.omega[l].size(); ++h) {
        w.field(std::uint64_t{r.epoch}).field(std::uint64_t{l + 1}).field(std::uint64_t{h + 1}).field(r.omega[l][h]);
        w.end_row();
      }
  return w.str();
}

inline std::string st_csv(const std::vector<TrainRecord>& records) {
  CsvWriter w({"epoch", "layer", "channel", "s", "t"});
  for (const auto& r : records)
    for (std::size_t l = 0; l < r.s.size(); ++l)
      for (std::size_t c = 0; c < r.s[l].size(); ++c) {
        w.field(std::uint64_t{r.epoch}).field(std::uint64_t{l + 1}).field(std::uint64_t{c + 1});
        w.field(r.s[l][c]).field(r.t[l][c]);
        w.end_row();
      }
  return w.str();
}

inline json to_json(const MeanSd& m) { return {{"mean", m.mean}, {"sd", m.sd}}; }

inline json to_json(const ComparisonReport& rep) {
  json runs = json::array();
  for (const auto& o : rep.outcomes)
    runs.push_back({{"variant", to_string(o.variant)},
                    {"seed", o.seed},
                    {"diverged", o.diverged},
                    {"final_accuracy", o.final_accuracy},
                    {"final_hc_proportion", o.final_hc_proportion},
                    {"final_m_feat", o.final_m_feat},
                    {"final_m_attn", o.final_m_attn},
                    {"omega_early", o.omega_early},
                    {"omega_late", o.omega_late}});
  json sums = json::array();
  for (const auto& s : rep.summaries)
    sums.push_back({{"variant", to_string(s.variant)},
                    {"accuracy", to_json(s.accuracy)},
                    {"hc_proportion", to_json(s.hc_proportion)},
                    {"m_feat", to_json(s.m_feat)},
                    {"m_attn", to_json(s.m_attn)}});
  return {{"seeds", rep.seeds}, {"runs", runs}, {"summary", sums}};
}

/// Run manifest; config_hash is recomputable from the stored config.
inline json make_manifest(std::string_view command, const json& config, std::uint64_t seed,
                          const std::vector<std::string>& outputs) {
  return {{"command", command},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"tool_version", kToolVersion},
          {"outputs", outputs},
          {"config", config}};
}

}  // namespace antismooth
