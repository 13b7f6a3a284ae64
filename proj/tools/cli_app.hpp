// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: verify, spectrum, train, analyze.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "antismooth/io.hpp"
#include "antismooth/spectral.hpp"
#include "antismooth/theory.hpp"
#include "antismooth/train.hpp"
#include "antismooth/verify.hpp"
#include "antismooth/vit.hpp"

namespace antismooth::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kViolation = 1,
  kIoError = 2,
  kDiverged = 3,
  kUsage = 64,
  kSelectorMiss = 65,
};

/// Raised inside a command to end it with a specific exit code.
struct Exit {
  int code;
  std::string message;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

class Context {
 public:
  Context(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {}

  const Globals& globals() const { return g_; }
  std::ostream& out() { return out_; }

  void note(const std::string& msg) {
    if (!g_.quiet) err_ << msg << '\n';
  }

  /// Writes to `path`, or to stdout when path is empty.
  void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
      out_ << text;
      return;
    }
    write_text(path, text);
  }

 private:
  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io_error("cannot create directory: " + dir.string());
}

/// Probe tokens: a JSON nested list from `path`, else N(0,1) keyed by seed.
inline Matrix load_probe(const std::string& path, const ViTModel& m, std::uint64_t seed) {
  if (path.empty()) {
    Rng r = Rng::keyed(seed, "probe");
    return Matrix::random_normal(m.config.tokens, m.config.dim, r);
  }
  Matrix p = matrix_from_json(read_json(path), "probe");
  if (!p.same_shape(m.pos_encoding)) throw Exit{kUsage, "probe must be tokens x dim"};
  return p;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::string suite = "all";
  std::size_t trials = 100;
};

inline int cmd_verify(const VerifyArgs& a, Context& ctx) {
  if (a.trials == 0) throw Exit{kUsage, "verify: --trials must be >= 1"};
  const std::uint64_t seed = ctx.globals().seed_or(0);
  json report;
  bool ok = true;
  if (a.suite == "all") {
    json subs = json::array();
    double worst = std::numeric_limits<double>::infinity();
    double runtime = 0.0;
    json violations = json::array();
    for (std::string_view name : kSuiteNames) {
      const SuiteReport r = *run_suite(name, a.trials, seed);
      ok = ok && r.passed();
      worst = std::min(worst, r.worst_margin);
      runtime += r.runtime_seconds;
      for (const auto& v : to_json(r)["violations"]) {
        json tagged = v;
        tagged["suite"] = name;
        violations.push_back(tagged);
      }
      ctx.note(std::string(name) + ": " + (r.passed() ? "pass" : "FAIL") + " (" +
               std::to_string(r.violation_count) + " violations)");
      subs.push_back(to_json(r));
    }
    report = {{"suite", "all"}, {"trials", a.trials},     {"violations", violations},
              {"worst_margin", worst}, {"runtime", runtime}, {"suites", subs}};
  } else {
    const auto r = run_suite(a.suite, a.trials, seed);
    if (!r) throw Exit{kUsage, "verify: unknown suite '" + a.suite + "'"};
    ok = r->passed();
    ctx.note(a.suite + ": " + (ok ? "pass" : "FAIL") + " (" + std::to_string(r->violation_count) +
             " violations)");
    report = to_json(*r);
  }
  report["seed"] = seed;
  ctx.emit(ctx.globals().out, dump_json(report));
  return ok ? kOk : kViolation;
}

// ---------------------------------------------------------------------------
// spectrum

struct SpectrumArgs {
  std::string checkpoint;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
  std::string probe;
};

inline int cmd_spectrum(const SpectrumArgs& a, Context& ctx) {
  const ViTModel m = load_checkpoint(a.checkpoint);
  const std::size_t depth = m.blocks.size(), heads = m.config.heads;
  if (a.layer && (*a.layer < 1 || *a.layer > depth))
    throw Exit{kSelectorMiss, "spectrum: layer " + std::to_string(*a.layer) + " not in 1.." + std::to_string(depth)};
  if (a.head && (*a.head < 1 || *a.head > heads))
    throw Exit{kSelectorMiss, "spectrum: head " + std::to_string(*a.head) + " not in 1.." + std::to_string(heads)};
  const Matrix probe = load_probe(a.probe, m, ctx.globals().seed_or(0));
  const ForwardResult f = model_forward(m, probe, true);
  CsvWriter w({"layer", "head", "freq_index", "response"});
  for (std::size_t l = 1; l <= depth; ++l) {
    if (a.layer && *a.layer != l) continue;
    for (std::size_t h = 1; h <= heads; ++h) {
      if (a.head && *a.head != h) continue;
      const auto resp = attention_spectrum(f.trace[l - 1].maps[h - 1]);
      for (std::size_t i = 0; i < resp.size(); ++i) {
        w.field(std::uint64_t{l}).field(std::uint64_t{h}).field(std::uint64_t{i + 1}).field(resp[i]);
        w.end_row();
      }
    }
  }
  ctx.emit(ctx.globals().out, w.str());
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string variant;
  std::string out_dir;
  std::string resume;
};

inline void write_run_files(const fs::path& dir, const TrainResult& r, Variant v, std::uint64_t seed,
                            std::vector<std::string>& written) {
  write_text(dir / "metrics.csv", metrics_csv(r.records, v, seed));
  write_text(dir / "omega.csv", omega_csv(r.records));
  write_text(dir / "st.csv", st_csv(r.records));
  written.insert(written.end(), {(dir / "metrics.csv").string(), (dir / "omega.csv").string(),
                                 (dir / "st.csv").string()});
  if (!r.diverged) {
    save_checkpoint(dir / "checkpoint.json", r.model);
    written.push_back((dir / "checkpoint.json").string());
  }
}

inline int cmd_train(const TrainArgs& a, Context& ctx) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json(a.config));
  const bool all = a.variant == "all";
  // --seed replaces the seed list: one seed, or consecutive seeds for "all".
  if (ctx.globals().seed) {
    const std::size_t count = all ? std::max<std::size_t>(cfg.seeds.size(), 3) : 1;
    cfg.seeds.clear();
    for (std::size_t i = 0; i < count; ++i) cfg.seeds.push_back(*ctx.globals().seed + i);
  }
  const fs::path dir = !a.out_dir.empty() ? fs::path(a.out_dir) : fs::path(ctx.globals().out);
  if (dir.empty()) throw Exit{kUsage, "train: --out-dir is required"};
  const json config = to_json(cfg);
  ensure_dir(dir);

  std::optional<Variant> variant = cfg.model.variant;
  if (!a.variant.empty() && !all) {
    variant = parse_variant(a.variant);
    if (!variant) throw Exit{kUsage, "train: unknown variant '" + a.variant + "'"};
  }
  std::optional<ViTModel> start;
  if (!a.resume.empty()) {
    if (all) throw Exit{kUsage, "train: --resume needs a single variant"};
    start = load_checkpoint(a.resume);
  }

  auto manifest = [&](const std::vector<std::string>& outputs, std::string_view status) {
    json j = make_manifest(all ? "train --variant all" : "train --variant " + std::string(to_string(*variant)), config,
                           cfg.seeds.front(), outputs);
    j["status"] = status;
    if (start) j["resumed_from"] = a.resume;
    write_text(dir / "manifest.json", dump_json(j));
  };

  if (!all) {
    const std::uint64_t seed = cfg.seeds.front();
    manifest({(dir / "checkpoint.json").string(), (dir / "metrics.csv").string(),
              (dir / "omega.csv").string(), (dir / "st.csv").string()},
             "running");
    ctx.note("training " + std::string(to_string(*variant)) + " seed " + std::to_string(seed));
    const TrainResult r = train(cfg, *variant, seed, start ? &*start : nullptr);
    std::vector<std::string> written;
    write_run_files(dir, r, *variant, seed, written);
    manifest(written, r.diverged ? "diverged" : "complete");
    if (r.diverged) throw Exit{kDiverged, "train: loss became non-finite; partial metrics kept"};
    ctx.note("final accuracy " + format_double(r.records.back().accuracy));
    return kOk;
  }

  if (cfg.seeds.size() < 3) throw Exit{kUsage, "train --variant all: config needs >= 3 seeds"};
  std::vector<std::string> planned = {(dir / "comparison.json").string(), (dir / "metrics.csv").string()};
  manifest(planned, "running");
  std::vector<std::string> written;
  std::string combined;
  bool diverged = false;
  const ComparisonReport rep =
      compare_variants(cfg, cfg.seeds, [&](const TrainResult& r, Variant v, std::uint64_t seed) {
        const fs::path run = dir / "runs" / (std::string(to_string(v)) + "-" + std::to_string(seed));
        ensure_dir(run);
        write_run_files(run, r, v, seed, written);
        const std::string csv = metrics_csv(r.records, v, seed);
        combined += combined.empty() ? csv : csv.substr(csv.find('\n') + 1);
        diverged = diverged || r.diverged;
        ctx.note(std::string(to_string(v)) + " seed " + std::to_string(seed) + ": accuracy " +
                 format_double(r.records.back().accuracy));
      });
  write_text(dir / "metrics.csv", combined);
  write_text(dir / "comparison.json", dump_json(to_json(rep)));
  written.insert(written.begin(), planned.begin(), planned.end());
  manifest(written, diverged ? "diverged" : "complete");
  if (diverged) throw Exit{kDiverged, "train: a run diverged; partial metrics kept"};
  return kOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string checkpoint;
  std::string run_dir;
  std::vector<std::string> metrics = {"hc"};
  std::string mode = "attention_only";
  std::string probe;
};

inline int cmd_analyze(const AnalyzeArgs& a, Context& ctx) {
  static const std::vector<std::string> known = {"hc", "simattn", "simfeat", "boundcurve"};
  for (const auto& m : a.metrics)
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw Exit{kUsage, "analyze: unknown metric '" + m + "'"};
  const auto mode = parse_curve_mode(a.mode);
  if (!mode) throw Exit{kUsage, "analyze: unknown mode '" + a.mode + "'"};
  if (a.checkpoint.empty() == a.run_dir.empty())
    throw Exit{kUsage, "analyze: give exactly one of --checkpoint or --run-dir"};
  const fs::path out = ctx.globals().out;
  if (out.empty()) throw Exit{kUsage, "analyze: --out <dir> is required"};

  const fs::path ckpt = a.checkpoint.empty() ? fs::path(a.run_dir) / "checkpoint.json" : fs::path(a.checkpoint);
  const ViTModel m = load_checkpoint(ckpt);
  const std::uint64_t seed = ctx.globals().seed_or(0);
  const Matrix probe = load_probe(a.probe, m, seed);
  ensure_dir(out);

  const ForwardResult f = model_forward(m, probe, true);
  auto per_layer = [&](const std::string& name, const std::string& column, auto value) {
    CsvWriter w({"layer", column});
    for (std::size_t l = 0; l < f.trace.size(); ++l) {
      w.field(std::uint64_t{l + 1}).field(value(f.trace[l]));
      w.end_row();
    }
    write_text(out / (name + ".csv"), w.str());
  };
  for (const auto& metric : a.metrics) {
    if (metric == "hc") per_layer("hc", "hc_prop", [](const LayerTrace& t) { return t.hc_proportion; });
    if (metric == "simattn") per_layer("simattn", "m_attn", [](const LayerTrace& t) { return t.m_attn; });
    if (metric == "simfeat") per_layer("simfeat", "m_feat", [](const LayerTrace& t) { return t.m_feat; });
    if (metric == "boundcurve") {
      const auto curve = upper_bound_curve(m.blocks, probe + m.pos_encoding, m.config.activation, *mode);
      CsvWriter w({"layer", "measured_log_ratio", "bound_log_ratio", "mode", "seed"});
      for (const auto& r : curve) {
        w.field(std::uint64_t{r.step}).field(r.measured_log).field(*r.bound_log);
        w.field(to_string(*mode)).field(seed);
        w.end_row();
      }
      write_text(out / "boundcurve.csv", w.str());
    }
    ctx.note("wrote " + (out / (metric + ".csv")).string());
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point.

/// Parses args (without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Spectral diagnostics for attention oversmoothing", "antismooth"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", g.out, "Output file (verify, spectrum) or directory (train, analyze)");
  app.add_flag("--quiet", g.quiet, "Suppress progress messages");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the randomized bound and identity check suites");
  std::vector<std::string> suites(kSuiteNames.begin(), kSuiteNames.end());
  suites.push_back("all");
  verify->add_option("--suite,suite", va.suite, "Suite name")->check(CLI::IsMember(suites));
  verify->add_option("--trials", va.trials, "Random trials per suite (per size where applicable)");

  SpectrumArgs sa;
  auto* spectrum = app.add_subcommand("spectrum", "Export attention spectra of a checkpoint");
  spectrum->add_option("--checkpoint", sa.checkpoint, "Checkpoint JSON")->required();
  spectrum->add_option("--layer", sa.layer, "Layer, 1-based");
  spectrum->add_option("--head", sa.head, "Head, 1-based");
  spectrum->add_option("--probe", sa.probe, "Probe tokens (JSON nested list)");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train the toy classifier");
  trainc->add_option("--config", ta.config, "Training config JSON");
  trainc->add_option("--variant", ta.variant, "baseline, attnscale, featscale or all");
  trainc->add_option("--out-dir", ta.out_dir, "Output directory");
  trainc->add_option("--resume", ta.resume, "Start from this checkpoint");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Per-layer diagnostics and bound curves");
  analyze->add_option("--checkpoint", aa.checkpoint, "Checkpoint JSON");
  analyze->add_option("--run-dir", aa.run_dir, "Training output directory");
  analyze->add_option("--metrics", aa.metrics, "hc, simattn, simfeat, boundcurve")->delimiter(',');
  analyze->add_option("--mode", aa.mode, "attention_only, no_residual or full");
  analyze->add_option("--probe", aa.probe, "Probe tokens (JSON nested list)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::Success& e) {
    std::ostringstream o, x;
    app.exit(e, o, x);
    out << o.str();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, x;
    app.exit(e, o, x);
    err << x.str() << o.str();
    return kUsage;
  }
  if (*seed_opt) g.seed = seed;

  Context ctx(g, out, err);
  try {
    if (*verify) return cmd_verify(va, ctx);
    if (*spectrum) return cmd_spectrum(sa, ctx);
    if (*trainc) return cmd_train(ta, ctx);
    return cmd_analyze(aa, ctx);
  } catch (const Exit& e) {
    err << e.message << '\n';
    return e.code;
  } catch (const io_error& e) {
    err << e.what() << '\n';
    return kIoError;
  } catch (const format_error& e) {
    err << e.what() << '\n';
    return kIoError;
  } catch (const undefined_input_error& e) {
    err << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    // parameter_error / shape_error: inputs that parse but do not fit together.
    err << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace antismooth::cli
