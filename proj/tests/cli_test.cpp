// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#include <cli_app.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "antismooth/io.hpp"
#include "antismooth/vit.hpp"

namespace antismooth {
namespace {

namespace fs = std::filesystem;
using cli::run_cli;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("antismooth_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const std::string& name, const json& overrides) {
    json c = {{"epochs", 2},
              {"lr", 0.01},
              {"batch_size", 8},
              {"train_samples", 32},
              {"test_samples", 16},
              {"probe_samples", 4},
              {"model", {{"depth", 2}, {"tokens", 8}, {"dim", 8}, {"d_q", 4}, {"d_head", 4}, {"d_ff", 16}}},
              {"task", {{"n_tokens", 8}, {"dim", 8}, {"freq_signal", 2}}}};
    c.merge_patch(overrides);
    write_text(path(name), dump_json(c));
    return path(name);
  }

  fs::path dir_;
};

ViTConfig tiny_model(std::size_t depth) {
  ViTConfig c;
  c.depth = depth;
  c.tokens = 8;
  c.dim = 8;
  c.d_q = 4;
  c.d_head = 4;
  c.d_ff = 16;
  c.seed = 3;
  return c;
}

// ---------------------------------------------------------------------------
// Global parsing.

TEST_F(CliTest, NoSubcommandIsUsage) { EXPECT_EQ(run({}).code, 64); }

TEST_F(CliTest, UnknownFlagIsUsage) { EXPECT_EQ(run({"verify", "--bogus"}).code, 64); }

TEST_F(CliTest, VersionPrints) {
  const Outcome o = run({"--version"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find(std::string(kToolVersion)), std::string::npos);
}

// ---------------------------------------------------------------------------
// verify

TEST_F(CliTest, VerifyLemma5Passes) {
  const Outcome o = run({"--quiet", "--out", path("r.json"), "verify", "--suite", "lemma5", "--trials", "10"});
  EXPECT_EQ(o.code, 0) << o.err;
  const json r = read_json(path("r.json"));
  EXPECT_EQ(r["suite"], "lemma5");
  EXPECT_EQ(r["trials"], 10);
  EXPECT_TRUE(r["violations"].empty());
  EXPECT_GE(r["worst_margin"].get<double>(), 0.0);
}

TEST_F(CliTest, VerifyPositionalSuiteToStdout) {
  const Outcome o = run({"--quiet", "verify", "lemma4", "--trials", "5"});
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(json::parse(o.out)["suite"], "lemma4");
  EXPECT_TRUE(o.err.empty());
}

TEST_F(CliTest, VerifyZeroTrialsIsUsage) { EXPECT_EQ(run({"verify", "--trials", "0"}).code, 64); }

TEST_F(CliTest, VerifyUnknownSuiteIsUsage) { EXPECT_EQ(run({"verify", "--suite", "thm9"}).code, 64); }

TEST_F(CliTest, VerifyAllListsEverySuite) {
  const Outcome o = run({"--seed", "42", "--quiet", "--out", path("all.json"), "verify", "--trials", "10"});
  EXPECT_EQ(o.code, 0) << o.err;
  const json r = read_json(path("all.json"));
  ASSERT_EQ(r["suites"].size(), 8u);
  std::vector<std::string> names;
  for (const auto& s : r["suites"]) {
    names.push_back(s["suite"]);
    EXPECT_TRUE(s["violations"].empty()) << s["suite"];
  }
  EXPECT_EQ(names, std::vector<std::string>(kSuiteNames.begin(), kSuiteNames.end()));
  EXPECT_EQ(r["seed"], 42);
}

TEST_F(CliTest, VerifyUnwritableOutIsIoError) {
  EXPECT_EQ(run({"--out", path("missing/dir/r.json"), "verify", "lemma5", "--trials", "2"}).code, 2);
}

TEST_F(CliTest, VerifyProgressGoesToStderr) {
  const Outcome o = run({"verify", "lemma5", "--trials", "2"});
  EXPECT_NE(o.err.find("lemma5: pass"), std::string::npos);
}

// ---------------------------------------------------------------------------
// spectrum

TEST_F(CliTest, SpectrumOfUniformMapIsFirstBasisVector) {
  ViTModel m = init_model(tiny_model(1));
  for (auto& h : m.blocks[0].heads) {
    h.w_q = Matrix(h.w_q.rows(), h.w_q.cols());
    h.w_k = Matrix(h.w_k.rows(), h.w_k.cols());
  }
  save_checkpoint(path("u.json"), m);
  const Outcome o = run({"spectrum", "--checkpoint", path("u.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = csv_rows(o.out);
  ASSERT_EQ(rows.size(), 1 + 2 * 8u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"layer", "head", "freq_index", "response"}));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(rows[r][0], "1");
    EXPECT_EQ(rows[r][1], std::to_string((r - 1) / 8 + 1));
    EXPECT_EQ(rows[r][2], std::to_string((r - 1) % 8 + 1));
    const double want = rows[r][2] == "1" ? 1.0 : 0.0;
    EXPECT_NEAR(std::stod(rows[r][3]), want, 1e-10) << "row " << r;
  }
}

TEST_F(CliTest, SpectrumSelectorGivesOneMap) {
  save_checkpoint(path("m.json"), init_model(tiny_model(4)));
  const Outcome o = run({"spectrum", "--checkpoint", path("m.json"), "--layer", "4", "--head", "1"});
  ASSERT_EQ(o.code, 0);
  const auto rows = csv_rows(o.out);
  ASSERT_EQ(rows.size(), 1 + 8u);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(rows[r][0], "4");
    EXPECT_EQ(rows[r][1], "1");
  }
  // Row-stochastic maps have a DC response of at least one.
  EXPECT_GE(std::stod(rows[1][3]), 1.0 - 1e-12);
}

TEST_F(CliTest, SpectrumSelectorMisses) {
  save_checkpoint(path("m.json"), init_model(tiny_model(4)));
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("m.json"), "--layer", "5"}).code, 65);
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("m.json"), "--layer", "0"}).code, 65);
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("m.json"), "--head", "3"}).code, 65);
}

TEST_F(CliTest, SpectrumCheckpointErrors) {
  EXPECT_EQ(run({"spectrum"}).code, 64);
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("nope.json")}).code, 2);
  write_text(path("bad.json"), "{\"config\": 1}");
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("bad.json")}).code, 2);
}

TEST_F(CliTest, SpectrumIsDeterministicAndSeeded) {
  save_checkpoint(path("m.json"), init_model(tiny_model(2)));
  const Outcome a = run({"--seed", "5", "spectrum", "--checkpoint", path("m.json")});
  const Outcome b = run({"--seed", "5", "spectrum", "--checkpoint", path("m.json")});
  const Outcome c = run({"--seed", "6", "spectrum", "--checkpoint", path("m.json")});
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
}

TEST_F(CliTest, SpectrumProbeFile) {
  const ViTModel m = init_model(tiny_model(1));
  save_checkpoint(path("m.json"), m);
  Rng r = Rng::keyed(9, "probe-file");
  write_text(path("p.json"), dump_json(to_json(Matrix::random_normal(8, 8, r))));
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("m.json"), "--probe", path("p.json")}).code, 0);
  write_text(path("q.json"), dump_json(to_json(Matrix(3, 8))));
  EXPECT_EQ(run({"spectrum", "--checkpoint", path("m.json"), "--probe", path("q.json")}).code, 64);
}

// ---------------------------------------------------------------------------
// train

TEST_F(CliTest, TrainWritesRunFiles) {
  const std::string cfg = write_config("c.json", json::object());
  const Outcome o = run({"--quiet", "train", "--config", cfg, "--variant", "attnscale", "--out-dir", path("run")});
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"manifest.json", "checkpoint.json", "metrics.csv", "omega.csv", "st.csv"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const json man = read_json(dir_ / "run" / "manifest.json");
  EXPECT_EQ(man["status"], "complete");
  EXPECT_EQ(man["command"], "train --variant attnscale");
  EXPECT_EQ(man["config_hash"], config_hash(man["config"]));
  EXPECT_EQ(man["tool_version"], std::string(kToolVersion));
  EXPECT_EQ(man["outputs"].size(), 4u);
  const auto rows = csv_rows(read_text(dir_ / "run" / "metrics.csv"));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"epoch", "variant", "seed", "loss", "acc", "layer", "hc_prop",
                                                "m_attn", "m_feat"}));
  EXPECT_EQ(rows[1][1], "attnscale");
  EXPECT_EQ(load_checkpoint(dir_ / "run" / "checkpoint.json").config.variant, Variant::attnscale);
}

TEST_F(CliTest, TrainRerunIsByteIdentical) {
  const std::string cfg = write_config("c.json", json::object());
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--variant", "featscale", "--out-dir", path("a")}).code, 0);
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--variant", "featscale", "--out-dir", path("b")}).code, 0);
  for (const char* f : {"metrics.csv", "omega.csv", "st.csv", "checkpoint.json"})
    EXPECT_EQ(read_text(dir_ / "a" / f), read_text(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, TrainSeedFlagChangesRun) {
  const std::string cfg = write_config("c.json", json::object());
  ASSERT_EQ(run({"--quiet", "--seed", "1", "train", "--config", cfg, "--out-dir", path("a")}).code, 0);
  ASSERT_EQ(run({"--quiet", "--seed", "2", "train", "--config", cfg, "--out-dir", path("b")}).code, 0);
  EXPECT_NE(read_text(dir_ / "a" / "metrics.csv"), read_text(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(read_json(dir_ / "a" / "manifest.json")["seed"], 1);
}

TEST_F(CliTest, TrainZeroLearningRateKeepsWeights) {
  const std::string cfg = write_config("c.json", {{"lr", 0.0}, {"seeds", {7}}});
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--out-dir", path("r")}).code, 0);
  const ViTModel trained = load_checkpoint(dir_ / "r" / "checkpoint.json");
  TrainConfig tc = train_config_from_json(read_json(cfg));
  const auto init = train(tc, Variant::baseline, 7);
  EXPECT_EQ(to_json(trained), to_json(init.model));
}

TEST_F(CliTest, TrainDivergenceExitsThreeAndKeepsMetrics) {
  const std::string cfg = write_config("c.json", {{"lr", 1e6}});
  const Outcome o = run({"--quiet", "train", "--config", cfg, "--out-dir", path("d")});
  EXPECT_EQ(o.code, 3);
  EXPECT_TRUE(fs::exists(dir_ / "d" / "metrics.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "d" / "checkpoint.json"));
  EXPECT_EQ(read_json(dir_ / "d" / "manifest.json")["status"], "diverged");
}

TEST_F(CliTest, TrainAllVariants) {
  const std::string cfg = write_config("c.json", {{"epochs", 1}, {"seeds", {0, 1, 2}}});
  const Outcome o = run({"--quiet", "train", "--config", cfg, "--variant", "all", "--out-dir", path("all")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json rep = read_json(dir_ / "all" / "comparison.json");
  EXPECT_TRUE(rep.is_object());
  EXPECT_TRUE(fs::exists(dir_ / "all" / "runs" / "attnscale-2" / "omega.csv"));
  // Header plus 3 variants x 3 seeds x 2 records x 2 layers.
  EXPECT_EQ(csv_rows(read_text(dir_ / "all" / "metrics.csv")).size(), 1 + 3 * 3 * 2 * 2u);
}

TEST_F(CliTest, TrainUsageErrors) {
  const std::string cfg = write_config("c.json", json::object());
  EXPECT_EQ(run({"train", "--config", cfg}).code, 64);
  EXPECT_EQ(run({"train", "--config", cfg, "--variant", "fancy", "--out-dir", path("x")}).code, 64);
  EXPECT_EQ(run({"train", "--config", cfg, "--variant", "all", "--out-dir", path("y")}).code, 64);
  save_checkpoint(path("m.json"), init_model(tiny_model(2)));
  EXPECT_EQ(run({"--seed", "0", "train", "--config", cfg, "--variant", "all", "--resume", path("m.json"),
                 "--out-dir", path("z")})
                .code,
            64);
}

TEST_F(CliTest, TrainConfigErrorsAreIoErrors) {
  EXPECT_EQ(run({"train", "--config", path("none.json"), "--out-dir", path("x")}).code, 2);
  write_text(path("bad.json"), "{\"epochs\": \"ten\"}");
  EXPECT_EQ(run({"train", "--config", path("bad.json"), "--out-dir", path("x")}).code, 2);
  write_text(path("trunc.json"), "{\"epochs\": ");
  EXPECT_EQ(run({"train", "--config", path("trunc.json"), "--out-dir", path("x")}).code, 2);
}

TEST_F(CliTest, TrainResumeContinuesFromCheckpoint) {
  const std::string cfg = write_config("c.json", json::object());
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--out-dir", path("a")}).code, 0);
  const std::string ck = (dir_ / "a" / "checkpoint.json").string();
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--resume", ck, "--out-dir", path("b")}).code, 0);
  const json man = read_json(dir_ / "b" / "manifest.json");
  EXPECT_EQ(man["resumed_from"], ck);
  // Epoch 0 of the resumed run sees the model the first run ended with.
  const auto first = csv_rows(read_text(dir_ / "a" / "metrics.csv"));
  const auto second = csv_rows(read_text(dir_ / "b" / "metrics.csv"));
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto& end = first[first.size() - 2 + layer];
    const auto& begin = second[1 + layer];
    EXPECT_EQ(begin[0], "0");
    for (std::size_t c = 4; c < 9; ++c) EXPECT_NEAR(std::stod(begin[c]), std::stod(end[c]), 1e-12) << c;
  }
}

TEST_F(CliTest, TrainResumeShapeMismatchIsUsage) {
  const std::string cfg = write_config("c.json", json::object());
  save_checkpoint(path("m.json"), init_model(tiny_model(3)));
  EXPECT_EQ(run({"--quiet", "train", "--config", cfg, "--resume", path("m.json"), "--out-dir", path("r")}).code, 64);
}

// ---------------------------------------------------------------------------
// analyze

TEST_F(CliTest, AnalyzeHcOfConstantTokensIsZero) {
  ViTModel m = init_model(tiny_model(3));
  m.pos_encoding = Matrix(8, 8);
  save_checkpoint(path("m.json"), m);
  Matrix probe(8, 8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) probe(i, j) = 0.25 * static_cast<double>(j) - 0.5;
  write_text(path("p.json"), dump_json(to_json(probe)));
  const Outcome o = run({"--quiet", "--out", path("an"), "analyze", "--checkpoint", path("m.json"), "--probe",
                         path("p.json"), "--metrics", "hc"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = csv_rows(read_text(dir_ / "an" / "hc.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"layer", "hc_prop"}));
  for (std::size_t r = 1; r < rows.size(); ++r) EXPECT_NEAR(std::stod(rows[r][1]), 0.0, 1e-12);
}

TEST_F(CliTest, AnalyzeBoundCurveDominates) {
  save_checkpoint(path("m.json"), init_model(tiny_model(6)));
  for (const char* mode : {"attention_only", "no_residual", "full"}) {
    const fs::path out = dir_ / mode;
    const Outcome o = run({"--quiet", "--seed", "4", "--out", out.string(), "analyze", "--checkpoint",
                           path("m.json"), "--metrics", "boundcurve", "--mode", mode});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = csv_rows(read_text(out / "boundcurve.csv"));
    ASSERT_EQ(rows.size(), 1 + 6u) << mode;
    EXPECT_EQ(rows[0], (std::vector<std::string>{"layer", "measured_log_ratio", "bound_log_ratio", "mode", "seed"}));
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const double measured = std::exp(std::stod(rows[r][1]));
      const double bound = std::exp(std::stod(rows[r][2]));
      EXPECT_LE(measured, bound + 1e-9) << mode << " row " << r;
      EXPECT_EQ(rows[r][3], mode);
      EXPECT_EQ(rows[r][4], "4");
    }
  }
}

TEST_F(CliTest, AnalyzeAllMetricsFromRunDir) {
  const std::string cfg = write_config("c.json", {{"epochs", 1}});
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--variant", "attnscale", "--out-dir", path("run")}).code, 0);
  const Outcome o = run({"--quiet", "--out", path("an"), "analyze", "--run-dir", path("run"), "--metrics",
                         "hc,simattn,simfeat,boundcurve"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(csv_rows(read_text(dir_ / "an" / "simattn.csv"))[0], (std::vector<std::string>{"layer", "m_attn"}));
  EXPECT_EQ(csv_rows(read_text(dir_ / "an" / "simfeat.csv"))[0], (std::vector<std::string>{"layer", "m_feat"}));
  EXPECT_EQ(csv_rows(read_text(dir_ / "an" / "hc.csv")).size(), 3u);
  EXPECT_TRUE(fs::exists(dir_ / "an" / "boundcurve.csv"));
  // Rerun is byte-identical.
  ASSERT_EQ(run({"--quiet", "--out", path("an2"), "analyze", "--run-dir", path("run"), "--metrics",
                 "hc,simattn,simfeat,boundcurve"})
                .code,
            0);
  for (const char* f : {"hc.csv", "simattn.csv", "simfeat.csv", "boundcurve.csv"})
    EXPECT_EQ(read_text(dir_ / "an" / f), read_text(dir_ / "an2" / f)) << f;
}

TEST_F(CliTest, AnalyzeUsageErrors) {
  save_checkpoint(path("m.json"), init_model(tiny_model(2)));
  const std::string ck = path("m.json");
  EXPECT_EQ(run({"--out", path("a"), "analyze", "--checkpoint", ck, "--metrics", "hc,entropy"}).code, 64);
  EXPECT_EQ(run({"--out", path("a"), "analyze", "--checkpoint", ck, "--mode", "sideways"}).code, 64);
  EXPECT_EQ(run({"--out", path("a"), "analyze"}).code, 64);
  EXPECT_EQ(run({"--out", path("a"), "analyze", "--checkpoint", ck, "--run-dir", path("r")}).code, 64);
  EXPECT_EQ(run({"analyze", "--checkpoint", ck}).code, 64);
  EXPECT_EQ(run({"--out", path("a"), "analyze", "--run-dir", path("missing")}).code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "a" / "hc.csv"));
}

TEST_F(CliTest, SpectrumSchemaMatchesAcrossVariants) {
  const std::string cfg = write_config("c.json", {{"epochs", 1}});
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--variant", "baseline", "--out-dir", path("b")}).code, 0);
  ASSERT_EQ(run({"--quiet", "train", "--config", cfg, "--variant", "attnscale", "--out-dir", path("a")}).code, 0);
  const auto sb = csv_rows(run({"spectrum", "--checkpoint", path("b/checkpoint.json")}).out);
  const auto sa = csv_rows(run({"spectrum", "--checkpoint", path("a/checkpoint.json")}).out);
  ASSERT_EQ(sb.size(), sa.size());
  for (std::size_t r = 0; r < sb.size(); ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(sb[r][c], sa[r][c]);
}

}  // namespace
}  // namespace antismooth
