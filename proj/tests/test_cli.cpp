/*
 * Copyright 2026 The chanprune Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chanprune/chanprune.hpp"
#include "chanprune/cli/app.hpp"

namespace fs = std::filesystem;
using namespace chanprune;
using namespace chanprune::cli;

namespace {

const char* const kTinyConfig = R"(
[model]
arch = plainnet
widths = 4,4,6,6
pool_every = 2

[data]
classes = 4
per_class = 24
image_size = 8
channels = 3
noise = 0.5
val_fraction = 0.25

[train]
epochs = 2
batch_size = 16
lr = 0.01

[probe]
batch_size = 16
batches = 3

[plan]
budget = 0.7
r_max = 0.9

[shapley]
exact_limit = 6
permutations_per_channel = 4
probe_batches = 1

[schedule]
kind = iterative_static
criterion = shapley
finetune_epochs = 1
retrain_epochs = 1
lr = 0.005

[seeds]
model = 3
data = 5
shapley = 9
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

int invoke(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "chanprune");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// One trained tiny model shared by the pipeline tests.
class CliPipeline : public ::testing::Test {
 protected:
  static fs::path root;
  static fs::path config;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "chanprune_test_cli";
    fs::remove_all(root);
    config = root / "tiny.ini";
    write_text(config, kTinyConfig);
    ASSERT_EQ(invoke({"train", "--config", config.string(), "--out", (root / "base").string()}), 0);
  }

  static std::string ckpt() { return (root / "base" / "model.ckpt").string(); }
  static std::string dir(const std::string& name) { return (root / name).string(); }
};

fs::path CliPipeline::root;
fs::path CliPipeline::config;

}  // namespace

TEST(CliConfig, DefaultsAndOverrides) {
  std::istringstream in("[model]\nwidths = 5, 6\n[train]\nlr = 0.1\ndecay_epochs = 3,4\n[schedule]\nkind = progressive\n");
  const RunConfig c = parse_config(in);
  EXPECT_EQ(c.model.widths, (std::vector<int>{5, 6}));
  EXPECT_EQ(c.model.arch, "plainnet");
  EXPECT_DOUBLE_EQ(c.train.lr.initial, 0.1);
  EXPECT_EQ(c.train.lr.decay_epochs, (std::vector<int>{3, 4}));
  EXPECT_EQ(c.schedule.config.schedule, ScheduleKind::Progressive);
  // Schedule training inherits the train section unless overridden.
  EXPECT_DOUBLE_EQ(c.schedule.config.lr.initial, 0.1);
  EXPECT_EQ(c.seeds.data, 7u);
}

TEST(CliConfig, RejectsUnknownAndMalformedKeys) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  EXPECT_THROW(parse("[model]\nwidht = 4\n"), ConfigError);
  EXPECT_THROW(parse("[bogus]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("loose = 1\n"), ConfigError);
  EXPECT_THROW(parse("[train]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(parse("[model]\nwidths = 4,x\n"), ConfigError);
  EXPECT_THROW(parse("[schedule]\ncriterion = entropy\n"), ConfigError);
  EXPECT_THROW(parse("[plan]\nkind = bytes\n"), ConfigError);
}

TEST(CliConfig, ValidateRejectsOutOfRangeValues) {
  RunConfig c;
  EXPECT_NO_THROW(validate(c));
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(validate(c), ConfigError);
  };
  bad([](RunConfig& c) { c.plan.budget.kept_fraction = 0.0; });
  bad([](RunConfig& c) { c.plan.r_max = 1.0; });
  bad([](RunConfig& c) { c.analysis.l = 20.0; });
  bad([](RunConfig& c) { c.data.val_fraction = 1.0; });
  bad([](RunConfig& c) { c.shapley.probe_batches = 9; });
  bad([](RunConfig& c) { c.model.arch = "vgg"; });
  bad([](RunConfig& c) {
    c.data.source = "raw";
    c.data.path = "/nonexistent/file.bin";
  });
}

TEST(CliConfig, RawPathResolvesAgainstConfigDirectory) {
  const fs::path dir = fs::temp_directory_path() / "chanprune_test_rawcfg";
  fs::remove_all(dir);
  write_raw_images(synth_blobs(3, 4, 6, 0.5, 1, 2), dir / "data" / "set.bin");
  write_text(dir / "run.ini", "[data]\nsource = raw\npath = data/set.bin\n");
  const RunConfig c = load_config(dir / "run.ini");
  EXPECT_EQ(c.data.path, dir / "data" / "set.bin");
  EXPECT_NO_THROW(validate(c));
  const TrainValidationSplit split = load_data(c);
  EXPECT_EQ(split.train.class_count, 3);
  EXPECT_EQ(split.train.size() + split.validation.size(), 12u);
}

TEST(CliArtifacts, NumbersRoundTripExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678901234567, 0.0}) {
    EXPECT_EQ(parse_cell<double>(format_number(v)), v);
  }
  EXPECT_THROW(parse_cell<double>("1.5x"), FormatError);
}

TEST_F(CliPipeline, TrainWritesArtifactsWithSeedLine) {
  const fs::path base = root / "base";
  for (const char* f : {"model.ckpt", "training.csv", "train_summary.json"}) EXPECT_TRUE(fs::exists(base / f)) << f;
  const std::string csv = slurp(base / "training.csv");
  EXPECT_EQ(csv.rfind("# seeds model=3 data=5 shapley=9", 0), 0u) << csv.substr(0, 60);
  EXPECT_EQ(read_csv(base / "training.csv").rows.size(), 2u);
}

TEST_F(CliPipeline, FullPipelineSucceeds) {
  const std::string cfg = config.string();
  ASSERT_EQ(invoke({"analyze", "--config", cfg, "--checkpoint", ckpt(), "--out", dir("full")}), 0);
  ASSERT_EQ(invoke({"plan", "--config", cfg, "--checkpoint", ckpt(), "--stats", dir("full/layers.csv"), "--out",
                 dir("full")}),
            0);
  ASSERT_EQ(invoke({"shapley", "--config", cfg, "--checkpoint", ckpt(), "--out", dir("full")}), 0);
  ASSERT_EQ(invoke({"prune", "--config", cfg, "--checkpoint", ckpt(), "--plan", dir("full/plan.json"), "--scores",
                 dir("full/scores.csv"), "--out", dir("full")}),
            0);
  for (const char* f : {"layers.csv", "stability.csv", "plan.json", "scores.csv", "shapley_efficiency.csv",
                        "pruned.ckpt", "trace.jsonl", "summary.json"}) {
    EXPECT_TRUE(fs::exists(root / "full" / f)) << f;
  }
  // Efficiency holds exactly for every scored layer.
  const CsvTable eff = read_csv(root / "full" / "shapley_efficiency.csv");
  for (const auto& row : eff.rows) EXPECT_EQ(row[eff.column("pass")], "yes");

  // The pruned checkpoint matches the plan.
  const ModelGraph pruned = load_checkpoint(root / "full" / "pruned.ckpt");
  const PrunePlan plan = plan_from_json(read_json(root / "full" / "plan.json"));
  const ModelGraph base = load_checkpoint(ckpt());
  for (const LayerAllocation& a : plan.layers) {
    EXPECT_EQ(out_channels(pruned, a.layer_index), out_channels(base, a.layer_index) - a.prune);
  }
  ASSERT_EQ(invoke({"report", "--run-dir", dir("full")}), 0);
  EXPECT_EQ(read_csv(root / "full" / "report.csv").rows.size(), 1u);
}

TEST_F(CliPipeline, AnalyzeMatchesLibraryBitForBit) {
  ASSERT_EQ(invoke({"analyze", "--config", config.string(), "--checkpoint", ckpt(), "--out", dir("parity")}), 0);
  const RunConfig c = load_config(config);
  const TrainValidationSplit data = load_data(c);
  const Analysis a = analyze_model(load_checkpoint(ckpt()), probe_batches(c, data.train), c.analysis);
  const LayerStatsFile f = read_layer_stats(root / "parity" / "layers.csv");
  ASSERT_EQ(f.stats.size(), a.stats.size());
  for (std::size_t i = 0; i < a.stats.size(); ++i) {
    EXPECT_EQ(f.stats[i].layer_index, a.stats[i].layer_index);
    EXPECT_EQ(f.stats[i].avg_rank, a.stats[i].avg_rank);
    EXPECT_EQ(f.stats[i].avg_entropy, a.stats[i].avg_entropy);
    EXPECT_EQ(f.stats[i].fusion, a.stats[i].fusion);
    EXPECT_EQ(f.channels[i], a.channels[i]);
  }
}

TEST_F(CliPipeline, RerunsAreByteIdentical) {
  for (const char* name : {"rerun_a", "rerun_b"}) {
    ASSERT_EQ(invoke({"analyze", "--config", config.string(), "--checkpoint", ckpt(), "--out", dir(name)}), 0);
    ASSERT_EQ(invoke({"shapley", "--config", config.string(), "--checkpoint", ckpt(), "--out", dir(name)}), 0);
    ASSERT_EQ(invoke({"train", "--config", config.string(), "--out", dir(name)}), 0);
  }
  for (const char* f : {"layers.csv", "stability.csv", "scores.csv", "model.ckpt", "training.csv"}) {
    EXPECT_EQ(slurp(root / "rerun_a" / f), slurp(root / "rerun_b" / f)) << f;
  }
  EXPECT_EQ(slurp(root / "rerun_a" / "model.ckpt"), slurp(root / "base" / "model.ckpt"));
}

TEST_F(CliPipeline, SeedFlagsOverrideConfig) {
  ASSERT_EQ(invoke({"shapley", "--config", config.string(), "--checkpoint", ckpt(), "--seed-shapley", "123", "--out",
                 dir("seeded")}),
            0);
  const std::string csv = slurp(root / "seeded" / "scores.csv");
  EXPECT_EQ(csv.rfind("# seeds model=3 data=5 shapley=123", 0), 0u);
}

TEST_F(CliPipeline, ProgressiveNeedsNoPlan) {
  const fs::path cfg = root / "progressive.ini";
  std::string text = kTinyConfig;
  text.replace(text.find("kind = iterative_static"), 23, "kind = progressive");
  text.replace(text.find("criterion = shapley"), 19, "criterion = l2\ntarget = 0.8\nrecompute_every = 2");
  write_text(cfg, text);
  ASSERT_EQ(invoke({"prune", "--config", cfg.string(), "--checkpoint", ckpt(), "--out", dir("prog")}), 0);
  const Json summary = read_json(root / "prog" / "summary.json");
  EXPECT_EQ(summary.at("schedule"), "progressive");
  EXPECT_EQ(summary.at("target").at("kind"), "channels");
  EXPECT_GT(summary.at("params_drop_pct").get<double>(), 0.0);
}

TEST_F(CliPipeline, ExitCodesFollowTheContract) {
  const std::string cfg = config.string();
  std::string err;
  EXPECT_EQ(invoke({}), kExitInput);
  EXPECT_EQ(invoke({"frobnicate"}), kExitInput);
  EXPECT_EQ(invoke({"train"}, &err), kExitInput);
  EXPECT_NE(err.find("--config"), std::string::npos);
  EXPECT_EQ(invoke({"analyze", "--config", cfg, "--checkpoint", dir("missing.ckpt"), "--out", dir("x")}, &err),
            kExitInput);
  EXPECT_NE(err.find("not found"), std::string::npos);

  write_text(root / "bad.ini", "[model]\nwidth = 3\n");
  EXPECT_EQ(invoke({"train", "--config", (root / "bad.ini").string()}, &err), kExitInput);
  EXPECT_NE(err.find("model.width"), std::string::npos);

  write_text(root / "garbage.ckpt", "not a checkpoint");
  EXPECT_EQ(invoke({"analyze", "--config", cfg, "--checkpoint", dir("garbage.ckpt"), "--out", dir("x")}), kExitInput);

  // A static Shapley schedule without scores is an input error.
  ASSERT_EQ(invoke({"analyze", "--config", cfg, "--checkpoint", ckpt(), "--out", dir("codes")}), 0);
  ASSERT_EQ(invoke({"plan", "--config", cfg, "--checkpoint", ckpt(), "--stats", dir("codes/layers.csv"), "--out",
                 dir("codes")}),
            0);
  EXPECT_EQ(invoke({"prune", "--config", cfg, "--checkpoint", ckpt(), "--plan", dir("codes/plan.json"), "--out",
                 dir("codes")}),
            kExitInput);

  // Infeasible budget: r_max caps each layer well above the requested fraction.
  std::string text = kTinyConfig;
  text.replace(text.find("budget = 0.7\nr_max = 0.9"), 24, "budget = 0.1\nr_max = 0.5");
  write_text(root / "tight.ini", text);
  EXPECT_EQ(invoke({"plan", "--config", (root / "tight.ini").string(), "--checkpoint", ckpt(), "--stats",
                 dir("codes/layers.csv"), "--out", dir("codes")},
                &err),
            kExitInfeasible);
  EXPECT_NE(err.find("tightest feasible"), std::string::npos);

  fs::create_directories(root / "empty_runs");
  EXPECT_EQ(invoke({"report", "--run-dir", dir("empty_runs")}), kExitInfeasible);
  EXPECT_EQ(invoke({"report", "--run-dir", dir("no_such_dir")}), kExitInput);
}

TEST(CliReport, SortsByFlopsDropDescending) {
  const fs::path dir = fs::temp_directory_path() / "chanprune_test_report";
  fs::remove_all(dir);
  const std::vector<std::pair<std::string, double>> runs{{"b", 10.0}, {"a", 40.0}, {"c", 25.0}, {"d", 40.0}};
  for (const auto& [name, drop] : runs) {
    Json j;
    j["schedule"] = "one_shot";
    j["criterion"] = "l2";
    j["pruned_acc"] = 90.0;
    j["acc_drop"] = 1.0;
    j["flops_drop_pct"] = drop;
    j["params_drop_pct"] = drop / 2;
    fs::create_directories(dir / name);
    write_json(dir / name / "summary.json", j);
  }
  fs::create_directories(dir / "unfinished");
  ASSERT_EQ(invoke({"report", "--run-dir", dir.string()}), 0);
  const CsvTable t = read_csv(dir / "report.csv");
  std::vector<std::string> order;
  for (const auto& r : t.rows) order.push_back(r[t.column("run")]);
  EXPECT_EQ(order, (std::vector<std::string>{"a", "d", "c", "b"}));

  write_text(dir / "broken" / "summary.json", "{\"schedule\": 3}");
  EXPECT_EQ(invoke({"report", "--run-dir", dir.string()}), kExitInput);
}

TEST(CliBinary, ExecutableReportsExitCodes) {
  const std::string bin = CHANPRUNE_CLI_PATH;
  const auto run = [&](const std::string& args) {
    const int status = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("train --config /nonexistent.ini"), kExitInput);
  const fs::path empty = fs::temp_directory_path() / "chanprune_test_bin_empty";
  fs::create_directories(empty);
  EXPECT_EQ(run("report --run-dir " + empty.string()), kExitInfeasible);
}
