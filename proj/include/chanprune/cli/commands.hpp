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

#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "chanprune/cli/artifacts.hpp"
#include "chanprune/cli/config.hpp"
#include "chanprune/data/dataset.hpp"
#include "chanprune/info/allocation.hpp"
#include "chanprune/info/concentration.hpp"
#include "chanprune/model/builders.hpp"
#include "chanprune/model/checkpoint.hpp"
#include "chanprune/prune/criteria.hpp"
#include "chanprune/prune/schedules.hpp"
#include "chanprune/prune/trace_io.hpp"
#include "chanprune/prune/train.hpp"
#include "chanprune/shapley/shapley.hpp"

namespace chanprune::cli {

// Streams derived from the data seed.
enum : std::uint64_t { kSplitStream = 1, kProbeStream = 2, kTrainStream = 3, kScheduleStream = 4 };

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// ---- pipeline pieces shared by the commands and by library callers ---------

inline TrainValidationSplit load_data(const RunConfig& c) {
  LabeledImageSet set = c.data.source == "raw"
                            ? read_raw_images(c.data.path)
                            : synth_blobs(c.data.classes, c.data.per_class, c.data.image_size,
                                          c.data.noise, c.seeds.data, c.data.channels);
  return split_train_validation(set, c.data.val_fraction, derive(c.seeds.data, kSplitStream));
}

inline ModelGraph build_model(const RunConfig& c, ImageShape input, int classes) {
  if (c.model.arch == "resnet_mini") {
    return build_resnet_mini(c.model.widths, c.model.blocks, classes, input, c.seeds.model);
  }
  return build_plainnet(c.model.widths, classes, input, c.seeds.model, c.model.pool_every);
}

inline TrainOptions train_options(const RunConfig& c) {
  TrainOptions t;
  t.epochs = c.train.epochs;
  t.batch_size = c.train.batch_size;
  t.lr = c.train.lr;
  t.momentum = c.train.momentum;
  t.weight_decay = c.train.weight_decay;
  t.seed = derive(c.seeds.data, kTrainStream);
  return t;
}

inline std::vector<ProbeBatch> probe_batches(const RunConfig& c, const LabeledImageSet& train) {
  return sample_probe_batches(train, c.probe.batch_size, c.probe.batches, derive(c.seeds.data, kProbeStream));
}

// The Shapley probe: the first `shapley.probe_batches` analysis batches (all when 0).
inline ProbeBatch shapley_probe(const RunConfig& c, const std::vector<ProbeBatch>& batches) {
  const std::size_t k = c.shapley.probe_batches == 0 ? batches.size() : c.shapley.probe_batches;
  return concat_batches(std::span(batches).first(k));
}

inline ShapleyOptions shapley_options(const RunConfig& c) {
  return {c.shapley.exact_limit, c.shapley.permutations_per_channel, c.seeds.shapley};
}

struct Analysis {
  std::vector<int> layers;
  std::vector<int> channels;
  std::vector<LayerInfoStats> stats;
  StabilityReport stability;
};

inline Analysis analyze_model(const ModelGraph& model, const std::vector<ProbeBatch>& batches,
                              const AnalysisSpec& spec) {
  Analysis a;
  a.layers = prunable_layers(model);
  if (a.layers.empty()) throw InputError("model has no prunable layers");
  for (int l : a.layers) a.channels.push_back(out_channels(model, l));
  a.stats = fuse(measure_layers(model, batches, a.layers, spec.rel_tol), spec.l, spec.m);
  if (batches.size() >= 2) a.stability = stability_report(model, batches, a.layers, spec.rel_tol);
  return a;
}

inline PrunePlan plan_from_stats(const ModelGraph& model, const std::vector<LayerInfoStats>& stats,
                                 const PlanSpec& spec, double m) {
  std::vector<int> layers, channels;
  std::vector<double> fusion;
  for (const LayerInfoStats& s : stats) {
    if (s.layer_index < 0 || s.layer_index >= static_cast<int>(model.layers.size()) ||
        !is_prunable(model, s.layer_index)) {
      throw ConfigError("stats layer " + std::to_string(s.layer_index) + " is not prunable in this model");
    }
    layers.push_back(s.layer_index);
    channels.push_back(out_channels(model, s.layer_index));
    fusion.push_back(s.fusion);
  }
  return allocate_prune_counts(layers, fusion, channels, spec.budget, spec.r_max,
                               budget_fraction_fn(model, layers, spec.budget.kind), m);
}

inline std::vector<ShapleyReport> shapley_reports(const ModelGraph& model, const ProbeBatch& probe,
                                                  const ShapleyOptions& opt, ScoreNormalization mode) {
  std::vector<ShapleyReport> out;
  for (int layer : prunable_layers(model)) {
    const CharacteristicGame game = make_game(model, layer, probe.images, probe.labels);
    ShapleyReport r = estimate_shapley(game, opt);
    out.push_back(normalize_scores(std::move(r), mode, channel_costs(model, layer, mode)));
  }
  return out;
}

inline ScorerOptions scorer_options(const RunConfig& c, ProbeBatch probe) {
  ScorerOptions o;
  o.probe = std::move(probe);
  o.shapley = shapley_options(c);
  o.random_seed = c.seeds.shapley;
  o.rel_tol = c.analysis.rel_tol;
  return o;
}

inline ScheduleConfig schedule_config(const RunConfig& c) {
  ScheduleConfig s = c.schedule.config;
  s.seed = derive(c.seeds.data, kScheduleStream);
  return s;
}

// Runs the configured schedule. `scores` is used by the static schedules and
// computed with the configured criterion when absent.
inline ScheduleResult run_schedule(const RunConfig& c, const ModelGraph& model, const PrunePlan* plan,
                                   const std::optional<ScoreTable>& scores, const TrainValidationSplit& data,
                                   const std::vector<ProbeBatch>& batches) {
  const ScheduleConfig sc = schedule_config(c);
  const std::string criterion = to_string(c.schedule.criterion);
  const LayerScorer scorer = make_scorer(c.schedule.criterion, scorer_options(c, shapley_probe(c, batches)));
  if (sc.schedule == ScheduleKind::Progressive) {
    return run_progressive(model, c.schedule.target, scorer, sc, data.train, data.validation, criterion);
  }
  if (!plan) throw ConfigError("schedule " + std::string(to_string(sc.schedule)) + " needs a plan");
  if (sc.schedule == ScheduleKind::IterativeDynamic) {
    return run_iterative_dynamic(model, *plan, scorer, sc, data.train, data.validation, criterion);
  }
  ScoreTable table;
  if (scores) {
    table = *scores;
  } else {
    std::vector<int> layers;
    for (const LayerAllocation& a : plan->layers)
      if (a.prune > 0) layers.push_back(a.layer_index);
    table = score_layers(model, layers, scorer);
  }
  if (sc.schedule == ScheduleKind::OneShot) {
    return run_one_shot(model, *plan, table, sc, data.train, data.validation, criterion);
  }
  return run_iterative_static(model, *plan, table, sc, data.train, data.validation, criterion);
}

// ---- commands --------------------------------------------------------------

struct CommandContext {
  RunConfig config;
  std::filesystem::path checkpoint;
  std::filesystem::path plan;
  std::filesystem::path stats;
  std::filesystem::path scores;
  std::filesystem::path run_dir;
  std::ostream* log = nullptr;
};

namespace detail {

inline std::filesystem::path out_dir(const CommandContext& ctx) {
  std::filesystem::create_directories(ctx.config.output_dir);
  return ctx.config.output_dir;
}

inline ModelGraph require_checkpoint(const CommandContext& ctx) {
  if (ctx.checkpoint.empty()) throw InputError("--checkpoint is required");
  if (!std::filesystem::is_regular_file(ctx.checkpoint)) {
    throw InputError("checkpoint '" + ctx.checkpoint.string() + "' not found");
  }
  return load_checkpoint(ctx.checkpoint);
}

inline void check_compatible(const ModelGraph& model, const TrainValidationSplit& data) {
  if (!(data.train.shape() == model.input)) {
    throw InputError("dataset image shape does not match the checkpoint input");
  }
  const int classes = model.layers.back().spec.out_channels;
  if (classes != data.train.class_count) {
    throw InputError("checkpoint has " + std::to_string(classes) + " outputs, dataset has " +
                     std::to_string(data.train.class_count) + " classes");
  }
}

}  // namespace detail

// Trains from scratch; writes model.ckpt and training.csv.
inline void cmd_train(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const auto out = detail::out_dir(ctx);
  const TrainValidationSplit data = load_data(c);
  ModelGraph model = build_model(c, data.train.shape(), data.train.class_count);
  CsvWriter curve(out / "training.csv", c.seeds, {"epoch", "lr", "train_loss", "val_accuracy", "val_loss"});
  EvalResult last = evaluate(model, data.validation);
  finetune(model, data.train, train_options(c), [&](const EpochStats& s, const ModelGraph& m) {
    last = evaluate(m, data.validation);
    curve.row(s.epoch, s.lr, s.train_loss, last.accuracy, last.loss);
    if (ctx.log) *ctx.log << "epoch " << s.epoch << " loss " << s.train_loss << " val_acc " << last.accuracy << '\n';
  });
  save_checkpoint(model, out / "model.ckpt");
  Json j;
  j["seeds"] = seeds_json(c.seeds);
  j["epochs"] = c.train.epochs;
  j["val_accuracy"] = last.accuracy;
  j["val_loss"] = last.loss;
  write_json(out / "train_summary.json", j);
  if (ctx.log) *ctx.log << "final val_accuracy " << last.accuracy << '\n';
}

// Writes layers.csv (per-layer information concentration) and stability.csv.
inline void cmd_analyze(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const ModelGraph model = detail::require_checkpoint(ctx);
  const auto out = detail::out_dir(ctx);
  const TrainValidationSplit data = load_data(c);
  detail::check_compatible(model, data);
  const auto batches = probe_batches(c, data.train);
  const Analysis a = analyze_model(model, batches, c.analysis);
  std::optional<PrunePlan> plan;
  try {
    plan = plan_from_stats(model, a.stats, c.plan, c.analysis.m);
  } catch (const PlanningError& e) {
    if (ctx.log) *ctx.log << "note: u_i left empty, " << e.what() << '\n';
  }
  write_layer_stats(out / "layers.csv", c.seeds, a.stats, a.channels, plan);
  if (!a.stability.layers.empty()) write_stability(out / "stability.csv", c.seeds, a.stability);
  if (ctx.log) *ctx.log << "analyzed " << a.layers.size() << " layers\n";
}

// Reads layers.csv and writes plan.json.
inline void cmd_plan(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const ModelGraph model = detail::require_checkpoint(ctx);
  if (ctx.stats.empty()) throw InputError("--stats is required");
  const LayerStatsFile stats = read_layer_stats(ctx.stats);
  for (std::size_t i = 0; i < stats.stats.size(); ++i) {
    if (is_prunable(model, stats.stats[i].layer_index) &&
        out_channels(model, stats.stats[i].layer_index) != stats.channels[i]) {
      throw InputError("stats for layer " + std::to_string(stats.stats[i].layer_index) +
                       " were measured on a different width");
    }
  }
  const auto out = detail::out_dir(ctx);
  const PrunePlan plan = plan_from_stats(model, stats.stats, c.plan, c.analysis.m);
  write_json(out / "plan.json", plan_to_json(plan, c.seeds));
  if (ctx.log) *ctx.log << "plan achieved " << plan.achieved << " of budget " << plan.budget.kept_fraction << '\n';
}

// Writes scores.csv and shapley_efficiency.csv.
inline void cmd_shapley(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const ModelGraph model = detail::require_checkpoint(ctx);
  const auto out = detail::out_dir(ctx);
  const TrainValidationSplit data = load_data(c);
  detail::check_compatible(model, data);
  const ProbeBatch probe = shapley_probe(c, probe_batches(c, data.train));
  const auto reports = shapley_reports(model, probe, shapley_options(c), c.shapley.normalization);
  write_scores(out / "scores.csv", c.seeds, reports);
  CsvWriter eff(out / "shapley_efficiency.csv", c.seeds,
                {"layer", "method", "sum_scores", "grand_payoff", "abs_error", "pass"});
  for (const ShapleyReport& r : reports) {
    if (r.normalization != ScoreNormalization::None) continue;
    double sum = 0.0;
    for (double v : r.scores) sum += v;
    const double err = std::abs(sum - r.grand_payoff);
    eff.row(r.layer_index, to_string(r.method), sum, r.grand_payoff, err, err <= 1e-9 ? "yes" : "no");
  }
  if (ctx.log) *ctx.log << "scored " << reports.size() << " layers\n";
}

// Writes pruned.ckpt, trace.jsonl and summary.json.
inline void cmd_prune(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const ModelGraph model = detail::require_checkpoint(ctx);
  const TrainValidationSplit data = load_data(c);
  detail::check_compatible(model, data);
  std::optional<PrunePlan> plan;
  if (!ctx.plan.empty()) plan = plan_from_json(read_json(ctx.plan));
  std::optional<ScoreTable> scores;
  if (!ctx.scores.empty()) scores = read_scores(ctx.scores);
  const ScheduleKind kind = c.schedule.config.schedule;
  if (kind != ScheduleKind::Progressive && !plan) throw InputError("--plan is required");
  if ((kind == ScheduleKind::OneShot || kind == ScheduleKind::IterativeStatic) &&
      c.schedule.criterion == Criterion::Shapley && !scores) {
    throw InputError("--scores is required for a static Shapley schedule");
  }
  const auto out = detail::out_dir(ctx);
  const auto batches = probe_batches(c, data.train);
  const ScheduleResult r = run_schedule(c, model, plan ? &*plan : nullptr, scores, data, batches);
  save_checkpoint(r.model, out / "pruned.ckpt");
  {
    std::ofstream f(out / "trace.jsonl", std::ios::binary);
    if (!f) throw InputError("cannot write trace.jsonl");
    f << trace_to_jsonl(r.trace);
  }
  Json summary = summary_to_json(r.trace);
  summary["seeds"] = seeds_json(c.seeds);
  if (kind == ScheduleKind::Progressive) {
    summary["target"] = {{"kind", to_string(c.schedule.target.kind)},
                         {"kept_fraction", c.schedule.target.kept_fraction}};
  }
  write_json(out / "summary.json", summary);
  if (ctx.log) {
    *ctx.log << "pruned: acc " << r.trace.summary.pruned_acc << "% (drop " << r.trace.summary.acc_drop
             << "), flops drop " << r.trace.summary.flops_drop_pct << "%\n";
  }
}

struct ReportRow {
  std::string run;
  std::string schedule;
  std::string criterion;
  double acc = 0.0;
  double acc_drop = 0.0;
  double flops_drop = 0.0;
  double params_drop = 0.0;
};

// Collects summary.json from the run directory and its immediate subdirectories.
inline std::vector<ReportRow> collect_runs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("run directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> candidates{dir};
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory()) candidates.push_back(e.path());
  std::vector<ReportRow> rows;
  for (const auto& d : candidates) {
    const auto file = d / "summary.json";
    if (!std::filesystem::is_regular_file(file)) continue;
    const Json j = read_json(file);
    try {
      rows.push_back({d == dir ? std::string(".") : d.filename().string(), j.at("schedule").get<std::string>(),
                      j.at("criterion").get<std::string>(), j.at("pruned_acc").get<double>(),
                      j.at("acc_drop").get<double>(), j.at("flops_drop_pct").get<double>(),
                      j.at("params_drop_pct").get<double>()});
    } catch (const Json::exception& e) {
      throw FormatError("'" + file.string() + "': " + e.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.flops_drop != b.flops_drop) return a.flops_drop > b.flops_drop;
    return a.run < b.run;
  });
  return rows;
}

class EmptyReportError : public Error {
 public:
  using Error::Error;
};

// Writes report.csv with one row per completed run, by FLOPs drop descending.
inline void cmd_report(const CommandContext& ctx) {
  if (ctx.run_dir.empty()) throw InputError("--run-dir is required");
  const auto rows = collect_runs(ctx.run_dir);
  if (rows.empty()) throw EmptyReportError("no completed runs under '" + ctx.run_dir.string() + "'");
  const auto out = detail::out_dir(ctx);
  CsvWriter w(out / "report.csv", ctx.config.seeds,
              {"run", "schedule", "criterion", "acc", "acc_drop", "flops_drop", "params_drop"});
  for (const ReportRow& r : rows) w.row(r.run, r.schedule, r.criterion, r.acc, r.acc_drop, r.flops_drop, r.params_drop);
  if (ctx.log) *ctx.log << "reported " << rows.size() << " runs\n";
}

}  // namespace chanprune::cli
