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

#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chanprune/cli/commands.hpp"
#include "chanprune/core/parallel.hpp"

namespace chanprune::cli {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitInfeasible = 3, kExitNumerical = 4 };

// Maps library exceptions onto the command-line exit-code contract.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    fn();
    return kExitOk;
  } catch (const PlanningError& e) {
    err << "error: " << e.what() << " (tightest feasible kept fraction " << e.tightest() << ")\n";
    return kExitInfeasible;
  } catch (const EmptyReportError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

// Entry point of the `chanprune` executable.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Information-concentration channel pruning with Shapley attribution", "chanprune"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, plan, stats, scores, run_dir;
  std::optional<std::uint64_t> seed_model, seed_data, seed_shapley;
  int threads = 1;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI run configuration");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed-model", seed_model, "weight initialization seed");
    sub->add_option("--seed-data", seed_data, "dataset, split, probe and minibatch seed");
    sub->add_option("--seed-shapley", seed_shapley, "Shapley sampling and random-criterion seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
  };
  CLI::App* train = app.add_subcommand("train", "train a model from scratch");
  CLI::App* analyze = app.add_subcommand("analyze", "per-layer rank/entropy statistics");
  CLI::App* plan_cmd = app.add_subcommand("plan", "allocate per-layer prune counts");
  CLI::App* shapley = app.add_subcommand("shapley", "per-channel Shapley scores");
  CLI::App* prune = app.add_subcommand("prune", "run a pruning schedule");
  CLI::App* report = app.add_subcommand("report", "tabulate completed runs");
  for (CLI::App* s : {train, analyze, plan_cmd, shapley, prune, report}) common(s);
  for (CLI::App* s : {analyze, plan_cmd, shapley, prune})
    s->add_option("--checkpoint", checkpoint, "model checkpoint");
  plan_cmd->add_option("--stats", stats, "layers.csv from analyze");
  prune->add_option("--plan", plan, "plan.json from plan");
  prune->add_option("--scores", scores, "scores.csv from shapley");
  report->add_option("--run-dir", run_dir, "directory of runs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  return guarded(
      [&] {
        CommandContext ctx;
        if (!config_path.empty()) {
          ctx.config = load_config(config_path);
        } else if (!report->parsed()) {
          throw ConfigError("--config is required");
        }
        if (seed_model) ctx.config.seeds.model = *seed_model;
        if (seed_data) ctx.config.seeds.data = *seed_data;
        if (seed_shapley) ctx.config.seeds.shapley = *seed_shapley;
        if (!out_dir.empty()) ctx.config.output_dir = out_dir;
        else if (report->parsed() && config_path.empty()) ctx.config.output_dir = run_dir;
        validate(ctx.config);
        parallel::set_threads(threads);
        ctx.checkpoint = checkpoint;
        ctx.plan = plan;
        ctx.stats = stats;
        ctx.scores = scores;
        ctx.run_dir = run_dir;
        ctx.log = &out;
        if (train->parsed()) cmd_train(ctx);
        else if (analyze->parsed()) cmd_analyze(ctx);
        else if (plan_cmd->parsed()) cmd_plan(ctx);
        else if (shapley->parsed()) cmd_shapley(ctx);
        else if (prune->parsed()) cmd_prune(ctx);
        else cmd_report(ctx);
      },
      err);
}

}  // namespace chanprune::cli
