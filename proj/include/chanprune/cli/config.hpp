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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "chanprune/core/error.hpp"
#include "chanprune/info/allocation.hpp"
#include "chanprune/info/concentration.hpp"
#include "chanprune/prune/criteria.hpp"
#include "chanprune/prune/schedules.hpp"
#include "chanprune/shapley/shapley.hpp"

namespace chanprune::cli {

struct ModelSpec {
  std::string arch = "plainnet";  // plainnet | resnet_mini
  std::vector<int> widths{8, 8, 12, 12, 16, 16};
  int blocks = 1;      // resnet_mini: blocks per stage
  int pool_every = 2;  // plainnet
};

struct DataSpec {
  std::string source = "synth";  // synth | raw
  std::filesystem::path path;    // raw only
  int classes = 10;
  int per_class = 200;
  int image_size = 12;
  int channels = 3;
  double noise = 0.5;
  double val_fraction = 0.2;
};

struct TrainSpec {
  int epochs = 15;
  std::size_t batch_size = 32;
  LrSchedule lr{0.005, {10}, 0.1};
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct ProbeSpec {
  std::size_t batch_size = 64;
  std::size_t batches = 8;
};

struct AnalysisSpec {
  double l = 1.0;
  double m = 10.0;
  double rel_tol = kDefaultRankTolerance;
};

struct PlanSpec {
  Budget budget{BudgetKind::Channels, 0.6};
  double r_max = 0.9;
};

struct ShapleySpec {
  int exact_limit = kExactPlayerLimit;
  int permutations_per_channel = 200;
  std::size_t probe_batches = 0;  // 0 uses every probe batch
  ScoreNormalization normalization = ScoreNormalization::None;
};

struct ScheduleSpec {
  ScheduleConfig config;
  Criterion criterion = Criterion::Shapley;
  Budget target{BudgetKind::Channels, 0.6};  // progressive only
};

struct Seeds {
  std::uint64_t model = 1;
  std::uint64_t data = 7;
  std::uint64_t shapley = 11;
};

struct RunConfig {
  ModelSpec model;
  DataSpec data;
  TrainSpec train;
  ProbeSpec probe;
  AnalysisSpec analysis;
  PlanSpec plan;
  ShapleySpec shapley;
  ScheduleSpec schedule;
  Seeds seeds;
  std::filesystem::path output_dir = "run";
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(item.substr(b), &used);
      if (item.find_first_not_of(" \t", b + used) != std::string::npos) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + item + "' is not an integer");
    }
  }
  return out;
}

class Reader {
 public:
  explicit Reader(boost::property_tree::ptree tree) : tree_(std::move(tree)) {}

  template <class T>
  void get(const std::string& key, T& value) {
    known_.insert(key);
    const auto node = tree_.get_optional<std::string>(key);
    if (!node) return;
    const auto parsed = tree_.get_optional<T>(key);
    if (!parsed) throw ConfigError("key '" + key + "': cannot parse '" + *node + "'");
    value = *parsed;
  }

  void get_list(const std::string& key, std::vector<int>& value) {
    known_.insert(key);
    if (const auto node = tree_.get_optional<std::string>(key)) value = parse_int_list(key, *node);
  }

  template <class Fn>
  void get_enum(const std::string& key, Fn&& convert) {
    known_.insert(key);
    if (const auto node = tree_.get_optional<std::string>(key)) convert(*node);
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw ConfigError("key '" + section + "' must live inside a [section]");
      for (const auto& [name, leaf] : body) {
        const std::string key = section + "." + name;
        if (!known_.count(key)) throw ConfigError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  boost::property_tree::ptree tree_;
  std::set<std::string> known_;
};

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.model.arch != "plainnet" && c.model.arch != "resnet_mini") {
    throw ConfigError("model.arch must be plainnet or resnet_mini, got '" + c.model.arch + "'");
  }
  if (c.model.widths.empty()) throw ConfigError("model.widths must not be empty");
  if (c.data.source != "synth" && c.data.source != "raw") {
    throw ConfigError("data.source must be synth or raw, got '" + c.data.source + "'");
  }
  if (c.data.source == "raw" && !std::filesystem::is_regular_file(c.data.path)) {
    throw ConfigError("data.path '" + c.data.path.string() + "' does not exist");
  }
  if (!(c.data.val_fraction > 0.0 && c.data.val_fraction < 1.0)) {
    throw ConfigError("data.val_fraction must lie in (0, 1)");
  }
  if (c.train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (c.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(c.train.lr.initial > 0.0)) throw ConfigError("train.lr must be positive");
  if (c.probe.batch_size == 0 || c.probe.batches == 0) throw ConfigError("probe sizes must be positive");
  if (!(c.analysis.l < c.analysis.m)) throw ConfigError("analysis.l must be below analysis.m");
  if (!(c.analysis.l > 0.0)) throw ConfigError("analysis.l must be positive");
  if (!(c.analysis.rel_tol > 0.0)) throw ConfigError("analysis.rel_tol must be positive");
  if (!(c.plan.budget.kept_fraction > 0.0 && c.plan.budget.kept_fraction <= 1.0)) {
    throw ConfigError("plan.budget must lie in (0, 1]");
  }
  if (!(c.plan.r_max >= 0.0 && c.plan.r_max < 1.0)) throw ConfigError("plan.r_max must lie in [0, 1)");
  if (c.shapley.exact_limit < 1 || c.shapley.exact_limit > 20) {
    throw ConfigError("shapley.exact_limit must lie in [1, 20]");
  }
  if (c.shapley.permutations_per_channel < 1) throw ConfigError("shapley.permutations_per_channel must be >= 1");
  if (c.shapley.probe_batches > c.probe.batches) {
    throw ConfigError("shapley.probe_batches exceeds probe.batches");
  }
  if (!(c.schedule.target.kept_fraction > 0.0 && c.schedule.target.kept_fraction <= 1.0)) {
    throw ConfigError("schedule.target must lie in (0, 1]");
  }
  check_schedule_config(c.schedule.config);
}

inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  detail::Reader r(std::move(tree));
  r.get("model.arch", c.model.arch);
  r.get_list("model.widths", c.model.widths);
  r.get("model.blocks", c.model.blocks);
  r.get("model.pool_every", c.model.pool_every);

  std::string path;
  r.get("data.source", c.data.source);
  r.get("data.path", path);
  if (!path.empty()) c.data.path = path;
  r.get("data.classes", c.data.classes);
  r.get("data.per_class", c.data.per_class);
  r.get("data.image_size", c.data.image_size);
  r.get("data.channels", c.data.channels);
  r.get("data.noise", c.data.noise);
  r.get("data.val_fraction", c.data.val_fraction);

  r.get("train.epochs", c.train.epochs);
  r.get("train.batch_size", c.train.batch_size);
  r.get("train.lr", c.train.lr.initial);
  r.get_list("train.decay_epochs", c.train.lr.decay_epochs);
  r.get("train.decay_factor", c.train.lr.decay_factor);
  r.get("train.momentum", c.train.momentum);
  r.get("train.weight_decay", c.train.weight_decay);

  r.get("probe.batch_size", c.probe.batch_size);
  r.get("probe.batches", c.probe.batches);

  r.get("analysis.l", c.analysis.l);
  r.get("analysis.m", c.analysis.m);
  r.get("analysis.rel_tol", c.analysis.rel_tol);

  r.get("plan.budget", c.plan.budget.kept_fraction);
  r.get_enum("plan.kind", [&](const std::string& s) { c.plan.budget.kind = budget_kind_from_string(s); });
  r.get("plan.r_max", c.plan.r_max);

  r.get("shapley.exact_limit", c.shapley.exact_limit);
  r.get("shapley.permutations_per_channel", c.shapley.permutations_per_channel);
  r.get("shapley.probe_batches", c.shapley.probe_batches);
  r.get_enum("shapley.normalization",
             [&](const std::string& s) { c.shapley.normalization = normalization_from_string(s); });

  ScheduleConfig& s = c.schedule.config;
  s.lr = c.train.lr;
  s.batch_size = c.train.batch_size;
  s.momentum = c.train.momentum;
  s.weight_decay = c.train.weight_decay;
  r.get_enum("schedule.kind", [&](const std::string& v) { s.schedule = schedule_from_string(v); });
  r.get_enum("schedule.criterion", [&](const std::string& v) { c.schedule.criterion = criterion_from_string(v); });
  r.get("schedule.finetune_epochs", s.finetune_epochs);
  r.get("schedule.retrain_epochs", s.retrain_epochs);
  r.get("schedule.lr", s.lr.initial);
  r.get_list("schedule.decay_epochs", s.lr.decay_epochs);
  r.get("schedule.decay_factor", s.lr.decay_factor);
  r.get("schedule.step", s.step);
  r.get("schedule.recompute_every", s.recompute_every);
  r.get("schedule.train_steps_per_iteration", s.train_steps_per_iteration);
  r.get_enum("schedule.normalization", [&](const std::string& v) { s.normalization = normalization_from_string(v); });
  r.get("schedule.target", c.schedule.target.kept_fraction);
  r.get_enum("schedule.target_kind", [&](const std::string& v) { c.schedule.target.kind = budget_kind_from_string(v); });

  r.get("seeds.model", c.seeds.model);
  r.get("seeds.data", c.seeds.data);
  r.get("seeds.shapley", c.seeds.shapley);

  std::string out;
  r.get("output.dir", out);
  if (!out.empty()) c.output_dir = out;

  r.reject_unknown();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  RunConfig c = parse_config(in);
  if (c.data.source == "raw" && c.data.path.is_relative()) c.data.path = path.parent_path() / c.data.path;
  return c;
}

}  // namespace chanprune::cli
