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
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/data/dataset.hpp"
#include "chanprune/info/allocation.hpp"
#include "chanprune/model/costs.hpp"
#include "chanprune/model/graph.hpp"
#include "chanprune/model/rewrite.hpp"
#include "chanprune/prune/criteria.hpp"
#include "chanprune/prune/train.hpp"
#include "chanprune/shapley/shapley.hpp"

namespace chanprune {

enum class ScheduleKind { OneShot, IterativeStatic, IterativeDynamic, Progressive };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::OneShot: return "one_shot";
    case ScheduleKind::IterativeStatic: return "iterative_static";
    case ScheduleKind::IterativeDynamic: return "iterative_dynamic";
    case ScheduleKind::Progressive: return "progressive";
  }
  return "?";
}

inline ScheduleKind schedule_from_string(const std::string& s) {
  if (s == "one_shot") return ScheduleKind::OneShot;
  if (s == "iterative_static") return ScheduleKind::IterativeStatic;
  if (s == "iterative_dynamic") return ScheduleKind::IterativeDynamic;
  if (s == "progressive") return ScheduleKind::Progressive;
  throw ConfigError("unknown schedule '" + s +
                    "' (expected one_shot, iterative_static, iterative_dynamic or progressive)");
}

struct ScheduleConfig {
  ScheduleKind schedule = ScheduleKind::IterativeStatic;
  int finetune_epochs = 2;
  int retrain_epochs = 20;
  LrSchedule lr;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;  // minibatch order
  // Progressive only.
  int step = 1;
  int recompute_every = 10;
  int train_steps_per_iteration = 1;
  ScoreNormalization normalization = ScoreNormalization::None;
};

inline void check_schedule_config(const ScheduleConfig& c) {
  if (c.finetune_epochs < 0 || c.retrain_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (c.step < 1) throw ConfigError("progressive step must be >= 1");
  if (c.recompute_every < 1) throw ConfigError("recompute_every must be >= 1");
  if (c.train_steps_per_iteration < 0) throw ConfigError("train_steps_per_iteration must be >= 0");
  if (c.batch_size == 0) throw ConfigError("batch size must be positive");
}

enum class EventKind { Prune, Score, Finetune, Retrain };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Prune: return "prune";
    case EventKind::Score: return "score";
    case EventKind::Finetune: return "finetune";
    case EventKind::Retrain: return "retrain";
  }
  return "?";
}

struct MetricsSnapshot {
  double accuracy = 0.0;  // percent
  double kept_flops_pct = 100.0;
  double kept_params_pct = 100.0;
  std::int64_t flops = 0;
  std::int64_t params = 0;
};

struct PruneEvent {
  EventKind kind = EventKind::Prune;
  int step = 0;
  int layer = -1;             // -1 when the event spans layers
  std::vector<int> channels;  // prune: indices in the layer before removal
  int epochs = 0;             // finetune/retrain
  MetricsSnapshot metrics;
};

struct TraceSummary {
  double baseline_acc = 0.0;  // percent
  double pruned_acc = 0.0;
  double acc_drop = 0.0;  // percentage points, positive means worse
  double flops_drop_pct = 0.0;
  double params_drop_pct = 0.0;
  std::int64_t baseline_flops = 0;
  std::int64_t pruned_flops = 0;
  std::int64_t baseline_params = 0;
  std::int64_t pruned_params = 0;
};

struct PruneTrace {
  ScheduleKind schedule = ScheduleKind::IterativeStatic;
  std::string criterion;
  std::vector<PruneEvent> events;
  TraceSummary summary;

  std::size_t count(EventKind kind) const {
    return static_cast<std::size_t>(std::count_if(events.begin(), events.end(),
                                                  [&](const PruneEvent& e) { return e.kind == kind; }));
  }
};

struct ScheduleResult {
  ModelGraph model;
  PruneTrace trace;
};

namespace detail {

class TraceRecorder {
 public:
  TraceRecorder(const ModelGraph& baseline, const LabeledImageSet& eval, ScheduleKind kind,
                std::string criterion)
      : eval_(eval), base_(count_costs(baseline)) {
    trace_.schedule = kind;
    trace_.criterion = std::move(criterion);
    trace_.summary.baseline_acc = 100.0 * evaluate(baseline, eval).accuracy;
    trace_.summary.baseline_flops = base_.total_flops;
    trace_.summary.baseline_params = base_.total_params;
  }

  MetricsSnapshot snapshot(const ModelGraph& model) const {
    const CostProfile p = count_costs(model);
    MetricsSnapshot m;
    m.accuracy = 100.0 * evaluate(model, eval_).accuracy;
    m.flops = p.total_flops;
    m.params = p.total_params;
    m.kept_flops_pct = 100.0 * static_cast<double>(p.total_flops) / static_cast<double>(base_.total_flops);
    m.kept_params_pct =
        100.0 * static_cast<double>(p.total_params) / static_cast<double>(base_.total_params);
    return m;
  }

  void add(EventKind kind, const ModelGraph& model, int layer = -1, std::vector<int> channels = {},
           int epochs = 0, bool with_metrics = true) {
    PruneEvent e;
    e.kind = kind;
    e.step = static_cast<int>(trace_.events.size());
    e.layer = layer;
    e.channels = std::move(channels);
    e.epochs = epochs;
    if (with_metrics) e.metrics = snapshot(model);
    trace_.events.push_back(std::move(e));
  }

  PruneTrace finish(const ModelGraph& model) {
    const MetricsSnapshot m = snapshot(model);
    TraceSummary& s = trace_.summary;
    s.pruned_acc = m.accuracy;
    s.acc_drop = s.baseline_acc - s.pruned_acc;
    s.pruned_flops = m.flops;
    s.pruned_params = m.params;
    s.flops_drop_pct = 100.0 - m.kept_flops_pct;
    s.params_drop_pct = 100.0 - m.kept_params_pct;
    return std::move(trace_);
  }

 private:
  const LabeledImageSet& eval_;
  CostProfile base_;
  PruneTrace trace_;
};

inline TrainOptions train_options(const ScheduleConfig& c, int epochs, std::uint64_t stream) {
  TrainOptions t;
  t.epochs = epochs;
  t.batch_size = c.batch_size;
  t.lr = c.lr;
  t.momentum = c.momentum;
  t.weight_decay = c.weight_decay;
  t.seed = splitmix64(c.seed ^ splitmix64(stream));
  return t;
}

inline void check_plan_layers(const ModelGraph& model, const PrunePlan& plan) {
  for (const LayerAllocation& a : plan.layers) {
    if (a.layer_index < 0 || a.layer_index >= static_cast<int>(model.layers.size()) ||
        !is_prunable(model, a.layer_index)) {
      throw ConfigError("plan layer " + std::to_string(a.layer_index) + " is not a prunable layer");
    }
    if (a.channels != out_channels(model, a.layer_index)) {
      throw ConfigError("plan layer " + std::to_string(a.layer_index) + " expects " +
                        std::to_string(a.channels) + " channels, model has " +
                        std::to_string(out_channels(model, a.layer_index)));
    }
    if (a.prune < 0 || a.prune >= a.channels) {
      throw ConfigError("plan layer " + std::to_string(a.layer_index) + " prune count out of range");
    }
  }
}

inline const std::vector<double>& scores_for(const ScoreTable& scores, const ModelGraph& model,
                                             int layer) {
  auto it = scores.find(layer);
  if (it == scores.end()) throw ConfigError("no scores for planned layer " + std::to_string(layer));
  if (static_cast<int>(it->second.size()) != out_channels(model, layer)) {
    throw ConfigError("layer " + std::to_string(layer) + " has " +
                      std::to_string(out_channels(model, layer)) + " channels but " +
                      std::to_string(it->second.size()) + " scores");
  }
  return it->second;
}

inline std::vector<int> removed(const ChannelMask& m) {
  std::vector<int> out;
  for (std::size_t j = 0; j < m.bits.size(); ++j)
    if (!m.bits[j]) out.push_back(static_cast<int>(j));
  return out;
}

// Shared body of the static and dynamic layer-by-layer schedules.
inline ScheduleResult run_layerwise(const ModelGraph& model, const PrunePlan& plan,
                                    const ScoreTable* fixed, const LayerScorer* scorer,
                                    const ScheduleConfig& config, const LabeledImageSet& train,
                                    const LabeledImageSet& eval, ScheduleKind kind,
                                    const std::string& criterion) {
  check_schedule_config(config);
  check_plan_layers(model, plan);
  std::vector<LayerAllocation> order = plan.layers;
  std::sort(order.begin(), order.end(),
            [](const LayerAllocation& a, const LayerAllocation& b) { return a.layer_index < b.layer_index; });
  if (fixed) {
    for (const LayerAllocation& a : order)
      if (a.prune > 0) scores_for(*fixed, model, a.layer_index);
  }
  TraceRecorder rec(model, eval, kind, criterion);
  ModelGraph current = model;
  std::uint64_t stage = 0;
  for (const LayerAllocation& a : order) {
    if (a.prune == 0) continue;
    std::vector<double> fresh;
    const std::vector<double>* s = nullptr;
    if (fixed) {
      s = &scores_for(*fixed, current, a.layer_index);
    } else {
      fresh = (*scorer)(current, a.layer_index);
      rec.add(EventKind::Score, current, a.layer_index, {}, 0, false);
      s = &fresh;
    }
    const ChannelMask mask = prune_lowest(a.layer_index, *s, a.prune);
    const std::vector<ChannelMask> masks{mask};
    current = rewrite_model(current, masks);
    rec.add(EventKind::Prune, current, a.layer_index, removed(mask));
    if (config.finetune_epochs > 0) {
      finetune(current, train, train_options(config, config.finetune_epochs, ++stage));
      rec.add(EventKind::Finetune, current, a.layer_index, {}, config.finetune_epochs);
    }
  }
  if (config.retrain_epochs > 0) {
    finetune(current, train, train_options(config, config.retrain_epochs, 0));
    rec.add(EventKind::Retrain, current, -1, {}, config.retrain_epochs);
  }
  PruneTrace trace = rec.finish(current);
  return {std::move(current), std::move(trace)};
}

}  // namespace detail

// Prunes every planned layer in a single rewrite, then retrains.
inline ScheduleResult run_one_shot(const ModelGraph& model, const PrunePlan& plan,
                                   const ScoreTable& scores, const ScheduleConfig& config,
                                   const LabeledImageSet& train, const LabeledImageSet& eval,
                                   const std::string& criterion = "shapley") {
  check_schedule_config(config);
  detail::check_plan_layers(model, plan);
  detail::TraceRecorder rec(model, eval, ScheduleKind::OneShot, criterion);
  std::vector<ChannelMask> masks;
  for (const LayerAllocation& a : plan.layers) {
    if (a.prune == 0) continue;
    masks.push_back(prune_lowest(a.layer_index, detail::scores_for(scores, model, a.layer_index), a.prune));
  }
  std::sort(masks.begin(), masks.end(),
            [](const ChannelMask& a, const ChannelMask& b) { return a.layer_index < b.layer_index; });
  ModelGraph current = masks.empty() ? model : rewrite_model(model, masks);
  for (const ChannelMask& m : masks) rec.add(EventKind::Prune, current, m.layer_index, detail::removed(m));
  if (config.retrain_epochs > 0) {
    finetune(current, train, detail::train_options(config, config.retrain_epochs, 0));
    rec.add(EventKind::Retrain, current, -1, {}, config.retrain_epochs);
  }
  PruneTrace trace = rec.finish(current);
  return {std::move(current), std::move(trace)};
}

// Layer-by-layer in ascending index order with scores fixed up front.
inline ScheduleResult run_iterative_static(const ModelGraph& model, const PrunePlan& plan,
                                           const ScoreTable& scores, const ScheduleConfig& config,
                                           const LabeledImageSet& train, const LabeledImageSet& eval,
                                           const std::string& criterion = "shapley") {
  return detail::run_layerwise(model, plan, &scores, nullptr, config, train, eval,
                               ScheduleKind::IterativeStatic, criterion);
}

// Layer-by-layer with each layer rescored on the current model just before pruning.
inline ScheduleResult run_iterative_dynamic(const ModelGraph& model, const PrunePlan& plan,
                                            const LayerScorer& scorer, const ScheduleConfig& config,
                                            const LabeledImageSet& train, const LabeledImageSet& eval,
                                            const std::string& criterion = "shapley") {
  return detail::run_layerwise(model, plan, nullptr, &scorer, config, train, eval,
                               ScheduleKind::IterativeDynamic, criterion);
}

// Kept fraction of the prunable channels or of total FLOPs relative to `base`.
inline double kept_fraction_of(const ModelGraph& model, const ModelGraph& base, BudgetKind kind) {
  if (kind == BudgetKind::Flops) {
    return static_cast<double>(count_costs(model).total_flops) /
           static_cast<double>(count_costs(base).total_flops);
  }
  double now = 0.0, was = 0.0;
  for (int layer : prunable_layers(base)) {
    now += out_channels(model, layer);
    was += out_channels(base, layer);
  }
  return now / was;
}

// A global removal candidate: (score, layer, channel) ordered lexicographically,
// so ties go to the lower layer index and then the lower channel index.
struct GlobalCandidate {
  double score = 0.0;
  int layer = 0;
  int channel = 0;
  auto operator<=>(const GlobalCandidate&) const = default;
};

// Scores divided by the per-channel removal cost on the current model.
inline std::vector<GlobalCandidate> global_candidates(const ModelGraph& model, const ScoreTable& scores,
                                                      ScoreNormalization mode) {
  std::vector<GlobalCandidate> out;
  for (const auto& [layer, s] : scores) {
    const std::vector<double> cost = channel_costs(model, layer, mode);
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!(cost[j] > 0.0)) throw NormalizationError("zero removal cost in layer " + std::to_string(layer));
      out.push_back({s[j] / cost[j], layer, static_cast<int>(j)});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Removes the globally least important channels `step` at a time, with a
// training iteration after each removal, until the kept fraction reaches the
// target; then retrains. Scores are refreshed every `recompute_every` iterations.
inline ScheduleResult run_progressive(const ModelGraph& model, Budget target, const LayerScorer& scorer,
                                      const ScheduleConfig& config, const LabeledImageSet& train,
                                      const LabeledImageSet& eval, const std::string& criterion = "shapley") {
  check_schedule_config(config);
  if (!(target.kept_fraction > 0.0 && target.kept_fraction <= 1.0)) {
    throw ConfigError("progressive target must lie in (0, 1]");
  }
  const std::vector<int> layers = prunable_layers(model);
  if (layers.empty()) throw PlanningError("model has no prunable layers", 1.0);
  {
    std::vector<ChannelMask> thinnest;
    for (int layer : layers) {
      ChannelMask m(full_mask(layer, out_channels(model, layer)));
      std::fill(m.bits.begin() + 1, m.bits.end(), false);
      thinnest.push_back(std::move(m));
    }
    const double tightest = kept_fraction_of(rewrite_model(model, thinnest), model, target.kind);
    if (tightest > target.kept_fraction + 1e-12) {
      throw PlanningError("progressive target " + std::to_string(target.kept_fraction) +
                              " infeasible; tightest achievable kept fraction is " + std::to_string(tightest),
                          tightest);
    }
  }
  detail::TraceRecorder rec(model, eval, ScheduleKind::Progressive, criterion);
  ModelGraph current = model;
  SgdState state = SgdState::zeros_like(current);
  const SgdOptions sgd{config.lr.initial, config.momentum, config.weight_decay};
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  int epoch = 0;
  ScoreTable scores;
  for (int iteration = 0;
       kept_fraction_of(current, model, target.kind) > target.kept_fraction + 1e-12; ++iteration) {
    if (iteration % config.recompute_every == 0) {
      scores = score_layers(current, layers, scorer);
      rec.add(EventKind::Score, current, -1, {}, 0, false);
    }
    const auto candidates = global_candidates(current, scores, config.normalization);
    std::map<int, std::vector<bool>> drop;
    std::map<int, int> width;
    for (int layer : layers) width[layer] = out_channels(current, layer);
    int taken = 0;
    for (const GlobalCandidate& c : candidates) {
      if (taken == config.step) break;
      if (width[c.layer] <= 1) continue;
      auto& bits = drop[c.layer];
      if (bits.empty()) bits.assign(static_cast<std::size_t>(out_channels(current, c.layer)), true);
      bits[static_cast<std::size_t>(c.channel)] = false;
      --width[c.layer];
      ++taken;
      // Stop as soon as the target is met so the overshoot stays within one channel.
      std::vector<ChannelMask> probe;
      for (const auto& [l, b] : drop) probe.push_back({l, b});
      if (kept_fraction_of(rewrite_model(current, probe), model, target.kind) <=
          target.kept_fraction + 1e-12) {
        break;
      }
    }
    std::vector<ChannelMask> masks;
    for (const auto& [l, b] : drop) masks.push_back({l, b});
    state = rewrite_state(state, current, masks);
    current = rewrite_model(current, masks);
    for (const ChannelMask& m : masks) {
      std::vector<double>& s = scores[m.layer_index];
      std::vector<double> kept;
      for (std::size_t j = 0; j < s.size(); ++j)
        if (m.bits[j]) kept.push_back(s[j]);
      s = std::move(kept);
      rec.add(EventKind::Prune, current, m.layer_index, detail::removed(m));
    }
    for (int t = 0; t < config.train_steps_per_iteration; ++t) {
      if (cursor >= order.size()) {
        order = epoch_order(train.size(), config.seed, epoch++);
        cursor = 0;
      }
      const std::size_t end = std::min(order.size(), cursor + config.batch_size);
      const LabeledImageSet batch = subset(train, std::span(order).subspan(cursor, end - cursor), "batch");
      cursor = end;
      train_step(current, state, batch.images, batch.labels, sgd);
    }
  }
  if (config.retrain_epochs > 0) {
    finetune(current, train, detail::train_options(config, config.retrain_epochs, 0));
    rec.add(EventKind::Retrain, current, -1, {}, config.retrain_epochs);
  }
  PruneTrace trace = rec.finish(current);
  return {std::move(current), std::move(trace)};
}

}  // namespace chanprune
