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
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/model/costs.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

enum class BudgetKind { Channels, Flops };

inline const char* to_string(BudgetKind k) { return k == BudgetKind::Channels ? "channels" : "flops"; }

inline BudgetKind budget_kind_from_string(const std::string& s) {
  if (s == "channels") return BudgetKind::Channels;
  if (s == "flops") return BudgetKind::Flops;
  throw ConfigError("unknown budget kind '" + s + "' (expected channels or flops)");
}

// Target fraction of channels (over the planned layers) or of network FLOPs
// that survives pruning.
struct Budget {
  BudgetKind kind = BudgetKind::Channels;
  double kept_fraction = 1.0;
};

struct LayerAllocation {
  int layer_index = 0;
  int channels = 0;
  double fusion = 0.0;
  double keep_ratio = 1.0;  // clamped kappa before rounding
  int keep = 0;
  int prune = 0;
};

struct PrunePlan {
  std::vector<LayerAllocation> layers;
  Budget budget;
  double r_max = 0.9;
  double alpha = 0.0;
  double achieved = 1.0;  // kept fraction in the budget's unit

  int prune_for(int layer) const {
    for (const auto& l : layers)
      if (l.layer_index == layer) return l.prune;
    return 0;
  }
};

// Kept fraction (channels or FLOPs) for candidate per-layer keep counts.
using KeptFractionFn = std::function<double(std::span<const int> keep)>;

inline KeptFractionFn channel_fraction_fn(std::vector<int> channels) {
  const double total = std::accumulate(channels.begin(), channels.end(), 0.0);
  return [total](std::span<const int> keep) {
    return std::accumulate(keep.begin(), keep.end(), 0.0) / total;
  };
}

inline KeptFractionFn flops_fraction_fn(const ModelGraph& model, std::vector<int> layers) {
  const ImageShape input = model.input;
  const std::vector<LayerSpec> specs = specs_of(model);
  const double base = static_cast<double>(count_costs(specs, input).total_flops);
  return [specs, input, layers, base](std::span<const int> keep) {
    std::vector<LayerSpec> s = specs;
    for (std::size_t i = 0; i < layers.size(); ++i) s = with_layer_width(std::move(s), input, layers[i], keep[i]);
    return static_cast<double>(count_costs(s, input).total_flops) / base;
  };
}

inline KeptFractionFn budget_fraction_fn(const ModelGraph& model, const std::vector<int>& layers,
                                         BudgetKind kind) {
  if (kind == BudgetKind::Flops) return flops_fraction_fn(model, layers);
  std::vector<int> channels;
  for (int l : layers) channels.push_back(out_channels(model, l));
  return channel_fraction_fn(channels);
}

// Keep fraction kappa_i = clamp(alpha * fusion_i / m, 1 - r_max, 1) with a
// single scale alpha found by bisection so the kept fraction meets the budget
// from below; keep_i = round(kappa_i * c_i), at least one channel and at most
// floor(r_max * c_i) pruned. Layers whose count is still mid-rounding at the
// bisection point may take one more channel while the budget allows, highest
// fusion first.
inline PrunePlan allocate_prune_counts(std::span<const int> layer_indices,
                                       std::span<const double> fusion,
                                       std::span<const int> channels, Budget budget, double r_max,
                                       const KeptFractionFn& kept_fraction, double m = 10.0) {
  const std::size_t n = layer_indices.size();
  if (n == 0 || fusion.size() != n || channels.size() != n) {
    throw InputError("allocate_prune_counts: layer, fusion and channel lists must match");
  }
  if (!(budget.kept_fraction > 0.0 && budget.kept_fraction <= 1.0)) {
    throw InputError("allocate_prune_counts: budget must lie in (0, 1]");
  }
  if (!(r_max >= 0.0 && r_max < 1.0)) throw InputError("allocate_prune_counts: r_max must lie in [0, 1)");
  for (double f : fusion)
    if (!(f > 0.0)) throw InputError("allocate_prune_counts: fusion values must be positive");

  std::vector<int> min_keep(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int max_prune = static_cast<int>(std::floor(r_max * channels[i] + 1e-12));
    min_keep[i] = std::max(1, channels[i] - max_prune);
  }
  auto kappa = [&](double alpha, std::size_t i) {
    return std::clamp(alpha * fusion[i] / m, 1.0 - r_max, 1.0);
  };
  auto keeps_at = [&](double alpha) {
    std::vector<int> keep(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int k = static_cast<int>(std::lround(kappa(alpha, i) * channels[i]));
      keep[i] = std::clamp(k, min_keep[i], channels[i]);
    }
    return keep;
  };
  auto make_plan = [&](double alpha, const std::vector<int>& keep) {
    PrunePlan plan;
    plan.budget = budget;
    plan.r_max = r_max;
    plan.alpha = alpha;
    plan.achieved = kept_fraction(keep);
    for (std::size_t i = 0; i < n; ++i) {
      plan.layers.push_back({layer_indices[i], channels[i], fusion[i], kappa(alpha, i), keep[i],
                             channels[i] - keep[i]});
    }
    return plan;
  };

  const double alpha_full = m / *std::min_element(fusion.begin(), fusion.end());
  constexpr double kSlack = 1e-12;
  if (budget.kept_fraction >= 1.0 - kSlack) return make_plan(alpha_full, keeps_at(alpha_full));
  const double tightest = kept_fraction(keeps_at(0.0));
  if (tightest > budget.kept_fraction + kSlack) {
    throw PlanningError("budget " + std::to_string(budget.kept_fraction) +
                            " infeasible; tightest achievable kept fraction is " +
                            std::to_string(tightest),
                        tightest);
  }
  double lo = 0.0, hi = alpha_full;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * alpha_full; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (kept_fraction(keeps_at(mid)) <= budget.kept_fraction + kSlack) lo = mid;
    else hi = mid;
  }
  std::vector<int> keep = keeps_at(lo);
  const std::vector<int> upper = keeps_at(hi);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fusion[a] > fusion[b]; });
  for (std::size_t i : order) {
    if (keep[i] >= upper[i]) continue;
    ++keep[i];
    if (kept_fraction(keep) > budget.kept_fraction + kSlack) --keep[i];
  }
  return make_plan(lo, keep);
}

// Plan with the same keep ratio for every layer (all fusion values equal).
inline PrunePlan constant_ratio_plan(std::span<const int> layer_indices, std::span<const int> channels,
                                     Budget budget, double r_max, const KeptFractionFn& kept_fraction) {
  const std::vector<double> flat(layer_indices.size(), 1.0);
  return allocate_prune_counts(layer_indices, flat, channels, budget, r_max, kept_fraction);
}

}  // namespace chanprune
