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
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/rng.hpp"
#include "chanprune/model/costs.hpp"
#include "chanprune/shapley/game.hpp"

namespace chanprune {

enum class ShapleyMethod { Exact, Sampled };
enum class ScoreNormalization { None, Params, Flops };

inline const char* to_string(ShapleyMethod m) { return m == ShapleyMethod::Exact ? "exact" : "sampled"; }

inline const char* to_string(ScoreNormalization n) {
  switch (n) {
    case ScoreNormalization::None: return "none";
    case ScoreNormalization::Params: return "params";
    case ScoreNormalization::Flops: return "flops";
  }
  return "?";
}

inline ScoreNormalization normalization_from_string(const std::string& s) {
  if (s == "none") return ScoreNormalization::None;
  if (s == "params") return ScoreNormalization::Params;
  if (s == "flops") return ScoreNormalization::Flops;
  throw ConfigError("unknown normalization '" + s + "' (expected none, params or flops)");
}

inline ShapleyMethod method_from_string(const std::string& s) {
  if (s == "exact") return ShapleyMethod::Exact;
  if (s == "sampled") return ShapleyMethod::Sampled;
  throw FormatError("unknown Shapley method '" + s + "'");
}

inline constexpr int kExactPlayerLimit = 12;

struct ShapleyReport {
  int layer_index = 0;
  std::vector<double> scores;
  std::vector<double> std_err;  // zeros for the exact method
  ShapleyMethod method = ShapleyMethod::Exact;
  int permutations = 0;
  std::uint64_t seed = 0;
  ScoreNormalization normalization = ScoreNormalization::None;
  double grand_payoff = 0.0;  // e(all players)
};

// Probability weight (|s|-1)! (n-|s|)! / n! of a coalition of size s_size
// containing the joining player, computed as 1 / (n * C(n-1, s_size-1)).
inline double coalition_weight(int s_size, int n) {
  if (n < 1 || s_size < 1 || s_size > n) {
    throw InputError("coalition_weight: need 1 <= s_size <= n, got s_size=" +
                     std::to_string(s_size) + " n=" + std::to_string(n));
  }
  const int k = std::min(s_size - 1, n - s_size);
  double binom = 1.0;
  for (int i = 1; i <= k; ++i) binom = binom * static_cast<double>(n - k - 1 + i) / i;
  return 1.0 / (static_cast<double>(n) * binom);
}

// Subset enumeration over all 2^n coalitions.
inline ShapleyReport exact_shapley(const CharacteristicGame& game,
                                   int max_players = kExactPlayerLimit) {
  const int n = game.players();
  if (n > max_players) {
    throw CapacityError("exact Shapley supports at most " + std::to_string(max_players) +
                        " players, layer " + std::to_string(game.layer_index()) + " has " +
                        std::to_string(n) + "; use sampled_shapley");
  }
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  std::vector<double> v(full + 1);
  for (std::uint64_t s = 0; s <= full; ++s) v[s] = game.value_of_mask(s);
  std::vector<double> weight(static_cast<std::size_t>(n) + 1, 0.0);
  for (int k = 1; k <= n; ++k) weight[static_cast<std::size_t>(k)] = coalition_weight(k, n);
  ShapleyReport r;
  r.layer_index = game.layer_index();
  r.method = ShapleyMethod::Exact;
  r.scores.assign(static_cast<std::size_t>(n), 0.0);
  r.std_err.assign(static_cast<std::size_t>(n), 0.0);
  r.grand_payoff = v[full];
  for (int a = 0; a < n; ++a) {
    const std::uint64_t bit = std::uint64_t{1} << a;
    double w = 0.0;
    for (std::uint64_t s = 0; s <= full; ++s) {
      if (!(s & bit)) continue;
      w += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s] - v[s ^ bit]);
    }
    r.scores[static_cast<std::size_t>(a)] = w;
  }
  return r;
}

// Permutation-sampling estimate. Permutations come in antithetic pairs (a
// uniform permutation and its reverse); each pair's averaged marginals form
// one sample for the mean and standard error. A pair's permutation depends
// only on (seed, pair index).
inline ShapleyReport sampled_shapley(const CharacteristicGame& game, int num_permutations,
                                     std::uint64_t seed) {
  if (num_permutations < 1) throw InputError("sampled_shapley: need at least one permutation");
  const std::size_t n = static_cast<std::size_t>(game.players());
  const int units = (num_permutations + 1) / 2;
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0), unit(n), marginal(n);
  std::vector<std::size_t> perm(n);
  Coalition running(n);
  auto walk = [&](bool reverse) {
    std::fill(running.begin(), running.end(), false);
    double prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t a = reverse ? perm[n - 1 - k] : perm[k];
      running[a] = true;
      const double now = game.value(running);
      marginal[a] = now - prev;
      prev = now;
    }
  };
  for (int u = 0; u < units; ++u) {
    std::mt19937_64 engine = make_engine(seed, static_cast<std::uint64_t>(u));
    for (std::size_t j = 0; j < n; ++j) perm[j] = j;
    shuffle_in_place(perm, engine);
    walk(false);
    unit = marginal;
    int count = 1;
    if (2 * u + 1 < num_permutations) {
      walk(true);
      for (std::size_t j = 0; j < n; ++j) unit[j] += marginal[j];
      count = 2;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double x = unit[j] / count;
      sum[j] += x;
      sum_sq[j] += x * x;
    }
  }
  ShapleyReport r;
  r.layer_index = game.layer_index();
  r.method = ShapleyMethod::Sampled;
  r.permutations = num_permutations;
  r.seed = seed;
  r.scores.resize(n);
  r.std_err.assign(n, 0.0);
  r.grand_payoff = game.value(Coalition(n, true));
  const double m = static_cast<double>(units);
  for (std::size_t j = 0; j < n; ++j) {
    const double mean = sum[j] / m;
    r.scores[j] = mean;
    if (units > 1) {
      const double var = std::max(0.0, (sum_sq[j] - m * mean * mean) / (m - 1.0));
      r.std_err[j] = std::sqrt(var / m);
    }
  }
  return r;
}

struct ShapleyOptions {
  int exact_limit = kExactPlayerLimit;
  int permutations_per_channel = 200;
  std::uint64_t seed = 0;
};

// Exact enumeration up to the player limit, permutation sampling beyond it.
inline ShapleyReport estimate_shapley(const CharacteristicGame& game, const ShapleyOptions& opt) {
  if (game.players() <= opt.exact_limit) return exact_shapley(game, opt.exact_limit);
  const std::uint64_t seed = splitmix64(opt.seed ^ (0x51a9ULL + static_cast<std::uint64_t>(game.layer_index())));
  ShapleyReport r = sampled_shapley(game, opt.permutations_per_channel * game.players(), seed);
  return r;
}

// Per-channel network cost removed by deleting each channel of `layer`.
inline std::vector<double> channel_costs(const ModelGraph& model, int layer, ScoreNormalization mode) {
  const int c = out_channels(model, layer);
  if (mode == ScoreNormalization::None) return std::vector<double>(static_cast<std::size_t>(c), 1.0);
  const LayerCost delta = channel_removal_cost(model, layer);
  const double v = static_cast<double>(mode == ScoreNormalization::Flops ? delta.flops : delta.params);
  return std::vector<double>(static_cast<std::size_t>(c), v);
}

// Divides scores (and standard errors) by each channel's removal cost.
inline ShapleyReport normalize_scores(ShapleyReport report, ScoreNormalization mode,
                                      std::span<const double> channel_cost) {
  if (mode == ScoreNormalization::None) {
    report.normalization = mode;
    return report;
  }
  if (report.normalization != ScoreNormalization::None) {
    throw NormalizationError("report is already normalized");
  }
  if (channel_cost.size() != report.scores.size()) {
    throw DimensionError("normalize_scores: " + std::to_string(channel_cost.size()) +
                         " costs for " + std::to_string(report.scores.size()) + " channels");
  }
  for (std::size_t j = 0; j < report.scores.size(); ++j) {
    if (!(channel_cost[j] > 0.0)) {
      throw NormalizationError("channel " + std::to_string(j) + " of layer " +
                               std::to_string(report.layer_index) + " has zero removal cost");
    }
    report.scores[j] /= channel_cost[j];
    if (j < report.std_err.size()) report.std_err[j] /= channel_cost[j];
  }
  report.normalization = mode;
  return report;
}

}  // namespace chanprune
