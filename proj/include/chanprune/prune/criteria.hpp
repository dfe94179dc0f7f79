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
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/rng.hpp"
#include "chanprune/data/dataset.hpp"
#include "chanprune/info/concentration.hpp"
#include "chanprune/model/graph.hpp"
#include "chanprune/shapley/shapley.hpp"

namespace chanprune {

// Channel importance criteria. Lower score means less important.
enum class Criterion { Shapley, Random, L2, Rank };

inline const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::Shapley: return "shapley";
    case Criterion::Random: return "random";
    case Criterion::L2: return "l2";
    case Criterion::Rank: return "rank";
  }
  return "?";
}

inline Criterion criterion_from_string(const std::string& s) {
  if (s == "shapley") return Criterion::Shapley;
  if (s == "random") return Criterion::Random;
  if (s == "l2") return Criterion::L2;
  if (s == "rank") return Criterion::Rank;
  throw ConfigError("unknown criterion '" + s + "' (expected shapley, random, l2 or rank)");
}

// Per-layer channel scores keyed by layer index.
using ScoreTable = std::map<int, std::vector<double>>;

// Scores for every output channel of one layer of the given model.
using LayerScorer = std::function<std::vector<double>(const ModelGraph&, int layer)>;

// Positions of the `count` lowest scores; equal scores put the lower index first.
inline std::vector<int> lowest_channels(std::span<const double> scores, int count) {
  if (count < 0 || count > static_cast<int>(scores.size())) {
    throw InputError("lowest_channels: cannot select " + std::to_string(count) + " of " +
                     std::to_string(scores.size()) + " channels");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  return order;
}

// Keep-mask that drops the `count` least important channels.
inline ChannelMask prune_lowest(int layer, std::span<const double> scores, int count) {
  ChannelMask mask = full_mask(layer, static_cast<int>(scores.size()));
  for (int j : lowest_channels(scores, count)) mask.bits[static_cast<std::size_t>(j)] = false;
  return mask;
}

inline ScoreTable score_layers(const ModelGraph& model, std::span<const int> layers,
                               const LayerScorer& scorer) {
  ScoreTable table;
  for (int layer : layers) table[layer] = scorer(model, layer);
  return table;
}

// L2 norm of each filter's weights.
inline LayerScorer l2_scorer() {
  return [](const ModelGraph& model, int layer) {
    const Tensor& w = model.layers.at(static_cast<std::size_t>(layer)).weight;
    const std::size_t c = w.dim(0), per = w.size() / c;
    std::vector<double> s(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < per; ++k) sq += w[j * per + k] * w[j * per + k];
      s[j] = std::sqrt(sq);
    }
    return s;
  };
}

// Uniform scores depending only on (seed, layer, channel count).
inline LayerScorer random_scorer(std::uint64_t seed) {
  return [seed](const ModelGraph& model, int layer) {
    const int c = out_channels(model, layer);
    auto engine = make_engine(seed, (static_cast<std::uint64_t>(layer) << 32) | static_cast<std::uint32_t>(c));
    std::vector<double> s(static_cast<std::size_t>(c));
    for (double& v : s) v = uniform_draw(engine);
    return s;
  };
}

// Mean numerical rank of each channel's feature maps over the probe images.
inline LayerScorer rank_scorer(ProbeBatch probe, double rel_tol = kDefaultRankTolerance) {
  return [probe = std::move(probe), rel_tol](const ModelGraph& model, int layer) {
    const std::vector<int> one{layer};
    const Tensor acts = layer_activations(model, probe.images, one)[0];
    const std::size_t n = acts.dim(0), c = acts.dim(1), h = acts.dim(2), w = acts.dim(3);
    std::vector<double> s(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        Tensor map({h, w});
        std::copy_n(acts.values().begin() + static_cast<std::ptrdiff_t>(((i * c) + j) * h * w), h * w,
                    map.values().begin());
        s[j] += channel_rank(map, rel_tol);
      }
    }
    for (double& v : s) v /= static_cast<double>(n);
    return s;
  };
}

// Shapley values of each channel under the probe-loss game.
inline LayerScorer shapley_scorer(ProbeBatch probe, ShapleyOptions options) {
  return [probe = std::move(probe), options](const ModelGraph& model, int layer) {
    const CharacteristicGame game = make_game(model, layer, probe.images, probe.labels);
    return estimate_shapley(game, options).scores;
  };
}

struct ScorerOptions {
  ProbeBatch probe;
  ShapleyOptions shapley;
  std::uint64_t random_seed = 0;
  double rel_tol = kDefaultRankTolerance;
};

inline LayerScorer make_scorer(Criterion criterion, const ScorerOptions& opt) {
  switch (criterion) {
    case Criterion::Shapley: return shapley_scorer(opt.probe, opt.shapley);
    case Criterion::Random: return random_scorer(opt.random_seed);
    case Criterion::L2: return l2_scorer();
    case Criterion::Rank: return rank_scorer(opt.probe, opt.rel_tol);
  }
  throw ConfigError("unknown criterion");
}

}  // namespace chanprune
