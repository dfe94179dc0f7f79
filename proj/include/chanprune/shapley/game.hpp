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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/engine/ops.hpp"
#include "chanprune/model/forward.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

// Player membership bits; bit j set means channel j is in the coalition.
using Coalition = std::vector<bool>;

// Cooperative game over the channels of one layer. value(s) is the raw
// payoff shifted so that the empty coalition is worth exactly zero. Values
// are memoized per coalition; the game is not safe for concurrent use.
class CharacteristicGame {
 public:
  using Evaluator = std::function<double(const Coalition&)>;

  CharacteristicGame(int layer_index, int players, Evaluator evaluator)
      : state_(std::make_shared<State>()) {
    if (players < 1) throw InputError("game needs at least one player");
    state_->layer_index = layer_index;
    state_->players = players;
    state_->evaluator = std::move(evaluator);
    state_->baseline = state_->evaluator(Coalition(static_cast<std::size_t>(players), false));
    ++state_->evaluations;
  }

  int layer_index() const { return state_->layer_index; }
  int players() const { return state_->players; }
  double baseline() const { return state_->baseline; }
  std::size_t evaluations() const { return state_->evaluations; }

  double value(const Coalition& s) const {
    if (s.size() != static_cast<std::size_t>(state_->players)) {
      throw DimensionError("coalition has " + std::to_string(s.size()) + " bits, game has " +
                           std::to_string(state_->players) + " players");
    }
    const bool memo = state_->players <= 64;
    std::uint64_t key = 0;
    bool empty = true;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!s[j]) continue;
      empty = false;
      if (memo) key |= std::uint64_t{1} << j;
    }
    if (empty) return 0.0;
    if (memo) {
      auto it = state_->cache.find(key);
      if (it != state_->cache.end()) return it->second;
    }
    const double v = state_->evaluator(s) - state_->baseline;
    ++state_->evaluations;
    if (memo) state_->cache.emplace(key, v);
    return v;
  }

  double value_of_mask(std::uint64_t bits) const {
    Coalition s(static_cast<std::size_t>(state_->players));
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = (bits >> j) & 1U;
    return value(s);
  }

 private:
  struct State {
    int layer_index = 0;
    int players = 0;
    Evaluator evaluator;
    double baseline = 0.0;
    std::size_t evaluations = 0;
    std::unordered_map<std::uint64_t, double> cache;
  };
  std::shared_ptr<State> state_;
};

// Game whose payoff is the probe cross-entropy reduction relative to masking
// every channel of `layer`: e(s) = L(empty) - L(s), where L(s) is the mean
// loss with the channels outside s masked.
inline CharacteristicGame make_game(const ModelGraph& model, int layer, const Tensor& images,
                                    std::span<const int> labels) {
  if (images.rank() != 4 || images.dim(0) == 0 || labels.empty()) {
    throw InputError("make_game: empty probe");
  }
  if (labels.size() != images.dim(0)) throw DimensionError("make_game: label count mismatch");
  if (layer < 0 || layer >= static_cast<int>(model.layers.size()) ||
      !is_conv(model.layers[static_cast<std::size_t>(layer)].spec.kind)) {
    throw InputError("make_game: layer " + std::to_string(layer) + " is not convolutional");
  }
  struct Context {
    std::shared_ptr<const ModelGraph> model;
    Tensor images;
    std::vector<int> labels;
    std::size_t layer = 0;
    Tensor unmasked;                // the layer's own output
    std::vector<Tensor> workspace;  // outputs, rewritten from `layer` on
    MaskIndex masks;
    std::vector<bool> bits;
  };
  auto ctx = std::make_shared<Context>();
  ctx->model = std::make_shared<const ModelGraph>(model);
  ctx->images = images;
  ctx->labels.assign(labels.begin(), labels.end());
  ctx->layer = static_cast<std::size_t>(layer);
  ctx->workspace = forward_all(*ctx->model, ctx->images);
  ctx->unmasked = ctx->workspace[ctx->layer];
  ctx->masks.assign(model.layers.size(), nullptr);
  const int players = out_channels(model, layer);
  auto evaluator = [ctx](const Coalition& s) {
    Tensor& out = ctx->workspace[ctx->layer];
    out = ctx->unmasked;
    ctx->bits.assign(s.begin(), s.end());
    detail::apply_channel_mask(out, ctx->bits);
    forward_range(*ctx->model, ctx->images, ctx->workspace, ctx->layer + 1, ctx->masks);
    return -softmax_cross_entropy(ctx->workspace.back(), ctx->labels).loss;
  };
  return CharacteristicGame(layer, players, std::move(evaluator));
}

}  // namespace chanprune
