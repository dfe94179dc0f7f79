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
#include <numeric>
#include <span>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/rng.hpp"
#include "chanprune/data/dataset.hpp"
#include "chanprune/engine/ops.hpp"
#include "chanprune/model/forward.hpp"
#include "chanprune/model/graph.hpp"
#include "chanprune/model/rewrite.hpp"

namespace chanprune {

// Step-decayed learning rate: initial * factor^(number of decay epochs <= epoch).
struct LrSchedule {
  double initial = 0.02;
  std::vector<int> decay_epochs;
  double decay_factor = 0.1;

  double at(int epoch) const {
    double lr = initial;
    for (int e : decay_epochs)
      if (epoch >= e) lr *= decay_factor;
    return lr;
  }
};

struct TrainOptions {
  int epochs = 0;
  std::size_t batch_size = 32;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline int argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.dim(1);
  const double* p = logits.data().data() + row * c;
  return static_cast<int>(std::max_element(p, p + c) - p);
}

// Top-1 accuracy and mean cross-entropy, evaluated in fixed-size chunks.
inline EvalResult evaluate(const ModelGraph& model, const LabeledImageSet& data,
                           std::size_t chunk = 256) {
  check_labeled_set(data);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const LabeledImageSet part = subset(data, idx, "eval");
    const Tensor logits = forward(model, part.images);
    loss_sum += softmax_cross_entropy(logits, part.labels).loss * static_cast<double>(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (argmax_row(logits, i) == part.labels[i]) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

// Momentum buffers shaped like the model's parameters.
struct SgdState {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static SgdState zeros_like(const ModelGraph& model) {
    SgdState s;
    for (const Layer& l : model.layers) {
      s.weight.emplace_back(l.weight.shape());
      s.bias.emplace_back(l.bias.shape());
    }
    return s;
  }
};

// Applies the same structural removal to the momentum buffers as to the model.
inline SgdState rewrite_state(const SgdState& state, const ModelGraph& model,
                              std::span<const ChannelMask> masks) {
  ModelGraph shadow = model;
  for (std::size_t i = 0; i < shadow.layers.size(); ++i) {
    shadow.layers[i].weight = state.weight[i];
    shadow.layers[i].bias = state.bias[i];
  }
  const ModelGraph moved = rewrite_model(shadow, masks);
  SgdState out;
  for (const Layer& l : moved.layers) {
    out.weight.push_back(l.weight);
    out.bias.push_back(l.bias);
  }
  return out;
}

// One forward/backward/SGD update on a minibatch. Returns the batch loss.
inline double train_step(ModelGraph& model, SgdState& state, const Tensor& images,
                         std::span<const int> labels, const SgdOptions& opt) {
  const std::vector<Tensor> outputs = forward_all(model, images);
  LossResult loss = softmax_cross_entropy(outputs.back(), labels);
  if (!std::isfinite(loss.loss)) throw NumericalError("training loss is not finite");
  const Gradients g = backward(model, images, outputs, loss.grad_logits);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer& l = model.layers[i];
    if (!has_params(l.spec.kind)) continue;
    sgd_step(l.weight.data(), g.weight[i].data(), state.weight[i].data(), opt);
    sgd_step(l.bias.data(), g.bias[i].data(), state.bias[i].data(), opt);
  }
  return loss.loss;
}

// Minibatch order for one epoch; depends only on (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 engine = make_engine(seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch));
  shuffle_in_place(order, engine);
  return order;
}

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over minibatches
};

using EpochCallback = std::function<void(const EpochStats&, const ModelGraph&)>;

// SGD with momentum and weight decay over `options.epochs` epochs; a fresh
// momentum state per call. Zero epochs leaves the model untouched.
inline std::vector<EpochStats> finetune(ModelGraph& model, const LabeledImageSet& data,
                                        const TrainOptions& options,
                                        const EpochCallback& on_epoch = {}) {
  if (options.epochs < 0) throw InputError("finetune: epochs must be >= 0");
  std::vector<EpochStats> history;
  if (options.epochs == 0) return history;
  check_labeled_set(data);
  if (options.batch_size == 0) throw InputError("finetune: batch size must be positive");
  SgdState state = SgdState::zeros_like(model);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const SgdOptions opt{options.lr.at(epoch), options.momentum, options.weight_decay};
    const auto order = epoch_order(data.size(), options.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const LabeledImageSet batch =
          subset(data, std::span(order).subspan(start, end - start), "batch");
      loss_sum += train_step(model, state, batch.images, batch.labels, opt);
      ++batches;
    }
    history.push_back({epoch, opt.lr, loss_sum / static_cast<double>(batches)});
    if (on_epoch) on_epoch(history.back(), model);
  }
  return history;
}

}  // namespace chanprune
