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

// Finite-difference checks of every backward op. Each check draws a random
// case from its seed, differentiates L = sum(R * op(x)) for a random R, and
// returns the largest relative error against the analytic gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chanprune/engine/conv.hpp"
#include "chanprune/engine/ops.hpp"
#include "chanprune/model/builders.hpp"
#include "chanprune/model/forward.hpp"
#include "oracles.hpp"

namespace gradcheck {

using namespace chanprune;

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Max relative error between analytic[i] and d f / d values[i].
inline double compare(std::span<double> values, std::span<const double> analytic,
                      const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double numeric = oracle::central_diff(f, values[i]);
    worst = std::max(worst, oracle::rel_error(numeric, analytic[i]));
  }
  return worst;
}

inline double conv_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const std::size_t n = pick(1, 3), ci = pick(1, 3), co = pick(1, 3), h = pick(4, 6), w = pick(4, 6);
  const int k = pick(0, 1) ? 3 : 1, stride = pick(1, 2), pad = k == 3 ? pick(0, 1) : 0;
  Tensor x = oracle::random_tensor({n, ci, h, w}, rng);
  Tensor wt = oracle::random_tensor({co, ci, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
  std::vector<double> b = oracle::random_tensor({co}, rng).values();
  Conv2dCache cache;
  const Tensor y = conv2d_forward(x, wt, b, stride, pad, &cache);
  const Tensor r = oracle::random_tensor(y.shape(), rng);
  const Conv2dGrads g = conv2d_backward(r, cache);
  auto loss = [&] { return dot(r, conv2d_forward(x, wt, b, stride, pad)); };
  return std::max({compare(x.data(), g.input.data(), loss), compare(wt.data(), g.weights.data(), loss),
                   compare(b, g.bias, loss)});
}

inline double relu_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng);
  for (double& v : x.values())
    if (std::abs(v) < 0.05) v += v < 0 ? -0.05 : 0.05;  // keep clear of the kink
  const Tensor r = oracle::random_tensor(x.shape(), rng);
  const Tensor g = relu_backward(r, relu_forward(x));
  return compare(x.data(), g.data(), [&] { return dot(r, relu_forward(x)); });
}

inline double maxpool_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor x({2, 2, 6, 6});
  // A shuffled ramp: all entries differ by at least 0.01, so no ties within eps.
  std::vector<double> ramp(x.size());
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = -1.0 + 0.01 * static_cast<double>(i);
  std::shuffle(ramp.begin(), ramp.end(), rng);
  x.values() = ramp;
  const Tensor r = oracle::random_tensor(maxpool2_forward(x).shape(), rng);
  const Tensor g = maxpool2_backward(r, x);
  return compare(x.data(), g.data(), [&] { return dot(r, maxpool2_forward(x)); });
}

inline double gap_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor x = oracle::random_tensor({2, 3, 3, 5}, rng);
  const Tensor r = oracle::random_tensor({2, 3}, rng);
  const Tensor g = global_avgpool_backward(r, x.shape());
  return compare(x.data(), g.data(), [&] { return dot(r, global_avgpool_forward(x)); });
}

inline double dense_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor x = oracle::random_tensor({3, 5}, rng);
  Tensor w = oracle::random_tensor({4, 5}, rng);
  std::vector<double> b = oracle::random_tensor({4}, rng).values();
  const Tensor r = oracle::random_tensor({3, 4}, rng);
  const DenseGrads g = dense_backward(r, x, w);
  auto loss = [&] { return dot(r, dense_forward(x, w, b)); };
  return std::max({compare(x.data(), g.input.data(), loss), compare(w.data(), g.weights.data(), loss),
                   compare(b, g.bias, loss)});
}

inline double softmax_ce_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor z = oracle::random_tensor({4, 6}, rng, -3.0, 3.0);
  std::vector<int> labels(4);
  for (int& l : labels) l = std::uniform_int_distribution<int>(0, 5)(rng);
  const LossResult res = softmax_cross_entropy(z, labels);
  return compare(z.data(), res.grad_logits.data(), [&] { return softmax_cross_entropy(z, labels).loss; });
}

// Whole-graph backward on a small residual network (conv, projection, add,
// relu, gap, flatten, dense), checked on a sample of parameters and biases.
inline double network_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelGraph model = build_resnet_mini({4, 6}, 1, 3, {2, 6, 6}, seed);
  for (Layer& l : model.layers)
    for (double& v : l.bias.values()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  const Tensor x = oracle::random_tensor({2, 2, 6, 6}, rng);
  const std::vector<int> labels{0, 2};
  const auto outputs = forward_all(model, x);
  const LossResult res = softmax_cross_entropy(outputs.back(), labels);
  const Gradients g = backward(model, x, outputs, res.grad_logits);
  auto loss = [&] { return softmax_cross_entropy(forward(model, x), labels).loss; };
  double worst = 0.0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    Layer& l = model.layers[li];
    if (!has_params(l.spec.kind)) continue;
    const std::size_t stride = std::max<std::size_t>(1, l.weight.size() / 12);
    for (std::size_t i = 0; i < l.weight.size(); i += stride) {
      const double numeric = oracle::central_diff(loss, l.weight[i]);
      worst = std::max(worst, oracle::rel_error(numeric, g.weight[li][i]));
    }
    for (std::size_t i = 0; i < l.bias.size(); ++i) {
      const double numeric = oracle::central_diff(loss, l.bias[i]);
      worst = std::max(worst, oracle::rel_error(numeric, g.bias[li][i]));
    }
  }
  return worst;
}

struct OpCheck {
  std::string op;
  std::function<double(std::uint64_t)> run;
};

inline std::vector<OpCheck> all_ops() {
  return {{"conv2d", conv_case}, {"relu", relu_case},     {"maxpool2", maxpool_case},
          {"gap", gap_case},     {"dense", dense_case},   {"softmax_ce", softmax_ce_case},
          {"network", network_case}};
}

}  // namespace gradcheck
