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

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/rng.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

namespace detail {

inline int append(ModelGraph& m, LayerSpec spec) {
  Layer layer;
  if (is_conv(spec.kind)) {
    layer.weight = Tensor({static_cast<std::size_t>(spec.out_channels),
                           static_cast<std::size_t>(spec.in_channels),
                           static_cast<std::size_t>(spec.kernel),
                           static_cast<std::size_t>(spec.kernel)});
    layer.bias = Tensor({static_cast<std::size_t>(spec.out_channels)});
  } else if (spec.kind == LayerKind::Dense) {
    layer.weight = Tensor({static_cast<std::size_t>(spec.out_channels),
                           static_cast<std::size_t>(spec.in_channels)});
    layer.bias = Tensor({static_cast<std::size_t>(spec.out_channels)});
  }
  layer.spec = std::move(spec);
  m.layers.push_back(std::move(layer));
  return static_cast<int>(m.layers.size()) - 1;
}

inline int conv(ModelGraph& m, int src, int in, int out, int kernel, int stride,
                LayerKind kind = LayerKind::Conv) {
  return append(m, LayerSpec{kind, {src}, in, out, kernel, stride, kernel / 2});
}

inline int unary(ModelGraph& m, LayerKind kind, int src) {
  return append(m, LayerSpec{kind, {src}});
}

}  // namespace detail

// Kaiming fan-in initialization: conv weights ~ N(0, 2/fan_in), dense weights
// ~ N(0, 1/fan_in), biases zero. Layers are filled in index order from one
// seeded stream.
inline void initialize_weights(ModelGraph& model, std::uint64_t seed) {
  std::mt19937_64 engine = make_engine(seed, 0x1417);
  for (Layer& layer : model.layers) {
    if (!has_params(layer.spec.kind)) continue;
    const double fan_in = static_cast<double>(layer.weight.size()) /
                          static_cast<double>(layer.spec.out_channels);
    const double gain = layer.spec.kind == LayerKind::Dense ? 1.0 : 2.0;
    const double std_dev = std::sqrt(gain / fan_in);
    for (double& w : layer.weight.values()) w = std_dev * normal_draw(engine);
    layer.bias.fill(0.0);
  }
  model.seed = seed;
}

// VGG-style stack: 3x3 conv + ReLU per width, a 2x2 max pool after every
// `pool_every` convs, then flatten and a dense classifier.
inline ModelGraph build_plainnet(const std::vector<int>& widths, int num_classes, ImageShape input,
                                 std::uint64_t seed, int pool_every = 2) {
  if (widths.empty()) throw ConfigError("plainnet: widths must be non-empty");
  for (int w : widths)
    if (w < 4) throw ConfigError("plainnet: every width must be >= 4, got " + std::to_string(w));
  if (num_classes < 2) throw ConfigError("plainnet: need at least 2 classes");
  if (pool_every < 1) throw ConfigError("plainnet: pool_every must be >= 1");
  const int pools = static_cast<int>(widths.size()) / pool_every;
  if ((input.height >> pools) < 1 || (input.width >> pools) < 1) {
    throw ConfigError("plainnet: input " + std::to_string(input.height) + "x" +
                      std::to_string(input.width) + " too small for " + std::to_string(pools) +
                      " pooling stages");
  }
  ModelGraph m;
  m.arch_name = "plainnet";
  m.input = input;
  int src = kNetworkInput;
  int channels = input.channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    src = detail::conv(m, src, channels, widths[i], 3, 1);
    src = detail::unary(m, LayerKind::ReLU, src);
    channels = widths[i];
    if ((static_cast<int>(i) + 1) % pool_every == 0) src = detail::unary(m, LayerKind::MaxPool, src);
  }
  src = detail::unary(m, LayerKind::Flatten, src);
  const auto shapes = infer_shapes(m);
  detail::append(m, LayerSpec{LayerKind::Dense, {src}, shapes.back().channels, num_classes});
  infer_shapes(m);
  initialize_weights(m, seed);
  return m;
}

// Residual network: stem conv, then per stage `blocks_per_stage` blocks of
// conv-ReLU-conv plus identity skip, ReLU after the add. The first block of
// every stage after the first halves the resolution with stride 2 and uses a
// 1x1 strided projection on the skip. Global average pool and a dense head
// close the network.
inline ModelGraph build_resnet_mini(const std::vector<int>& stage_widths, int blocks_per_stage,
                                    int num_classes, ImageShape input, std::uint64_t seed) {
  if (stage_widths.empty()) throw ConfigError("resnet_mini: stage_widths must be non-empty");
  for (int w : stage_widths)
    if (w < 4) throw ConfigError("resnet_mini: every stage width must be >= 4, got " + std::to_string(w));
  if (blocks_per_stage < 1) throw ConfigError("resnet_mini: blocks_per_stage must be >= 1");
  if (num_classes < 2) throw ConfigError("resnet_mini: need at least 2 classes");
  const int halvings = static_cast<int>(stage_widths.size()) - 1;
  if ((input.height >> halvings) < 1 || (input.width >> halvings) < 1) {
    throw ConfigError("resnet_mini: input too small for " + std::to_string(halvings) +
                      " stride-2 stages");
  }
  ModelGraph m;
  m.arch_name = "resnet_mini";
  m.input = input;
  int src = detail::conv(m, kNetworkInput, input.channels, stage_widths[0], 3, 1);
  src = detail::unary(m, LayerKind::ReLU, src);
  int channels = stage_widths[0];
  for (std::size_t s = 0; s < stage_widths.size(); ++s) {
    const int width = stage_widths[s];
    for (int b = 0; b < blocks_per_stage; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const int block_in = src;
      int x = detail::conv(m, block_in, channels, width, 3, stride);
      x = detail::unary(m, LayerKind::ReLU, x);
      x = detail::conv(m, x, width, width, 3, 1);
      int skip = block_in;
      if (stride != 1 || channels != width) {
        skip = detail::conv(m, block_in, channels, width, 1, stride, LayerKind::Projection);
      }
      const int sum = detail::append(m, LayerSpec{LayerKind::Add, {x, skip}});
      src = detail::unary(m, LayerKind::ReLU, sum);
      channels = width;
    }
  }
  src = detail::unary(m, LayerKind::GlobalAvgPool, src);
  src = detail::unary(m, LayerKind::Flatten, src);
  detail::append(m, LayerSpec{LayerKind::Dense, {src}, channels, num_classes});
  infer_shapes(m);
  initialize_weights(m, seed);
  return m;
}

}  // namespace chanprune
