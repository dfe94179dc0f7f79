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
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/model/forward.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

namespace detail {

inline std::string join_ints(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

// Keeps rows of `t` along axis 0 (block size = product of trailing extents).
inline Tensor keep_filters(const Tensor& t, const std::vector<bool>& bits) {
  const std::size_t block = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) data.insert(data.end(), t.data().begin() + static_cast<std::ptrdiff_t>(i * block),
                             t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * block));
  return Tensor(std::move(shape), std::move(data));
}

// Keeps input slices along axis 1; each input channel spans `group`
// consecutive axis-1 entries.
inline Tensor keep_inputs(const Tensor& t, const std::vector<bool>& bits, std::size_t group) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  const std::size_t inner = t.size() / (rows * cols);
  Shape shape = t.shape();
  const std::size_t kept = static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
  shape[1] = kept * group;
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < bits.size(); ++ch) {
      if (!bits[ch]) continue;
      const auto begin = t.data().begin() +
                         static_cast<std::ptrdiff_t>((r * cols + ch * group) * inner);
      data.insert(data.end(), begin, begin + static_cast<std::ptrdiff_t>(group * inner));
    }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace detail

// Physically removes masked channels: the filter (and bias) of every dropped
// channel and the matching input slice of each consumer. The result computes
// the same logits as masked_forward on the original.
inline ModelGraph rewrite_model(const ModelGraph& model, std::span<const ChannelMask> masks) {
  index_masks(model, masks);
  ModelGraph out = model;
  for (const ChannelMask& mask : masks) {
    if (mask.pruned() == 0) continue;
    const int layer = mask.layer_index;
    if (mask.kept() == 0) {
      throw DegenerateLayerError("cannot remove all " + std::to_string(mask.bits.size()) +
                                 " channels of layer " + std::to_string(layer));
    }
    const auto group = coupling_group(out, layer);
    if (!group.empty()) {
      throw CouplingError("layer " + std::to_string(layer) +
                          " is coupled through residual adds with layers {" +
                          detail::join_ints(group) + "}; its channels cannot be removed alone");
    }
    const auto consumers = channel_consumers(specs_of(out), out.input, layer);
    Layer& producer = out.layers[static_cast<std::size_t>(layer)];
    producer.weight = detail::keep_filters(producer.weight, mask.bits);
    producer.bias = detail::keep_filters(producer.bias, mask.bits);
    producer.spec.out_channels = mask.kept();
    for (const ChannelConsumer& c : *consumers) {
      Layer& consumer = out.layers[static_cast<std::size_t>(c.layer)];
      consumer.weight =
          detail::keep_inputs(consumer.weight, mask.bits, static_cast<std::size_t>(c.block));
      consumer.spec.in_channels = static_cast<int>(consumer.weight.dim(1));
    }
  }
  validate(out);
  return out;
}

}  // namespace chanprune
