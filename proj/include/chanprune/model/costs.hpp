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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

struct LayerCost {
  int layer = 0;
  std::int64_t flops = 0;   // multiply-accumulates
  std::int64_t params = 0;
};

struct CostProfile {
  std::vector<LayerCost> layers;  // one entry per graph layer
  std::int64_t total_flops = 0;
  std::int64_t total_params = 0;

  bool operator==(const CostProfile&) const = default;
};

// FLOPs are counted as MACs: conv k^2*Cin*Cout*Hout*Wout, dense In*Out.
// Params: conv k^2*Cin*Cout + Cout, dense In*Out + Out.
inline CostProfile count_costs(const std::vector<LayerSpec>& specs, ImageShape input) {
  const auto shapes = infer_shapes(specs, input);
  CostProfile p;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    LayerCost c{static_cast<int>(i), 0, 0};
    if (is_conv(s.kind)) {
      const std::int64_t k2 = static_cast<std::int64_t>(s.kernel) * s.kernel;
      const std::int64_t weights = k2 * s.in_channels * s.out_channels;
      c.flops = weights * shapes[i].height * shapes[i].width;
      c.params = weights + s.out_channels;
    } else if (s.kind == LayerKind::Dense) {
      const std::int64_t weights = static_cast<std::int64_t>(s.in_channels) * s.out_channels;
      c.flops = weights;
      c.params = weights + s.out_channels;
    }
    p.total_flops += c.flops;
    p.total_params += c.params;
    p.layers.push_back(c);
  }
  return p;
}

inline CostProfile count_costs(const ModelGraph& model, ImageShape input) {
  return count_costs(specs_of(model), input);
}

inline CostProfile count_costs(const ModelGraph& model) { return count_costs(model, model.input); }

// Spec list after shrinking conv `layer` to `width` output channels, with the
// matching input slices removed from its consumers.
inline std::vector<LayerSpec> with_layer_width(std::vector<LayerSpec> specs, ImageShape input,
                                               int layer, int width) {
  LayerSpec& s = specs.at(static_cast<std::size_t>(layer));
  const int removed = s.out_channels - width;
  if (removed == 0) return specs;
  if (width < 1) {
    throw DegenerateLayerError("layer " + std::to_string(layer) + " would have no channels left");
  }
  const auto consumers = channel_consumers(specs, input, layer);
  if (!consumers) {
    throw CouplingError("layer " + std::to_string(layer) + " feeds a residual add");
  }
  s.out_channels = width;
  for (const ChannelConsumer& c : *consumers) {
    specs[static_cast<std::size_t>(c.layer)].in_channels -= removed * c.block;
  }
  return specs;
}

// Kept fraction of total FLOPs and params when each listed layer keeps the
// given number of channels.
struct KeptFractions {
  double flops = 1.0;
  double params = 1.0;
};

inline KeptFractions kept_fractions(const ModelGraph& model, std::span<const int> layers,
                                    std::span<const int> keep) {
  const CostProfile base = count_costs(model);
  std::vector<LayerSpec> specs = specs_of(model);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    specs = with_layer_width(std::move(specs), model.input, layers[i], keep[i]);
  }
  const CostProfile now = count_costs(specs, model.input);
  return {static_cast<double>(now.total_flops) / static_cast<double>(base.total_flops),
          static_cast<double>(now.total_params) / static_cast<double>(base.total_params)};
}

// Network-wide cost removed by structurally deleting one output channel of
// `layer`. Identical for every channel of the layer.
inline LayerCost channel_removal_cost(const ModelGraph& model, int layer) {
  const std::vector<LayerSpec> specs = specs_of(model);
  const CostProfile before = count_costs(specs, model.input);
  const CostProfile after = count_costs(
      with_layer_width(specs, model.input, layer, out_channels(model, layer) - 1), model.input);
  return {layer, before.total_flops - after.total_flops, before.total_params - after.total_params};
}

}  // namespace chanprune
