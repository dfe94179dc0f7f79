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
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/tensor.hpp"

namespace chanprune {

enum class LayerKind {
  Conv,           // k x k convolution on the main path
  Projection,     // 1 x 1 strided convolution on a residual skip path
  ReLU,
  MaxPool,        // 2 x 2, stride 2
  GlobalAvgPool,
  Flatten,
  Dense,
  Add,            // residual add of two inputs
};

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Projection: return "proj";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Add: return "add";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  static const std::map<std::string, LayerKind> kinds{
      {"conv", LayerKind::Conv},       {"proj", LayerKind::Projection},
      {"relu", LayerKind::ReLU},       {"maxpool", LayerKind::MaxPool},
      {"gap", LayerKind::GlobalAvgPool}, {"flatten", LayerKind::Flatten},
      {"dense", LayerKind::Dense},     {"add", LayerKind::Add}};
  auto it = kinds.find(s);
  if (it == kinds.end()) throw FormatError("unknown layer kind '" + s + "'");
  return it->second;
}

inline bool is_conv(LayerKind k) { return k == LayerKind::Conv || k == LayerKind::Projection; }
inline bool has_params(LayerKind k) { return is_conv(k) || k == LayerKind::Dense; }

// Index of the network input in LayerSpec::inputs.
inline constexpr int kNetworkInput = -1;

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::vector<int> inputs;  // producer layer indices, kNetworkInput for the image
  int in_channels = 0;      // conv: input channels; dense: input features
  int out_channels = 0;     // conv: filters; dense: output features
  int kernel = 0;
  int stride = 1;
  int padding = 0;

  bool operator==(const LayerSpec&) const = default;
};

// Weights: conv Cout x Cin x K x K, dense Out x In; bias has Cout entries.
struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;

  bool operator==(const Layer&) const = default;
};

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  bool operator==(const ImageShape&) const = default;
};

// Ordered layer list; layer i may only read from layers < i. The last layer
// produces the logits.
struct ModelGraph {
  std::string arch_name;
  ImageShape input;
  std::uint64_t seed = 0;
  std::vector<Layer> layers;

  bool operator==(const ModelGraph&) const = default;
};

// Channel keep bits for one convolutional layer (true = kept).
struct ChannelMask {
  int layer_index = 0;
  std::vector<bool> bits;

  int kept() const { return static_cast<int>(std::count(bits.begin(), bits.end(), true)); }
  int pruned() const { return static_cast<int>(bits.size()) - kept(); }
};

inline ChannelMask full_mask(int layer_index, int channels) {
  return ChannelMask{layer_index, std::vector<bool>(static_cast<std::size_t>(channels), true)};
}

// Per-sample activation extent of one layer's output.
struct ActShape {
  int channels = 0;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
  bool operator==(const ActShape&) const = default;
};

// Infers every layer's output shape and checks channel consistency.
inline std::vector<ActShape> infer_shapes(const std::vector<LayerSpec>& specs, ImageShape input) {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0) {
    throw ConfigError("model input shape must be positive");
  }
  const ActShape image{input.channels, input.height, input.width};
  std::vector<ActShape> shapes;
  shapes.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(s.kind) + ")";
    const std::size_t want_inputs = s.kind == LayerKind::Add ? 2 : 1;
    if (s.inputs.size() != want_inputs) {
      throw ConfigError(where + ": expected " + std::to_string(want_inputs) + " inputs");
    }
    std::vector<ActShape> in;
    for (int src : s.inputs) {
      if (src != kNetworkInput && (src < 0 || src >= static_cast<int>(i))) {
        throw ConfigError(where + ": input " + std::to_string(src) + " is not an earlier layer");
      }
      in.push_back(src == kNetworkInput ? image : shapes[static_cast<std::size_t>(src)]);
    }
    ActShape out = in[0];
    switch (s.kind) {
      case LayerKind::Conv:
      case LayerKind::Projection: {
        if (in[0].channels != s.in_channels) {
          throw DimensionError(where + ": expects " + std::to_string(s.in_channels) +
                               " input channels, producer has " + std::to_string(in[0].channels));
        }
        if (s.kernel < 1 || s.stride < 1 || s.padding < 0 || s.out_channels < 1) {
          throw ConfigError(where + ": invalid kernel/stride/padding/out_channels");
        }
        const int ph = in[0].height + 2 * s.padding, pw = in[0].width + 2 * s.padding;
        if (s.kernel > ph || s.kernel > pw) {
          throw ConfigError(where + ": kernel larger than padded input");
        }
        out = {s.out_channels, (ph - s.kernel) / s.stride + 1, (pw - s.kernel) / s.stride + 1};
        break;
      }
      case LayerKind::ReLU: break;
      case LayerKind::MaxPool:
        if (in[0].height < 2 || in[0].width < 2) {
          throw ConfigError(where + ": input " + std::to_string(in[0].height) + "x" +
                            std::to_string(in[0].width) + " too small for 2x2 pooling");
        }
        out = {in[0].channels, in[0].height / 2, in[0].width / 2};
        break;
      case LayerKind::GlobalAvgPool: out = {in[0].channels, 1, 1}; break;
      case LayerKind::Flatten: out = {in[0].size(), 1, 1}; break;
      case LayerKind::Dense:
        if (in[0].height != 1 || in[0].width != 1) {
          throw ConfigError(where + ": dense layer needs a flattened input");
        }
        if (in[0].channels != s.in_channels) {
          throw DimensionError(where + ": expects " + std::to_string(s.in_channels) +
                               " input features, producer has " + std::to_string(in[0].channels));
        }
        out = {s.out_channels, 1, 1};
        break;
      case LayerKind::Add:
        if (!(in[0] == in[1])) {
          throw DimensionError(where + ": residual operands differ in channels or extent");
        }
        break;
    }
    shapes.push_back(out);
  }
  return shapes;
}

inline std::vector<LayerSpec> specs_of(const ModelGraph& model) {
  std::vector<LayerSpec> specs;
  specs.reserve(model.layers.size());
  for (const auto& l : model.layers) specs.push_back(l.spec);
  return specs;
}

inline std::vector<ActShape> infer_shapes(const ModelGraph& model) {
  return infer_shapes(specs_of(model), model.input);
}

// Full structural check including weight tensor extents.
inline void validate(const ModelGraph& model) {
  if (model.layers.empty()) throw ConfigError("model has no layers");
  infer_shapes(model);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    const LayerSpec& s = l.spec;
    Shape want_w, want_b;
    if (is_conv(s.kind)) {
      want_w = {static_cast<std::size_t>(s.out_channels), static_cast<std::size_t>(s.in_channels),
                static_cast<std::size_t>(s.kernel), static_cast<std::size_t>(s.kernel)};
      want_b = {static_cast<std::size_t>(s.out_channels)};
    } else if (s.kind == LayerKind::Dense) {
      want_w = {static_cast<std::size_t>(s.out_channels), static_cast<std::size_t>(s.in_channels)};
      want_b = {static_cast<std::size_t>(s.out_channels)};
    }
    if (l.weight.shape() != want_w || l.bias.shape() != want_b) {
      throw DimensionError("layer " + std::to_string(i) + ": weight/bias shapes " +
                           shape_str(l.weight.shape()) + "/" + shape_str(l.bias.shape()) +
                           " do not match spec " + shape_str(want_w));
    }
  }
  if (model.layers.back().spec.kind != LayerKind::Dense) {
    throw ConfigError("last layer must be the dense classifier");
  }
}

inline std::vector<int> conv_layers(const ModelGraph& model, bool include_projection = false) {
  std::vector<int> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerKind k = model.layers[i].spec.kind;
    if (k == LayerKind::Conv || (include_projection && k == LayerKind::Projection)) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

inline std::vector<std::vector<int>> consumers_of(const std::vector<LayerSpec>& specs) {
  std::vector<std::vector<int>> users(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (int src : specs[i].inputs)
      if (src != kNetworkInput) users[static_cast<std::size_t>(src)].push_back(static_cast<int>(i));
  return users;
}

// A layer whose input slice disappears when a channel upstream is removed.
// `block` is the number of consecutive input features per channel (1 for a
// convolution, H*W for a dense layer behind a flatten).
struct ChannelConsumer {
  int layer = 0;
  int block = 1;
};

// Consumers reached from conv layer `layer` through channel-preserving layers.
// Reaching a residual add means the channel space is coupled; returns nullopt.
inline std::optional<std::vector<ChannelConsumer>> channel_consumers(
    const std::vector<LayerSpec>& specs, ImageShape input, int layer) {
  const auto shapes = infer_shapes(specs, input);
  const auto users = consumers_of(specs);
  std::vector<ChannelConsumer> found;
  std::vector<std::pair<int, int>> stack{{layer, 1}};  // (node, features per channel)
  std::set<int> seen;
  while (!stack.empty()) {
    auto [node, block] = stack.back();
    stack.pop_back();
    for (int u : users[static_cast<std::size_t>(node)]) {
      const LayerSpec& s = specs[static_cast<std::size_t>(u)];
      switch (s.kind) {
        case LayerKind::Conv:
        case LayerKind::Projection:
        case LayerKind::Dense:
          found.push_back({u, block});
          break;
        case LayerKind::Add: return std::nullopt;
        case LayerKind::Flatten: {
          const ActShape& in = shapes[static_cast<std::size_t>(node)];
          if (seen.insert(u).second) stack.push_back({u, block * in.height * in.width});
          break;
        }
        default:
          if (seen.insert(u).second) stack.push_back({u, block});
      }
    }
  }
  std::sort(found.begin(), found.end(),
            [](const ChannelConsumer& a, const ChannelConsumer& b) { return a.layer < b.layer; });
  return found;
}

// Conv layers whose output channels are tied to `layer`'s through residual
// adds (including `layer` itself). Empty when the layer is not coupled.
inline std::vector<int> coupling_group(const ModelGraph& model, int layer) {
  const auto& L = model.layers;
  const std::size_t n = L.size();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    }
    return x;
  };
  std::vector<bool> has_add(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerKind k = L[i].spec.kind;
    if (k == LayerKind::ReLU || k == LayerKind::MaxPool || k == LayerKind::GlobalAvgPool ||
        k == LayerKind::Add) {
      for (int src : L[i].spec.inputs) {
        if (src == kNetworkInput) continue;
        parent[static_cast<std::size_t>(find(src))] = find(static_cast<int>(i));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (L[i].spec.kind == LayerKind::Add) has_add[static_cast<std::size_t>(find(static_cast<int>(i)))] = true;
  const int root = find(layer);
  if (!has_add[static_cast<std::size_t>(root)]) return {};
  std::vector<int> group;
  for (std::size_t i = 0; i < n; ++i)
    if (is_conv(L[i].spec.kind) && find(static_cast<int>(i)) == root) group.push_back(static_cast<int>(i));
  return group;
}

// Conv layers whose channels can be removed individually: main-path
// convolutions not tied to a residual add.
inline std::vector<int> prunable_layers(const ModelGraph& model) {
  std::vector<int> out;
  for (int i : conv_layers(model)) {
    if (coupling_group(model, i).empty()) out.push_back(i);
  }
  return out;
}

inline bool is_prunable(const ModelGraph& model, int layer) {
  if (layer < 0 || layer >= static_cast<int>(model.layers.size())) return false;
  return model.layers[static_cast<std::size_t>(layer)].spec.kind == LayerKind::Conv &&
         coupling_group(model, layer).empty();
}

inline int out_channels(const ModelGraph& model, int layer) {
  return model.layers.at(static_cast<std::size_t>(layer)).spec.out_channels;
}

// Node whose output is reported as the layer's activation: the ReLU directly
// applied to the conv when there is exactly one such consumer, else the conv.
inline int activation_node(const ModelGraph& model, int layer) {
  const auto users = consumers_of(specs_of(model));
  const auto& u = users[static_cast<std::size_t>(layer)];
  if (u.size() == 1 && model.layers[static_cast<std::size_t>(u[0])].spec.kind == LayerKind::ReLU) {
    return u[0];
  }
  return layer;
}

}  // namespace chanprune
