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
#include "chanprune/core/tensor.hpp"
#include "chanprune/engine/conv.hpp"
#include "chanprune/engine/ops.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

// Per-layer view of a mask list (nullptr = layer unmasked).
using MaskIndex = std::vector<const std::vector<bool>*>;

inline MaskIndex index_masks(const ModelGraph& model, std::span<const ChannelMask> masks) {
  MaskIndex index(model.layers.size(), nullptr);
  for (const ChannelMask& m : masks) {
    if (m.layer_index < 0 || m.layer_index >= static_cast<int>(model.layers.size())) {
      throw InputError("mask references layer " + std::to_string(m.layer_index) +
                       " outside the model");
    }
    const LayerSpec& s = model.layers[static_cast<std::size_t>(m.layer_index)].spec;
    if (!is_conv(s.kind)) {
      throw InputError("mask references layer " + std::to_string(m.layer_index) +
                       " which is not convolutional");
    }
    if (m.bits.size() != static_cast<std::size_t>(s.out_channels)) {
      throw DimensionError("mask for layer " + std::to_string(m.layer_index) + " has " +
                           std::to_string(m.bits.size()) + " bits, layer has " +
                           std::to_string(s.out_channels) + " channels");
    }
    index[static_cast<std::size_t>(m.layer_index)] = &m.bits;
  }
  return index;
}

inline void check_input(const ModelGraph& model, const Tensor& input) {
  if (input.rank() != 4 || input.dim(1) != static_cast<std::size_t>(model.input.channels) ||
      input.dim(2) != static_cast<std::size_t>(model.input.height) ||
      input.dim(3) != static_cast<std::size_t>(model.input.width)) {
    throw DimensionError("model expects Bx" + std::to_string(model.input.channels) + "x" +
                         std::to_string(model.input.height) + "x" +
                         std::to_string(model.input.width) + " input, got " +
                         shape_str(input.shape()));
  }
}

namespace detail {

// Zeroes masked output channels, bias included.
inline void apply_channel_mask(Tensor& out, const std::vector<bool>& bits) {
  const std::size_t n = out.dim(0), c = out.dim(1), plane = out.dim(2) * out.dim(3);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      if (!bits[ch]) {
        double* p = out.data().data() + (b * c + ch) * plane;
        std::fill(p, p + plane, 0.0);
      }
}

inline Tensor layer_forward(const Layer& layer, const Tensor& x, const Tensor* y) {
  const LayerSpec& s = layer.spec;
  switch (s.kind) {
    case LayerKind::Conv:
    case LayerKind::Projection:
      return conv2d_forward(x, layer.weight, layer.bias.data(), s.stride, s.padding);
    case LayerKind::ReLU: return relu_forward(x);
    case LayerKind::MaxPool: return maxpool2_forward(x);
    case LayerKind::GlobalAvgPool: return global_avgpool_forward(x);
    case LayerKind::Flatten: {
      Tensor out = x;
      out.reshape({x.dim(0), x.size() / x.dim(0)});
      return out;
    }
    case LayerKind::Dense: return dense_forward(x, layer.weight, layer.bias.data());
    case LayerKind::Add: {
      Tensor out = x;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*y)[i];
      return out;
    }
  }
  throw StateError("unknown layer kind");
}

}  // namespace detail

// Recomputes layers [start, end) given outputs of earlier layers.
inline void forward_range(const ModelGraph& model, const Tensor& input, std::vector<Tensor>& outputs,
                          std::size_t start, const MaskIndex& masks) {
  outputs.resize(model.layers.size());
  for (std::size_t i = start; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    auto source = [&](int src) -> const Tensor& {
      return src == kNetworkInput ? input : outputs[static_cast<std::size_t>(src)];
    };
    const Tensor& x = source(layer.spec.inputs[0]);
    const Tensor* y = layer.spec.inputs.size() > 1 ? &source(layer.spec.inputs[1]) : nullptr;
    outputs[i] = detail::layer_forward(layer, x, y);
    if (masks[i]) detail::apply_channel_mask(outputs[i], *masks[i]);
  }
}

// Outputs of every layer; the last one holds the logits.
inline std::vector<Tensor> forward_all(const ModelGraph& model, const Tensor& input,
                                       std::span<const ChannelMask> masks = {}) {
  check_input(model, input);
  const MaskIndex index = index_masks(model, masks);
  std::vector<Tensor> outputs;
  forward_range(model, input, outputs, 0, index);
  return outputs;
}

inline Tensor forward(const ModelGraph& model, const Tensor& input) {
  return std::move(forward_all(model, input).back());
}

struct MaskedForwardResult {
  Tensor logits;
  std::vector<int> layers;          // conv layer indices, ascending
  std::vector<Tensor> activations;  // matching post-activation outputs
};

// Forward pass with masked channels contributing exactly zero downstream;
// records the activation of every convolutional layer.
inline MaskedForwardResult masked_forward(const ModelGraph& model, const Tensor& input,
                                          std::span<const ChannelMask> masks) {
  std::vector<Tensor> outputs = forward_all(model, input, masks);
  MaskedForwardResult r;
  for (int layer : conv_layers(model, true)) {
    r.layers.push_back(layer);
    r.activations.push_back(outputs[static_cast<std::size_t>(activation_node(model, layer))]);
  }
  r.logits = std::move(outputs.back());
  return r;
}

// Parameter gradients, one entry per layer (empty for parameter-free layers).
struct Gradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
};

// Backpropagates `grad_logits` through an unmasked forward pass.
inline Gradients backward(const ModelGraph& model, const Tensor& input,
                          const std::vector<Tensor>& outputs, const Tensor& grad_logits) {
  const std::size_t n = model.layers.size();
  if (outputs.size() != n) throw StateError("backward: forward outputs missing");
  Gradients grads{std::vector<Tensor>(n), std::vector<Tensor>(n)};
  std::vector<Tensor> grad(n);
  grad[n - 1] = grad_logits;
  auto accumulate = [&](int src, Tensor&& g) {
    if (src == kNetworkInput) return;
    Tensor& dst = grad[static_cast<std::size_t>(src)];
    if (dst.empty()) {
      dst = std::move(g);
    } else {
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
  };
  for (std::size_t ii = n; ii-- > 0;) {
    if (grad[ii].empty()) continue;
    const Layer& layer = model.layers[ii];
    const LayerSpec& s = layer.spec;
    const int src = s.inputs[0];
    const Tensor& x = src == kNetworkInput ? input : outputs[static_cast<std::size_t>(src)];
    const bool need_input = src != kNetworkInput;
    switch (s.kind) {
      case LayerKind::Conv:
      case LayerKind::Projection: {
        Conv2dGrads g = detail::conv2d_backward_impl(grad[ii], x, layer.weight, s.stride,
                                                     s.padding, need_input);
        grads.weight[ii] = std::move(g.weights);
        {
          const std::size_t nb = g.bias.size();
          grads.bias[ii] = Tensor({nb}, std::move(g.bias));
        }
        if (need_input) accumulate(src, std::move(g.input));
        break;
      }
      case LayerKind::ReLU: accumulate(src, relu_backward(grad[ii], outputs[ii])); break;
      case LayerKind::MaxPool: accumulate(src, maxpool2_backward(grad[ii], x)); break;
      case LayerKind::GlobalAvgPool:
        accumulate(src, global_avgpool_backward(grad[ii], x.shape()));
        break;
      case LayerKind::Flatten: {
        Tensor g = grad[ii];
        g.reshape(x.shape());
        accumulate(src, std::move(g));
        break;
      }
      case LayerKind::Dense: {
        DenseGrads g = dense_backward(grad[ii], x, layer.weight);
        grads.weight[ii] = std::move(g.weights);
        {
          const std::size_t nb = g.bias.size();
          grads.bias[ii] = Tensor({nb}, std::move(g.bias));
        }
        if (need_input) accumulate(src, std::move(g.input));
        break;
      }
      case LayerKind::Add:
        accumulate(s.inputs[1], Tensor(grad[ii]));
        accumulate(src, std::move(grad[ii]));
        break;
    }
    grad[ii] = Tensor();
  }
  return grads;
}

}  // namespace chanprune
