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
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chanprune/core/error.hpp"
#include "chanprune/core/tensor.hpp"
#include "chanprune/engine/conv.hpp"

namespace chanprune {

inline Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

// `output` is the forward result; its positive entries pass gradient.
inline Tensor relu_backward(const Tensor& grad_out, const Tensor& output) {
  if (grad_out.shape() != output.shape()) {
    throw DimensionError("relu_backward: shape mismatch");
  }
  Tensor g(output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
inline Tensor maxpool2_forward(const Tensor& x) {
  require_rank(x, 4, "maxpool2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  if (h == 0 || w == 0) {
    throw DimensionError("maxpool2: spatial extent " + shape_str(x.shape()) + " too small");
  }
  Tensor y({n, c, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          y.at(b, ch, i, j) = std::max({x.at(b, ch, 2 * i, 2 * j), x.at(b, ch, 2 * i, 2 * j + 1),
                                        x.at(b, ch, 2 * i + 1, 2 * j),
                                        x.at(b, ch, 2 * i + 1, 2 * j + 1)});
        }
  return y;
}

// Routes each window's gradient to its first maximal input.
inline Tensor maxpool2_backward(const Tensor& grad_out, const Tensor& input) {
  require_rank(input, 4, "maxpool2_backward");
  Tensor g(input.shape());
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2),
                    w = grad_out.dim(3);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          std::size_t bi = 2 * i, bj = 2 * j;
          double best = input.at(b, ch, bi, bj);
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const double v = input.at(b, ch, 2 * i + di, 2 * j + dj);
              if (v > best) {
                best = v;
                bi = 2 * i + di;
                bj = 2 * j + dj;
              }
            }
          g.at(b, ch, bi, bj) += grad_out.at(b, ch, i, j);
        }
  return g;
}

inline Tensor global_avgpool_forward(const Tensor& x) {
  require_rank(x, 4, "global_avgpool");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({n, c, 1, 1});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = x.data().data() + (b * c + ch) * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      y[b * c + ch] = s / static_cast<double>(plane);
    }
  return y;
}

inline Tensor global_avgpool_backward(const Tensor& grad_out, const Shape& input_shape) {
  Tensor g(input_shape);
  const std::size_t n = input_shape[0], c = input_shape[1], plane = input_shape[2] * input_shape[3];
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = grad_out[b * c + ch] / static_cast<double>(plane);
      double* p = g.data().data() + (b * c + ch) * plane;
      std::fill(p, p + plane, v);
    }
  return g;
}

// y = x W^T + b with x: B x F, W: O x F.
inline Tensor dense_forward(const Tensor& x, const Tensor& weights, std::span<const double> bias) {
  require_rank(x, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  if (x.dim(1) != weights.dim(1)) {
    throw DimensionError("dense: feature axis 1 mismatch, input has " + std::to_string(x.dim(1)) +
                         ", weights expect " + std::to_string(weights.dim(1)));
  }
  const auto b = static_cast<Eigen::Index>(x.dim(0));
  const auto f = static_cast<Eigen::Index>(x.dim(1));
  const auto o = static_cast<Eigen::Index>(weights.dim(0));
  Tensor y({x.dim(0), weights.dim(0)});
  detail::RowMap ym(y.data().data(), b, o);
  ym.noalias() = detail::ConstRowMap(x.data().data(), b, f) *
                 detail::ConstRowMap(weights.data().data(), o, f).transpose();
  if (!bias.empty()) {
    for (Eigen::Index r = 0; r < b; ++r)
      for (Eigen::Index c = 0; c < o; ++c) ym(r, c) += bias[static_cast<std::size_t>(c)];
  }
  return y;
}

struct DenseGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

inline DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weights) {
  const auto b = static_cast<Eigen::Index>(x.dim(0));
  const auto f = static_cast<Eigen::Index>(x.dim(1));
  const auto o = static_cast<Eigen::Index>(weights.dim(0));
  if (grad_out.shape() != Shape{x.dim(0), weights.dim(0)}) {
    throw DimensionError("dense_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  DenseGrads g{Tensor(x.shape()), Tensor(weights.shape()), std::vector<double>(weights.dim(0))};
  const detail::ConstRowMap go(grad_out.data().data(), b, o);
  detail::RowMap(g.input.data().data(), b, f).noalias() =
      go * detail::ConstRowMap(weights.data().data(), o, f);
  detail::RowMap(g.weights.data().data(), o, f).noalias() =
      go.transpose() * detail::ConstRowMap(x.data().data(), b, f);
  for (Eigen::Index c = 0; c < o; ++c) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < b; ++r) s += go(r, c);
    g.bias[static_cast<std::size_t>(c)] = s;
  }
  return g;
}

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;
};

// Mean negative log-likelihood of a row-wise softmax; the gradient is
// (softmax - onehot) / B.
inline LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch axis 0 of " + std::to_string(b));
  }
  if (b == 0) throw InputError("softmax_cross_entropy: empty batch");
  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(c) + ")");
    }
    const double* row = logits.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - mx);
    const double log_z = std::log(z) + mx;
    r.loss += log_z - row[label];
    double* g = r.grad_logits.data().data() + i * c;
    for (std::size_t k = 0; k < c; ++k) g[k] = std::exp(row[k] - log_z) * inv_b;
    g[label] -= inv_b;
  }
  r.loss *= inv_b;
  return r;
}

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
inline void sgd_step(std::span<double> params, std::span<const double> grads,
                     std::span<double> velocity, const SgdOptions& opt) {
  if (!(opt.lr > 0.0)) throw InputError("sgd_step: learning rate must be > 0");
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw DimensionError("sgd_step: params/grads/velocity lengths " +
                         std::to_string(params.size()) + "/" + std::to_string(grads.size()) +
                         "/" + std::to_string(velocity.size()) + " differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = opt.momentum * velocity[i] + grads[i] + opt.weight_decay * params[i];
    params[i] -= opt.lr * velocity[i];
  }
}

}  // namespace chanprune
