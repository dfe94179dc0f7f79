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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chanprune/core/error.hpp"
#include "chanprune/core/parallel.hpp"
#include "chanprune/core/tensor.hpp"

namespace chanprune {

struct Conv2dGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t out_plane() const { return out_h * out_w; }
};

inline Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& weights, int stride,
                                      int padding) {
  if (input.size() != 4) {
    throw DimensionError("conv2d: input must be BxCxHxW, got " + shape_str(input));
  }
  if (weights.size() != 4) {
    throw DimensionError("conv2d: weights must be CoutxCinxKxK, got " + shape_str(weights));
  }
  if (weights[2] != weights[3]) {
    throw DimensionError("conv2d: kernel axes 2 and 3 differ (" + shape_str(weights) + ")");
  }
  if (weights[1] != input[1]) {
    throw DimensionError("conv2d: channel axis 1 mismatch, input has " +
                         std::to_string(input[1]) + " channels, weights expect " +
                         std::to_string(weights[1]));
  }
  if (stride < 1) throw InputError("conv2d: stride must be >= 1");
  if (padding < 0) throw InputError("conv2d: padding must be >= 0");
  Conv2dGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = weights[0];
  g.kernel = weights[2];
  g.stride = static_cast<std::size_t>(stride);
  g.padding = static_cast<std::size_t>(padding);
  if (g.kernel == 0 || g.kernel > g.in_h + 2 * g.padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) +
                         " exceeds padded height (axis 2)");
  }
  if (g.kernel > g.in_w + 2 * g.padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) +
                         " exceeds padded width (axis 3)");
  }
  g.out_h = (g.in_h + 2 * g.padding - g.kernel) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.padding - g.kernel) / g.stride + 1;
  return g;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Samples per gradient-accumulation chunk. Fixed so that summation order is
// independent of the thread count.
inline constexpr std::size_t kGradChunk = 16;

// Unfolds one image (C x H x W) into a (C*K*K) x (OH*OW) matrix.
inline void im2col(const double* image, const Conv2dGeometry& g, double* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* plane = image + c * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw, ++row) {
        double* dst = col + row * g.out_plane();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - pad;
          double* out_row = dst + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(out_row, out_row + g.out_w, 0.0);
            continue;
          }
          const double* in_row = plane + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - pad;
            out_row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w))
                              ? 0.0
                              : in_row[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into the image.
inline void col2im(const double* col, const Conv2dGeometry& g, double* image) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* plane = image + c * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw, ++row) {
        const double* src = col + row * g.out_plane();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          double* in_row = plane + static_cast<std::size_t>(ih) * g.in_w;
          const double* col_row = src + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - pad;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            in_row[static_cast<std::size_t>(iw)] += col_row[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

// What conv2d_backward needs from the forward call.
struct Conv2dCache {
  std::optional<Tensor> input;
  std::optional<Tensor> weights;
  int stride = 1;
  int padding = 0;
};

// Cross-correlation (no kernel flip). `bias` may be empty.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                             std::span<const double> bias, int stride, int padding,
                             Conv2dCache* cache = nullptr) {
  const Conv2dGeometry g = conv2d_geometry(input.shape(), weights.shape(), stride, padding);
  if (!bias.empty() && bias.size() != g.out_channels) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match output channels (axis 0) " +
                         std::to_string(g.out_channels));
  }
  Tensor out({g.batch, g.out_channels, g.out_h, g.out_w});
  const detail::ConstRowMap w(weights.data().data(), static_cast<Eigen::Index>(g.out_channels),
                              static_cast<Eigen::Index>(g.patch()));
  const std::size_t in_step = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_step = g.out_channels * g.out_plane();
  parallel::for_each_index(g.batch, [&](std::size_t b) {
    std::vector<double> col(g.patch() * g.out_plane());
    detail::im2col(input.data().data() + b * in_step, g, col.data());
    const detail::ConstRowMap cm(col.data(), static_cast<Eigen::Index>(g.patch()),
                                 static_cast<Eigen::Index>(g.out_plane()));
    detail::RowMap o(out.data().data() + b * out_step, static_cast<Eigen::Index>(g.out_channels),
                     static_cast<Eigen::Index>(g.out_plane()));
    o.noalias() = w * cm;
    if (!bias.empty()) {
      for (std::size_t c = 0; c < g.out_channels; ++c) {
        o.row(static_cast<Eigen::Index>(c)).array() += bias[c];
      }
    }
  });
  if (cache) {
    cache->input = input;
    cache->weights = weights;
    cache->stride = stride;
    cache->padding = padding;
  }
  return out;
}

namespace detail {

inline Conv2dGrads conv2d_backward_impl(const Tensor& grad_out, const Tensor& input,
                                        const Tensor& weights, int stride, int padding,
                                        bool need_input_grad) {
  const Conv2dGeometry g = conv2d_geometry(input.shape(), weights.shape(), stride, padding);
  const Shape expected{g.batch, g.out_channels, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw DimensionError("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match forward output " + shape_str(expected));
  }
  Conv2dGrads grads;
  grads.weights = Tensor(weights.shape());
  grads.bias.assign(g.out_channels, 0.0);
  if (need_input_grad) grads.input = Tensor(input.shape());

  const std::size_t in_step = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_step = g.out_channels * g.out_plane();
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto plane = static_cast<Eigen::Index>(g.out_plane());
  const ConstRowMap w(weights.data().data(), cout, patch);

  const std::size_t chunks = (g.batch + kGradChunk - 1) / kGradChunk;
  std::vector<RowMatrix> partial_w(chunks);
  std::vector<Eigen::VectorXd> partial_b(chunks);
  parallel::for_each_index(chunks, [&](std::size_t chunk) {
    RowMatrix gw = RowMatrix::Zero(cout, patch);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(cout);
    std::vector<double> col(g.patch() * g.out_plane());
    RowMatrix gcol;
    const std::size_t end = std::min(g.batch, (chunk + 1) * kGradChunk);
    for (std::size_t b = chunk * kGradChunk; b < end; ++b) {
      const ConstRowMap go(grad_out.data().data() + b * out_step, cout, plane);
      detail::im2col(input.data().data() + b * in_step, g, col.data());
      const ConstRowMap cm(col.data(), patch, plane);
      gw.noalias() += go * cm.transpose();
      gb += go.rowwise().sum();
      if (need_input_grad) {
        gcol.noalias() = w.transpose() * go;
        detail::col2im(gcol.data(), g, grads.input.data().data() + b * in_step);
      }
    }
    partial_w[chunk] = std::move(gw);
    partial_b[chunk] = std::move(gb);
  });
  RowMap gw_total(grads.weights.data().data(), cout, patch);
  for (std::size_t c = 0; c < chunks; ++c) {
    gw_total += partial_w[c];
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      grads.bias[o] += partial_b[c][static_cast<Eigen::Index>(o)];
    }
  }
  return grads;
}

}  // namespace detail

// Exact gradients of conv2d_forward with respect to input, weights and bias.
inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Conv2dCache& cache) {
  if (!cache.input || !cache.weights) {
    throw StateError("conv2d_backward: no forward cache (call conv2d_forward with a cache first)");
  }
  return detail::conv2d_backward_impl(grad_out, *cache.input, *cache.weights, cache.stride,
                                      cache.padding, true);
}

}  // namespace chanprune
