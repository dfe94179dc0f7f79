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
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/parallel.hpp"
#include "chanprune/core/tensor.hpp"
#include "chanprune/data/dataset.hpp"
#include "chanprune/engine/svd.hpp"
#include "chanprune/model/forward.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

// Machine epsilon; the numerical-rank threshold is
// rel_tol * sigma_max * max(h, w).
inline constexpr double kDefaultRankTolerance = std::numeric_limits<double>::epsilon();

struct LayerInfoStats {
  int layer_index = 0;
  double avg_rank = 0.0;     // per channel, per image
  double avg_entropy = 0.0;  // nats per channel
  double rank_scaled = 0.0;
  double entropy_scaled = 0.0;
  double fusion = 0.0;
};

inline int channel_rank(const Tensor& feature_map, double rel_tol = kDefaultRankTolerance) {
  require_rank(feature_map, 2, "channel_rank");
  const std::vector<double> sigma = svd_singular_values(feature_map);
  if (sigma.empty() || sigma[0] == 0.0) return 0;
  const double threshold =
      rel_tol * sigma[0] * static_cast<double>(std::max(feature_map.dim(0), feature_map.dim(1)));
  return static_cast<int>(std::count_if(sigma.begin(), sigma.end(),
                                        [&](double s) { return s > threshold; }));
}

// Sum of numerical ranks over every (image, channel) map of a B x C x H x W
// activation tensor.
inline double sum_channel_ranks(const Tensor& acts, double rel_tol) {
  require_rank(acts, 4, "layer_average_rank");
  const std::size_t maps = acts.dim(0) * acts.dim(1);
  const std::size_t h = acts.dim(2), w = acts.dim(3), plane = h * w;
  std::vector<int> ranks(maps);
  parallel::for_each_index(maps, [&](std::size_t k) {
    Tensor map({h, w});
    std::copy_n(acts.data().begin() + static_cast<std::ptrdiff_t>(k * plane), plane,
                map.data().begin());
    ranks[k] = channel_rank(map, rel_tol);
  });
  double total = 0.0;
  for (int r : ranks) total += r;
  return total;
}

// Mean numerical rank per image and per channel: sum / (B * C).
inline double layer_average_rank(const Tensor& acts, double rel_tol = kDefaultRankTolerance) {
  require_rank(acts, 4, "layer_average_rank");
  if (acts.dim(0) == 0) throw InputError("layer_average_rank: empty batch");
  return sum_channel_ranks(acts, rel_tol) / static_cast<double>(acts.dim(0) * acts.dim(1));
}

// Channel means over batch and spatial axes.
inline std::vector<double> channel_means(const Tensor& acts) {
  require_rank(acts, 4, "channel_means");
  const std::size_t n = acts.dim(0), c = acts.dim(1), plane = acts.dim(2) * acts.dim(3);
  std::vector<double> mean(c, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = acts.data().data() + (b * c + ch) * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      mean[ch] += s;
    }
  for (double& m : mean) m /= static_cast<double>(n * plane);
  return mean;
}

// Entropy of the channel softmax of channel means, divided by the channel
// count: -(sum_j p_j ln p_j) / C.
inline double entropy_of_means(std::span<const double> means) {
  if (means.empty()) throw InputError("layer_entropy: no channels");
  const double mx = *std::max_element(means.begin(), means.end());
  double z = 0.0;
  for (double m : means) z += std::exp(m - mx);
  const double log_z = std::log(z);
  double h = 0.0;
  for (double m : means) {
    const double log_p = m - mx - log_z;
    const double p = std::exp(log_p);
    if (p > 0.0) h -= p * log_p;
  }
  return h / static_cast<double>(means.size());
}

inline double layer_entropy(const Tensor& acts) {
  if (acts.rank() == 4 && acts.dim(0) == 0) throw InputError("layer_entropy: empty batch");
  return entropy_of_means(channel_means(acts));
}

// Affine map sending min -> l and max -> m; a constant input maps to the
// midpoint (l + m) / 2.
inline std::vector<double> minmax_scale(std::span<const double> values, double l, double m) {
  if (values.empty()) throw InputError("minmax_scale: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(values.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 0.5 * (l + m));
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == lo) out[i] = l;
    else if (values[i] == hi) out[i] = m;
    else out[i] = (m - l) * (values[i] - lo) / (hi - lo) + l;
  }
  return out;
}

// Scales rank and entropy across layers to [l, m], multiplies them and
// rescales the products to [l, m].
inline std::vector<LayerInfoStats> fuse(std::vector<LayerInfoStats> stats, double l = 1.0,
                                        double m = 10.0) {
  if (stats.empty()) throw InputError("fuse: no layers");
  if (!(l < m)) throw InputError("fuse: scaling range needs l < m");
  std::vector<double> ranks, entropies;
  for (const auto& s : stats) {
    ranks.push_back(s.avg_rank);
    entropies.push_back(s.avg_entropy);
  }
  const auto rs = minmax_scale(ranks, l, m);
  const auto es = minmax_scale(entropies, l, m);
  std::vector<double> products(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) products[i] = rs[i] * es[i];
  const auto fused = minmax_scale(products, l, m);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    stats[i].rank_scaled = rs[i];
    stats[i].entropy_scaled = es[i];
    stats[i].fusion = fused[i];
  }
  return stats;
}

// Activations of the requested conv layers for one batch of images.
inline std::vector<Tensor> layer_activations(const ModelGraph& model, const Tensor& images,
                                             std::span<const int> layers) {
  const std::vector<Tensor> outputs = forward_all(model, images);
  std::vector<Tensor> acts;
  for (int layer : layers) {
    acts.push_back(outputs[static_cast<std::size_t>(activation_node(model, layer))]);
  }
  return acts;
}

// Raw rank/entropy per layer over all probe images (scaled fields unset).
inline std::vector<LayerInfoStats> measure_layers(const ModelGraph& model,
                                                  std::span<const ProbeBatch> batches,
                                                  std::span<const int> layers,
                                                  double rel_tol = kDefaultRankTolerance) {
  if (batches.empty()) throw InputError("measure_layers: no probe batches");
  std::vector<double> rank_sum(layers.size(), 0.0), images(layers.size(), 0.0);
  std::vector<std::vector<double>> mean_sum(layers.size());
  std::vector<double> samples(layers.size(), 0.0);
  for (const ProbeBatch& batch : batches) {
    const auto acts = layer_activations(model, batch.images, layers);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      rank_sum[i] += sum_channel_ranks(acts[i], rel_tol);
      images[i] += static_cast<double>(acts[i].dim(0));
      const auto means = channel_means(acts[i]);
      if (mean_sum[i].empty()) mean_sum[i].assign(means.size(), 0.0);
      for (std::size_t j = 0; j < means.size(); ++j) {
        mean_sum[i][j] += means[j] * static_cast<double>(acts[i].dim(0));
      }
    }
  }
  std::vector<LayerInfoStats> stats;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const double c = static_cast<double>(mean_sum[i].size());
    for (double& v : mean_sum[i]) v /= images[i];
    stats.push_back({layers[i], rank_sum[i] / (images[i] * c), entropy_of_means(mean_sum[i])});
  }
  return stats;
}

// Layer x batch table of average rank and entropy, plus the per-layer
// relative spread (max - min) / mean across batches.
struct StabilityReport {
  std::vector<int> layers;
  std::vector<std::vector<double>> rank;     // [layer][batch]
  std::vector<std::vector<double>> entropy;  // [layer][batch]
  std::vector<double> rank_spread;
  std::vector<double> entropy_spread;
};

inline double relative_spread(std::span<const double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi == *lo) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (mean == 0.0) return std::numeric_limits<double>::infinity();
  return (*hi - *lo) / std::abs(mean);
}

inline StabilityReport stability_report(const ModelGraph& model, std::span<const ProbeBatch> batches,
                                        std::span<const int> layers,
                                        double rel_tol = kDefaultRankTolerance) {
  if (batches.size() < 2) throw InputError("stability_report: need at least 2 batches");
  StabilityReport r;
  r.layers.assign(layers.begin(), layers.end());
  r.rank.assign(layers.size(), {});
  r.entropy.assign(layers.size(), {});
  for (const ProbeBatch& batch : batches) {
    const auto acts = layer_activations(model, batch.images, layers);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      r.rank[i].push_back(layer_average_rank(acts[i], rel_tol));
      r.entropy[i].push_back(layer_entropy(acts[i]));
    }
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    r.rank_spread.push_back(relative_spread(r.rank[i]));
    r.entropy_spread.push_back(relative_spread(r.entropy[i]));
  }
  return r;
}

}  // namespace chanprune
