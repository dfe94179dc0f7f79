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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/rng.hpp"
#include "chanprune/core/tensor.hpp"
#include "chanprune/model/checkpoint.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

struct LabeledImageSet {
  Tensor images;            // N x C x H x W
  std::vector<int> labels;  // N entries in [0, class_count)
  int class_count = 0;
  std::string split_tag;

  std::size_t size() const { return labels.size(); }
  ImageShape shape() const {
    return {static_cast<int>(images.dim(1)), static_cast<int>(images.dim(2)),
            static_cast<int>(images.dim(3))};
  }
  bool operator==(const LabeledImageSet&) const = default;
};

inline void check_labeled_set(const LabeledImageSet& set) {
  if (set.images.rank() != 4) throw InputError("image set must be N x C x H x W");
  if (set.images.dim(0) != set.labels.size()) {
    throw DimensionError("image count " + std::to_string(set.images.dim(0)) + " != label count " +
                         std::to_string(set.labels.size()));
  }
  if (set.labels.empty()) throw InputError("image set is empty");
  for (int l : set.labels)
    if (l < 0 || l >= set.class_count) {
      throw InputError("label " + std::to_string(l) + " outside [0, " +
                       std::to_string(set.class_count) + ")");
    }
}

// Images and labels at `indices`, in that order.
inline LabeledImageSet subset(const LabeledImageSet& set, std::span<const std::size_t> indices,
                              std::string tag) {
  const std::size_t per = set.images.size() / set.images.dim(0);
  Shape shape = set.images.shape();
  shape[0] = indices.size();
  LabeledImageSet out{Tensor(shape), {}, set.class_count, std::move(tag)};
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= set.size()) throw InputError("subset index out of range");
    std::copy_n(set.images.data().begin() + static_cast<std::ptrdiff_t>(i * per), per,
                out.images.data().begin() + static_cast<std::ptrdiff_t>(k * per));
    out.labels.push_back(set.labels[i]);
  }
  return out;
}

namespace detail {

// Sum of signed Gaussian bumps per channel, scaled to unit RMS.
inline std::vector<double> bump_pattern(std::size_t channels, std::size_t s, int bumps,
                                        std::mt19937_64& engine) {
  std::vector<double> t(channels * s * s, 0.0);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (int b = 0; b < bumps; ++b) {
      const double cy = uniform_draw(engine) * static_cast<double>(s - 1);
      const double cx = uniform_draw(engine) * static_cast<double>(s - 1);
      const double width = (0.10 + 0.15 * uniform_draw(engine)) * static_cast<double>(s);
      const double sign = (engine() & 1U) ? 1.0 : -1.0;
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          t[(ch * s + y) * s + x] += sign * std::exp(-(dy * dy + dx * dx) / (2.0 * width * width));
        }
    }
  }
  double sq = 0.0;
  for (double v : t) sq += v * v;
  const double rms = std::sqrt(sq / static_cast<double>(t.size()));
  if (rms > 0.0)
    for (double& v : t) v /= rms;
  return t;
}

}  // namespace detail

// Relative amplitude of the class-specific pattern on top of the shared one.
inline constexpr double kSynthClassSeparation = 0.25;

// Class-conditional spatial patterns plus i.i.d. Gaussian pixel noise. All
// classes share one unit-RMS bump pattern; class c adds its own unit-RMS bump
// pattern scaled by kSynthClassSeparation. A sample is its class template plus
// noise_sigma * N(0, 1) per pixel. Samples are ordered class by class.
inline LabeledImageSet synth_blobs(int num_classes, int n_per_class, int image_size,
                                   double noise_sigma, std::uint64_t seed, int channels = 3) {
  if (num_classes < 2) throw InputError("synth_blobs: need at least 2 classes");
  if (n_per_class < 1 || image_size < 1 || channels < 1) {
    throw InputError("synth_blobs: counts and sizes must be positive");
  }
  if (noise_sigma < 0.0) throw InputError("synth_blobs: noise_sigma must be >= 0");
  const std::size_t c = static_cast<std::size_t>(channels), s = static_cast<std::size_t>(image_size);
  const std::size_t per = c * s * s;
  std::mt19937_64 tmpl_engine = make_engine(seed, 0x7e3);
  const std::vector<double> shared = detail::bump_pattern(c, s, 4, tmpl_engine);
  std::vector<std::vector<double>> templates;
  for (int cls = 0; cls < num_classes; ++cls) {
    std::vector<double> t = detail::bump_pattern(c, s, 3, tmpl_engine);
    for (std::size_t p = 0; p < per; ++p) t[p] = shared[p] + kSynthClassSeparation * t[p];
    templates.push_back(std::move(t));
  }
  const std::size_t n = static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(n_per_class);
  LabeledImageSet set{Tensor({n, c, s, s}), {}, num_classes, "synthetic"};
  set.labels.reserve(n);
  std::mt19937_64 noise_engine = make_engine(seed, 0x401);
  std::size_t i = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    for (int k = 0; k < n_per_class; ++k, ++i) {
      double* dst = set.images.data().data() + i * per;
      const auto& t = templates[static_cast<std::size_t>(cls)];
      for (std::size_t p = 0; p < per; ++p) dst[p] = t[p] + noise_sigma * normal_draw(noise_engine);
      set.labels.push_back(cls);
    }
  }
  return set;
}

struct TrainValidationSplit {
  LabeledImageSet train;
  LabeledImageSet validation;
};

// Stratified split: each class contributes round(val_fraction * count)
// samples to validation but always keeps at least one in training.
inline TrainValidationSplit split_train_validation(const LabeledImageSet& set, double val_fraction,
                                                   std::uint64_t seed) {
  check_labeled_set(set);
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InputError("validation fraction must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(set.class_count));
  for (std::size_t i = 0; i < set.size(); ++i) {
    by_class[static_cast<std::size_t>(set.labels[i])].push_back(i);
  }
  std::mt19937_64 engine = make_engine(seed, 0x5b1);
  std::vector<std::size_t> train, val;
  for (auto& idx : by_class) {
    if (idx.empty()) continue;
    shuffle_in_place(idx, engine);
    std::size_t nv = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    nv = std::min(nv, idx.size() - 1);
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {subset(set, train, "train"), subset(set, val, "validation")};
}

struct ProbeBatch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the source set
};

// Disjoint random batches of `batch_size` images each.
inline std::vector<ProbeBatch> sample_probe_batches(const LabeledImageSet& set, std::size_t batch_size,
                                                    std::size_t num_batches, std::uint64_t seed) {
  check_labeled_set(set);
  if (batch_size == 0 || num_batches == 0) throw InputError("probe batches must be non-empty");
  if (batch_size * num_batches > set.size()) {
    throw InputError("need " + std::to_string(batch_size * num_batches) +
                     " images for probe batches, set has " + std::to_string(set.size()));
  }
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 engine = make_engine(seed, 0x9b0);
  shuffle_in_place(order, engine);
  std::vector<ProbeBatch> batches;
  for (std::size_t b = 0; b < num_batches; ++b) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                                 order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
    LabeledImageSet part = subset(set, idx, "probe");
    batches.push_back({std::move(part.images), std::move(part.labels), std::move(idx)});
  }
  return batches;
}

// Concatenates probe batches into one (images, labels) pair.
inline ProbeBatch concat_batches(std::span<const ProbeBatch> batches) {
  if (batches.empty()) throw InputError("no probe batches");
  Shape shape = batches[0].images.shape();
  std::size_t total = 0;
  for (const auto& b : batches) total += b.images.dim(0);
  shape[0] = total;
  ProbeBatch out{Tensor(shape), {}, {}};
  std::size_t offset = 0;
  for (const auto& b : batches) {
    std::copy(b.images.data().begin(), b.images.data().end(),
              out.images.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += b.images.size();
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.indices.insert(out.indices.end(), b.indices.begin(), b.indices.end());
  }
  return out;
}

// Raw labeled-image format (little-endian):
//   4 bytes  magic "LIMG"
//   u32 x5   N, C, H, W, class_count
//   f32      N*C*H*W pixels, row-major N x C x H x W
//   i32      N labels
inline constexpr char kRawImageMagic[4] = {'L', 'I', 'M', 'G'};

inline void write_raw_images(const LabeledImageSet& set, const std::filesystem::path& path) {
  check_labeled_set(set);
  std::string out(kRawImageMagic, 4);
  for (std::size_t v : {set.images.dim(0), set.images.dim(1), set.images.dim(2), set.images.dim(3),
                        static_cast<std::size_t>(set.class_count)}) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  for (double v : set.images.values()) detail::put_le<float>(out, static_cast<float>(v));
  for (int l : set.labels) detail::put_le<std::int32_t>(out, l);
  detail::write_file(path, out);
}

inline LabeledImageSet read_raw_images(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kRawImageMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a raw labeled-image file (bad magic)");
  }
  std::size_t pos = 4;
  std::array<std::uint32_t, 5> h{};
  for (auto& v : h) v = detail::get_le<std::uint32_t>(bytes, pos);
  const std::size_t n = h[0], c = h[1], height = h[2], width = h[3];
  const std::size_t pixels = n * c * height * width;
  if (bytes.size() - pos != pixels * 4 + n * 4) {
    throw FormatError(path.string() + ": size does not match header");
  }
  LabeledImageSet set{Tensor({n, c, height, width}), std::vector<int>(n),
                      static_cast<int>(h[4]), path.filename().string()};
  for (double& v : set.images.values()) v = detail::get_le<float>(bytes, pos);
  for (int& l : set.labels) l = detail::get_le<std::int32_t>(bytes, pos);
  check_labeled_set(set);
  return set;
}

}  // namespace chanprune
