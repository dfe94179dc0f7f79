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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "chanprune/data/dataset.hpp"

using namespace chanprune;

TEST(Synth, ShapesLabelsAndDeterminism) {
  const LabeledImageSet a = synth_blobs(4, 5, 8, 0.3, 1, 3);
  EXPECT_EQ(a.images.shape(), (Shape{20, 3, 8, 8}));
  EXPECT_EQ(a.class_count, 4);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), c), 5);
  const LabeledImageSet b = synth_blobs(4, 5, 8, 0.3, 1, 3);
  EXPECT_EQ(a.images, b.images);
  EXPECT_NE(a.images, synth_blobs(4, 5, 8, 0.3, 2, 3).images);
}

TEST(Synth, NoiselessImagesOfOneClassAreIdentical) {
  const LabeledImageSet s = synth_blobs(3, 4, 6, 0.0, 3, 2);
  const std::size_t per = 2 * 6 * 6;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool same = std::equal(s.images.values().begin() + static_cast<std::ptrdiff_t>(i * per),
                                   s.images.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * per),
                                   s.images.values().begin() + static_cast<std::ptrdiff_t>(j * per));
      EXPECT_EQ(same, s.labels[i] == s.labels[j]);
    }
}

TEST(Split, StratifiedAndDisjoint) {
  const LabeledImageSet s = synth_blobs(5, 10, 6, 0.5, 4);
  const TrainValidationSplit sp = split_train_validation(s, 0.2, 8);
  EXPECT_EQ(sp.train.size() + sp.validation.size(), s.size());
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(std::count(sp.validation.labels.begin(), sp.validation.labels.end(), c), 2);
    EXPECT_EQ(std::count(sp.train.labels.begin(), sp.train.labels.end(), c), 8);
  }
  EXPECT_THROW(split_train_validation(s, 1.0, 8), InputError);
}

TEST(Probe, BatchesAreDisjoint) {
  const LabeledImageSet s = synth_blobs(4, 50, 6, 0.5, 4);
  const auto batches = sample_probe_batches(s, 16, 5, 3);
  ASSERT_EQ(batches.size(), 5u);
  std::set<std::size_t> seen;
  for (const ProbeBatch& b : batches) {
    EXPECT_EQ(b.images.dim(0), 16u);
    for (std::size_t i : b.indices) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_THROW(sample_probe_batches(s, 64, 4, 3), InputError);
  const ProbeBatch all = concat_batches(batches);
  EXPECT_EQ(all.images.dim(0), 80u);
  EXPECT_EQ(all.labels.size(), 80u);
}

TEST(RawFormat, RoundTripAndHeader) {
  const LabeledImageSet s = synth_blobs(3, 2, 4, 0.0, 1, 1);
  const auto path = std::filesystem::temp_directory_path() / "chanprune_raw_test.bin";
  write_raw_images(s, path);
  EXPECT_EQ(std::filesystem::file_size(path), 4 + 5 * 4 + s.images.size() * 4 + s.size() * 4);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "LIMG");
  in.close();
  const LabeledImageSet back = read_raw_images(path);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.class_count, 3);
  for (std::size_t i = 0; i < s.images.size(); ++i)
    EXPECT_EQ(back.images[i], static_cast<double>(static_cast<float>(s.images[i])));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
  EXPECT_THROW(read_raw_images(path), FormatError);
  std::filesystem::remove(path);
}
