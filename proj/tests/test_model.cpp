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

#include <filesystem>
#include <random>

#include "arch_fixtures.hpp"
#include "chanprune/model/builders.hpp"
#include "chanprune/model/checkpoint.hpp"
#include "chanprune/model/costs.hpp"
#include "chanprune/model/forward.hpp"
#include "chanprune/model/rewrite.hpp"
#include "oracles.hpp"

using namespace chanprune;

namespace {

ModelGraph toy() { return build_plainnet({8, 8, 12, 12, 16, 16}, 10, {3, 12, 12}, 3); }

ChannelMask random_mask(int layer, int c, std::mt19937_64& rng) {
  ChannelMask m = full_mask(layer, c);
  for (std::size_t j = 0; j < m.bits.size(); ++j) m.bits[j] = rng() % 3 != 0;
  m.bits[rng() % m.bits.size()] = true;
  return m;
}

void randomize_biases(ModelGraph& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Layer& l : m.layers)
    for (double& v : l.bias.values()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
}

}  // namespace

TEST(Graph, PlainnetShapes) {
  const ModelGraph m = toy();
  const auto shapes = infer_shapes(m);
  EXPECT_EQ(conv_layers(m).size(), 6u);
  EXPECT_EQ(shapes.back().channels, 10);
  // Third conv sees the pooled 6x6 map.
  const int conv3 = conv_layers(m)[2];
  EXPECT_EQ(shapes[static_cast<std::size_t>(conv3)].height, 6);
  EXPECT_EQ(prunable_layers(m), conv_layers(m));
}

TEST(Graph, ResnetCouplingLeavesFirstConvOfEachBlock) {
  const ModelGraph m = build_resnet_mini({8, 16}, 2, 10, {3, 16, 16}, 1);
  EXPECT_EQ(conv_layers(m).size(), 9u);
  EXPECT_EQ(conv_layers(m, true).size(), 10u);
  const auto prunable = prunable_layers(m);
  EXPECT_EQ(prunable.size(), 4u);
  for (int l : prunable) {
    EXPECT_TRUE(coupling_group(m, l).empty());
    // The block's first conv feeds a ReLU and then the second conv only.
    EXPECT_EQ(m.layers[static_cast<std::size_t>(l + 2)].spec.kind, LayerKind::Conv);
  }
  EXPECT_FALSE(is_prunable(m, 0));
  EXPECT_FALSE(coupling_group(m, 0).empty());
}

TEST(Graph, ValidateRejectsMissingHead) {
  ModelGraph m = toy();
  m.layers.pop_back();
  EXPECT_THROW(validate(m), ConfigError);
  ModelGraph bad = toy();
  bad.layers[0].weight = Tensor({8, 3, 3, 2});
  EXPECT_THROW(validate(bad), DimensionError);
}

TEST(Builders, RejectDegenerateConfigs) {
  EXPECT_THROW(build_plainnet({8, 3}, 10, {3, 12, 12}, 1), ConfigError);
  EXPECT_THROW(build_plainnet({8, 8, 8, 8, 8, 8, 8, 8}, 10, {3, 8, 8}, 1), ConfigError);
  EXPECT_THROW(build_plainnet({8}, 1, {3, 8, 8}, 1), ConfigError);
  EXPECT_THROW(build_resnet_mini({8, 16}, 0, 10, {3, 8, 8}, 1), ConfigError);
}

TEST(Builders, SeededInitIsDeterministic) {
  EXPECT_EQ(serialize_checkpoint(toy()), serialize_checkpoint(toy()));
  EXPECT_NE(serialize_checkpoint(toy()), serialize_checkpoint(build_plainnet({8, 8, 12, 12, 16, 16}, 10, {3, 12, 12}, 4)));
}

TEST(Costs, SingleConvByHand) {
  const ModelGraph m = fixtures::single_conv();
  const CostProfile p = count_costs(m);
  EXPECT_EQ(p.layers[0].params, 4640);
  EXPECT_EQ(p.layers[0].flops, 9 * 16 * 32 * 64);
  EXPECT_EQ(p.layers[0].flops, 294912);
  EXPECT_EQ(p.layers[2].params, 2048 * 10 + 10);
}

TEST(Costs, FixedArchitecturesMatchHandTables) {
  for (const fixtures::Arch& a : fixtures::architectures()) {
    const CostProfile p = count_costs(a.model);
    EXPECT_EQ(p.total_flops, fixtures::hand_flops(a.table)) << a.name;
    EXPECT_EQ(p.total_params, fixtures::hand_params(a.table)) << a.name;
    if (a.expected_flops >= 0) {
      EXPECT_EQ(p.total_flops, a.expected_flops) << a.name;
    }
    if (a.expected_params >= 0) {
      EXPECT_EQ(p.total_params, a.expected_params) << a.name;
    }
  }
}

TEST(Costs, ChannelRemovalCostOfFirstToyConv) {
  const ModelGraph m = toy();
  const LayerCost d = channel_removal_cost(m, 0);
  // One filter of conv1 (27 weights + bias over 144 positions) and one input
  // channel of conv2 (9 weights per filter, 8 filters, 144 positions).
  EXPECT_EQ(d.params, 27 + 1 + 9 * 8);
  EXPECT_EQ(d.flops, 27 * 144 + 9 * 8 * 144);
}

TEST(Costs, WidthErrors) {
  const ModelGraph m = toy();
  EXPECT_THROW(with_layer_width(specs_of(m), m.input, 0, 0), DegenerateLayerError);
  const ModelGraph r = build_resnet_mini({8, 16}, 1, 10, {3, 8, 8}, 1);
  EXPECT_THROW(with_layer_width(specs_of(r), r.input, 0, 4), CouplingError);
}

TEST(Rewrite, MatchesMaskedForward) {
  std::mt19937_64 rng(11);
  ModelGraph m = toy();
  randomize_biases(m, 2);
  const Tensor x = oracle::random_tensor({4, 3, 12, 12}, rng);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ChannelMask> masks;
    for (int l : prunable_layers(m)) masks.push_back(random_mask(l, out_channels(m, l), rng));
    const Tensor masked = masked_forward(m, x, masks).logits;
    const ModelGraph small = rewrite_model(m, masks);
    const Tensor logits = forward(small, x);
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(logits[i], masked[i], 1e-9);
    for (const ChannelMask& mk : masks) EXPECT_EQ(out_channels(small, mk.layer_index), mk.kept());
  }
}

TEST(Rewrite, ResnetPrunableLayersMatchMaskedForward) {
  std::mt19937_64 rng(12);
  ModelGraph m = build_resnet_mini({8, 16}, 2, 10, {3, 16, 16}, 5);
  randomize_biases(m, 3);
  const Tensor x = oracle::random_tensor({3, 3, 16, 16}, rng);
  std::vector<ChannelMask> masks;
  for (int l : prunable_layers(m)) masks.push_back(random_mask(l, out_channels(m, l), rng));
  const Tensor masked = masked_forward(m, x, masks).logits;
  const Tensor logits = forward(rewrite_model(m, masks), x);
  for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(logits[i], masked[i], 1e-9);
}

TEST(Rewrite, Errors) {
  const ModelGraph m = toy();
  ChannelMask none(full_mask(0, 8));
  std::fill(none.bits.begin(), none.bits.end(), false);
  EXPECT_THROW(rewrite_model(m, std::vector<ChannelMask>{none}), DegenerateLayerError);
  const ModelGraph r = build_resnet_mini({8, 16}, 1, 10, {3, 8, 8}, 1);
  ChannelMask stem = full_mask(0, 8);
  stem.bits[3] = false;
  try {
    rewrite_model(r, std::vector<ChannelMask>{stem});
    FAIL();
  } catch (const CouplingError& e) {
    EXPECT_NE(std::string(e.what()).find('{'), std::string::npos) << e.what();
  }
  ChannelMask wrong = full_mask(0, 7);
  EXPECT_THROW(rewrite_model(m, std::vector<ChannelMask>{wrong}), DimensionError);
}

TEST(Forward, ZeroFilterMaskIsNoOp) {
  std::mt19937_64 rng(13);
  ModelGraph m = toy();
  for (std::size_t i = 0; i < 27; ++i) m.layers[0].weight[2 * 27 + i] = 0.0;
  m.layers[0].bias[2] = 0.0;
  const Tensor x = oracle::random_tensor({2, 3, 12, 12}, rng);
  ChannelMask mk = full_mask(0, 8);
  mk.bits[2] = false;
  EXPECT_EQ(masked_forward(m, x, std::vector<ChannelMask>{mk}).logits, forward(m, x));
}

TEST(Forward, MaskErrors) {
  const ModelGraph m = toy();
  const Tensor x({1, 3, 12, 12});
  EXPECT_THROW(masked_forward(m, x, std::vector<ChannelMask>{full_mask(1, 8)}), InputError);
  EXPECT_THROW(forward(m, Tensor({1, 3, 10, 12})), DimensionError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelGraph m = build_resnet_mini({8, 16}, 2, 10, {3, 16, 16}, 5);
  randomize_biases(m, 9);
  const std::string bytes = serialize_checkpoint(m);
  const ModelGraph back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.arch_name, m.arch_name);
  EXPECT_EQ(back.seed, m.seed);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].weight, m.layers[i].weight);
    EXPECT_EQ(back.layers[i].bias, m.layers[i].bias);
  }
  const auto path = std::filesystem::temp_directory_path() / "chanprune_ckpt_test.bin";
  save_checkpoint(m, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, TextBlockRoundTrip) {
  const ModelGraph m = build_resnet_mini({4, 8}, 1, 3, {2, 8, 8}, 1);
  const ModelGraph g = graph_from_text(graph_to_text(m));
  EXPECT_EQ(graph_to_text(g), graph_to_text(m));
  EXPECT_NE(graph_to_text(m).find("proj"), std::string::npos);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  const std::string bytes = serialize_checkpoint(toy());
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), FormatError);
  std::string wrong_version = bytes;
  wrong_version[8] = 2;
  EXPECT_THROW(deserialize_checkpoint(wrong_version), FormatError);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(wrong_magic), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), Error);
}
