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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/model/graph.hpp"

namespace chanprune {

// Checkpoint layout (all integers little-endian):
//   8 bytes   magic "CHPRCKPT"
//   u32       format version (kCheckpointVersion)
//   u64       length of the graph text in bytes
//   ...       graph text (see graph_to_text)
//   ...       for every conv/proj/dense layer in order: weight then bias as
//             raw little-endian IEEE-754 binary64 values
inline constexpr char kCheckpointMagic[8] = {'C', 'H', 'P', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint truncated");
  std::array<unsigned char, sizeof(T)> bits;
  std::memcpy(bits.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace detail

// Graph text block, one record per line:
//   arch <name>
//   seed <u64>
//   input <channels> <height> <width>
//   layers <count>
//   <kind> in=<int> out=<int> k=<int> s=<int> p=<int> inputs=<i>[,<j>]
inline std::string graph_to_text(const ModelGraph& model) {
  std::ostringstream os;
  os << "arch " << model.arch_name << "\n";
  os << "seed " << model.seed << "\n";
  os << "input " << model.input.channels << " " << model.input.height << " "
     << model.input.width << "\n";
  os << "layers " << model.layers.size() << "\n";
  for (const Layer& l : model.layers) {
    const LayerSpec& s = l.spec;
    os << to_string(s.kind) << " in=" << s.in_channels << " out=" << s.out_channels
       << " k=" << s.kernel << " s=" << s.stride << " p=" << s.padding << " inputs=";
    for (std::size_t i = 0; i < s.inputs.size(); ++i) os << (i ? "," : "") << s.inputs[i];
    os << "\n";
  }
  return os.str();
}

inline ModelGraph graph_from_text(const std::string& text) {
  std::istringstream is(text);
  ModelGraph m;
  std::string key;
  std::size_t count = 0;
  if (!(is >> key) || key != "arch" || !(is >> m.arch_name)) throw FormatError("graph: missing arch");
  if (!(is >> key) || key != "seed" || !(is >> m.seed)) throw FormatError("graph: missing seed");
  if (!(is >> key) || key != "input" ||
      !(is >> m.input.channels >> m.input.height >> m.input.width)) {
    throw FormatError("graph: missing input shape");
  }
  if (!(is >> key) || key != "layers" || !(is >> count)) throw FormatError("graph: missing layer count");
  for (std::size_t i = 0; i < count; ++i) {
    std::string kind, in, out, k, s, p, inputs;
    if (!(is >> kind >> in >> out >> k >> s >> p >> inputs)) {
      throw FormatError("graph: truncated layer record " + std::to_string(i));
    }
    auto field = [&](const std::string& tok, const std::string& name) {
      if (tok.rfind(name + "=", 0) != 0) throw FormatError("graph: expected field " + name);
      return tok.substr(name.size() + 1);
    };
    LayerSpec spec;
    try {
      spec.kind = layer_kind_from_string(kind);
      spec.in_channels = std::stoi(field(in, "in"));
      spec.out_channels = std::stoi(field(out, "out"));
      spec.kernel = std::stoi(field(k, "k"));
      spec.stride = std::stoi(field(s, "s"));
      spec.padding = std::stoi(field(p, "p"));
      std::istringstream list(field(inputs, "inputs"));
      std::string item;
      while (std::getline(list, item, ',')) spec.inputs.push_back(std::stoi(item));
    } catch (const std::logic_error&) {
      throw FormatError("graph: malformed layer record " + std::to_string(i));
    }
    m.layers.push_back(Layer{spec, {}, {}});
  }
  return m;
}

inline std::string serialize_checkpoint(const ModelGraph& model) {
  validate(model);
  const std::string text = graph_to_text(model);
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const Layer& l : model.layers) {
    if (!has_params(l.spec.kind)) continue;
    for (double v : l.weight.values()) detail::put_le(out, v);
    for (double v : l.bias.values()) detail::put_le(out, v);
  }
  return out;
}

inline ModelGraph deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto text_len = detail::get_le<std::uint64_t>(bytes, pos);
  if (text_len > bytes.size() - pos) throw FormatError("checkpoint truncated in graph text");
  ModelGraph m = graph_from_text(bytes.substr(pos, text_len));
  pos += text_len;
  try {
    infer_shapes(m);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint graph invalid: ") + e.what());
  }
  for (Layer& l : m.layers) {
    const LayerSpec& s = l.spec;
    Shape ws;
    if (is_conv(s.kind)) {
      ws = {static_cast<std::size_t>(s.out_channels), static_cast<std::size_t>(s.in_channels),
            static_cast<std::size_t>(s.kernel), static_cast<std::size_t>(s.kernel)};
    } else if (s.kind == LayerKind::Dense) {
      ws = {static_cast<std::size_t>(s.out_channels), static_cast<std::size_t>(s.in_channels)};
    } else {
      continue;
    }
    const std::size_t need = (shape_size(ws) + static_cast<std::size_t>(s.out_channels)) * 8;
    if (need > bytes.size() - pos) throw FormatError("checkpoint truncated in weight blobs");
    l.weight = Tensor(ws);
    for (double& v : l.weight.values()) v = detail::get_le<double>(bytes, pos);
    l.bias = Tensor({static_cast<std::size_t>(s.out_channels)});
    for (double& v : l.bias.values()) v = detail::get_le<double>(bytes, pos);
  }
  if (pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  validate(m);
  return m;
}

inline void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize_checkpoint(model));
}

inline ModelGraph load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file(path));
}

}  // namespace chanprune
