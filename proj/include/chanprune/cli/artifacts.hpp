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

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <type_traits>
#include <vector>

#include "chanprune/cli/config.hpp"
#include "chanprune/core/error.hpp"
#include "chanprune/info/allocation.hpp"
#include "chanprune/info/concentration.hpp"
#include "chanprune/prune/criteria.hpp"
#include "chanprune/prune/trace_io.hpp"
#include "chanprune/shapley/shapley.hpp"

namespace chanprune::cli {

// Shortest representation that parses back to the identical double.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string cell(const T& v) {
  if constexpr (std::is_floating_point_v<T>) return format_number(static_cast<double>(v));
  else if constexpr (std::is_arithmetic_v<T>) return std::to_string(v);
  else return std::string(v);
}

inline std::string seeds_line(const Seeds& s) {
  return "# seeds model=" + std::to_string(s.model) + " data=" + std::to_string(s.data) +
         " shapley=" + std::to_string(s.shapley);
}

inline Json seeds_json(const Seeds& s) {
  Json j;
  j["model"] = s.model;
  j["data"] = s.data;
  j["shapley"] = s.shapley;
  return j;
}

// CSV with a leading seed comment line and a header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const Seeds& seeds, const std::vector<std::string>& header)
      : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) throw InputError("cannot write '" + path.string() + "'");
    out_ << seeds_line(seeds) << '\n';
    write_cells(header);
  }

  template <class... Ts>
  void row(const Ts&... values) {
    static_assert(sizeof...(Ts) > 0);
    write_cells({cell(values)...});
  }

 private:
  void write_cells(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw StateError("CSV row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

  std::ofstream out_;
  std::size_t columns_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("CSV column '" + name + "' missing");
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw FormatError("'" + path.string() + "': row has " + std::to_string(cells.size()) +
                          " cells, header has " + std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw FormatError("'" + path.string() + "' has no header row");
  return t;
}

template <class T>
T parse_cell(const std::string& s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("cannot parse '" + s + "' as a number");
  return v;
}

// ---- layer statistics -------------------------------------------------------

inline void write_layer_stats(const std::filesystem::path& path, const Seeds& seeds,
                              const std::vector<LayerInfoStats>& stats, const std::vector<int>& channels,
                              const std::optional<PrunePlan>& plan) {
  CsvWriter w(path, seeds,
              {"layer", "channels", "avg_rank", "avg_entropy", "rank_scaled", "entropy_scaled", "fusion", "u_i"});
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const LayerInfoStats& s = stats[i];
    const std::string u = plan ? std::to_string(plan->prune_for(s.layer_index)) : std::string();
    w.row(s.layer_index, channels[i], s.avg_rank, s.avg_entropy, s.rank_scaled, s.entropy_scaled, s.fusion, u);
  }
}

struct LayerStatsFile {
  std::vector<LayerInfoStats> stats;
  std::vector<int> channels;
};

inline LayerStatsFile read_layer_stats(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cl = t.column("layer"), cc = t.column("channels"), cr = t.column("avg_rank"),
                    ce = t.column("avg_entropy"), crs = t.column("rank_scaled"),
                    ces = t.column("entropy_scaled"), cf = t.column("fusion");
  LayerStatsFile f;
  for (const auto& r : t.rows) {
    LayerInfoStats s;
    s.layer_index = parse_cell<int>(r[cl]);
    s.avg_rank = parse_cell<double>(r[cr]);
    s.avg_entropy = parse_cell<double>(r[ce]);
    s.rank_scaled = parse_cell<double>(r[crs]);
    s.entropy_scaled = parse_cell<double>(r[ces]);
    s.fusion = parse_cell<double>(r[cf]);
    f.stats.push_back(s);
    f.channels.push_back(parse_cell<int>(r[cc]));
  }
  if (f.stats.empty()) throw FormatError("'" + path.string() + "' has no layer rows");
  return f;
}

inline void write_stability(const std::filesystem::path& path, const Seeds& seeds, const StabilityReport& r) {
  CsvWriter w(path, seeds, {"layer", "batch", "avg_rank", "avg_entropy"});
  for (std::size_t i = 0; i < r.layers.size(); ++i)
    for (std::size_t b = 0; b < r.rank[i].size(); ++b) w.row(r.layers[i], b, r.rank[i][b], r.entropy[i][b]);
}

// ---- plans -----------------------------------------------------------------

inline Json plan_to_json(const PrunePlan& plan, const Seeds& seeds) {
  Json j;
  j["seeds"] = seeds_json(seeds);
  j["budget"] = {{"kind", to_string(plan.budget.kind)}, {"kept_fraction", plan.budget.kept_fraction}};
  j["r_max"] = plan.r_max;
  j["alpha"] = plan.alpha;
  j["achieved"] = plan.achieved;
  Json layers = Json::array();
  for (const LayerAllocation& a : plan.layers) {
    layers.push_back({{"layer", a.layer_index},
                      {"channels", a.channels},
                      {"fusion", a.fusion},
                      {"keep_ratio", a.keep_ratio},
                      {"keep", a.keep},
                      {"prune", a.prune}});
  }
  j["layers"] = std::move(layers);
  return j;
}

inline PrunePlan plan_from_json(const Json& j) {
  try {
    PrunePlan plan;
    plan.budget.kind = budget_kind_from_string(j.at("budget").at("kind").get<std::string>());
    plan.budget.kept_fraction = j.at("budget").at("kept_fraction").get<double>();
    plan.r_max = j.at("r_max").get<double>();
    plan.alpha = j.at("alpha").get<double>();
    plan.achieved = j.at("achieved").get<double>();
    for (const Json& l : j.at("layers")) {
      LayerAllocation a;
      a.layer_index = l.at("layer").get<int>();
      a.channels = l.at("channels").get<int>();
      a.fusion = l.at("fusion").get<double>();
      a.keep_ratio = l.at("keep_ratio").get<double>();
      a.keep = l.at("keep").get<int>();
      a.prune = l.at("prune").get<int>();
      if (a.keep + a.prune != a.channels) throw FormatError("plan layer keep + prune != channels");
      plan.layers.push_back(a);
    }
    return plan;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed plan JSON: ") + e.what());
  }
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

// ---- Shapley scores --------------------------------------------------------

inline void write_scores(const std::filesystem::path& path, const Seeds& seeds,
                         const std::vector<ShapleyReport>& reports) {
  CsvWriter w(path, seeds, {"layer", "channel", "score", "std_err", "method", "normalization"});
  for (const ShapleyReport& r : reports)
    for (std::size_t j = 0; j < r.scores.size(); ++j)
      w.row(r.layer_index, j, r.scores[j], r.std_err[j], to_string(r.method), to_string(r.normalization));
}

inline ScoreTable read_scores(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cl = t.column("layer"), cc = t.column("channel"), cs = t.column("score");
  ScoreTable table;
  for (const auto& r : t.rows) {
    const int layer = parse_cell<int>(r[cl]);
    const int channel = parse_cell<int>(r[cc]);
    std::vector<double>& s = table[layer];
    if (channel != static_cast<int>(s.size())) {
      throw FormatError("scores for layer " + std::to_string(layer) + " are not listed in channel order");
    }
    s.push_back(parse_cell<double>(r[cs]));
  }
  return table;
}

}  // namespace chanprune::cli
