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

#include <sstream>
#include <string>

#include "chanprune/prune/schedules.hpp"
#include "json.hpp"

namespace chanprune {

using Json = nlohmann::ordered_json;

inline Json event_to_json(const PruneEvent& e) {
  Json j;
  j["step"] = e.step;
  j["event"] = to_string(e.kind);
  j["layer"] = e.layer;
  if (e.kind == EventKind::Prune) {
    j["channels"] = e.channels;
    j["removed"] = e.channels.size();
  }
  if (e.kind == EventKind::Finetune || e.kind == EventKind::Retrain) j["epochs"] = e.epochs;
  if (e.kind != EventKind::Score) {
    j["accuracy"] = e.metrics.accuracy;
    j["kept_flops_pct"] = e.metrics.kept_flops_pct;
    j["kept_params_pct"] = e.metrics.kept_params_pct;
    j["flops"] = e.metrics.flops;
    j["params"] = e.metrics.params;
  }
  return j;
}

// One JSON object per line, in event order.
inline std::string trace_to_jsonl(const PruneTrace& trace) {
  std::ostringstream out;
  for (const PruneEvent& e : trace.events) out << event_to_json(e).dump() << '\n';
  return out.str();
}

inline Json summary_to_json(const PruneTrace& trace) {
  const TraceSummary& s = trace.summary;
  Json j;
  j["baseline_acc"] = s.baseline_acc;
  j["pruned_acc"] = s.pruned_acc;
  j["acc_drop"] = s.acc_drop;
  j["flops_drop_pct"] = s.flops_drop_pct;
  j["params_drop_pct"] = s.params_drop_pct;
  j["schedule"] = to_string(trace.schedule);
  j["criterion"] = trace.criterion;
  j["baseline_flops"] = s.baseline_flops;
  j["pruned_flops"] = s.pruned_flops;
  j["baseline_params"] = s.baseline_params;
  j["pruned_params"] = s.pruned_params;
  return j;
}

}  // namespace chanprune
