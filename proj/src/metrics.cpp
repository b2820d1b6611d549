// Copyright 2026 the realmsim authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <json.hpp>

#include "realmsim/harness.hpp"

namespace realmsim {

uint64_t CostTable::cost(EventKind k) const {
  switch (k) {
    case EventKind::WorldSwitch: return world_switch;
    case EventKind::Smc:
    case EventKind::Rmi:
    case EventKind::Rsi: return interface_call;
    case EventKind::Mmio: return mmio;
    case EventKind::GicOp: return gic_op;
    default: return other;
  }
}

MetricsReport compute_metrics(const std::vector<TraceRecord>& records,
                              const CostTable& costs) {
  MetricsReport m;
  for (const TraceRecord& r : records) {
    m.cost_units += costs.cost(r.kind);
    switch (r.kind) {
      case EventKind::VgicFire: m.irq_injected++; break;
      case EventKind::Rmi: m.rmi++; break;
      case EventKind::Rsi: m.rsi++; break;
      case EventKind::Smc: m.smc++; break;
      case EventKind::Trap: m.traps++; break;
      case EventKind::Gpf: m.gpfs++; break;
      case EventKind::Assert: m.asserts++; break;
      case EventKind::Deliver: m.deliveries++; break;
      case EventKind::Eoi: m.eois++; break;
      case EventKind::Reset: m.resets++; break;
      case EventKind::Dma: m.dma_ops++; break;
      case EventKind::Mmio: m.mmio_ops++; break;
      case EventKind::Violation: m.violations++; break;
      case EventKind::WorldSwitch:
        if (r.world == World::Root) m.ws_root++;
        else if (r.world == World::Realm) m.ws_realm++;
        else m.ws_normal++;
        break;
      default: break;
    }
  }
  return m;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["irq_injected"] = irq_injected;
  j["rmi"] = rmi;
  j["rsi"] = rsi;
  j["smc"] = smc;
  j["traps"] = traps;
  j["gpfs"] = gpfs;
  j["asserts"] = asserts;
  j["deliveries"] = deliveries;
  j["eois"] = eois;
  j["resets"] = resets;
  j["dma"] = dma_ops;
  j["mmio"] = mmio_ops;
  j["violations"] = violations;
  j["world_switches"] = {{"root", ws_root}, {"realm", ws_realm}, {"normal", ws_normal}};
  j["cost_units"] = cost_units;
  return j.dump(2);
}

Status metrics_from_trace_text(const std::string& text, const CostTable& costs,
                               MetricsReport& out) {
  std::vector<TraceRecord> records;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      return Status::error(std::string("unreadable trace line: ") + e.what());
    }
    TraceRecord rec;
    rec.step = j.value("step", uint64_t{0});
    std::string kind = j.value("kind", std::string{});
    bool known = false;
    for (int k = 0; k <= static_cast<int>(EventKind::Note); ++k) {
      if (kind == to_string(static_cast<EventKind>(k))) {
        rec.kind = static_cast<EventKind>(k);
        known = true;
        break;
      }
    }
    if (!known) return Status::error("unreadable trace line: unknown kind " + kind);
    if (j.contains("to")) {
      std::string w = j.at("to").get<std::string>();
      rec.world = w == "root"    ? World::Root
                  : w == "realm" ? World::Realm
                  : w == "secure" ? World::Secure
                                  : World::Normal;
    }
    if (j.contains("id") && j.at("id").is_number_unsigned())
      rec.id = j.at("id").get<uint32_t>();
    records.push_back(rec);
  }
  out = compute_metrics(records, costs);
  return Status::success();
}

uint64_t count_events(const TraceLog& trace, EventKind kind, std::optional<IntId> id) {
  uint64_t n = 0;
  for (const TraceRecord& r : trace.records()) {
    if (r.kind != kind) continue;
    if (id && r.id != *id) continue;
    n++;
  }
  return n;
}

} // namespace realmsim
