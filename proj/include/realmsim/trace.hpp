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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "realmsim/types.hpp"

namespace realmsim {

// One record per externally meaningful state change. Records are append-only
// and steps are strictly increasing; the serialized line format is byte-stable
// so replayed runs can be compared verbatim.
enum class EventKind : uint8_t {
  Assert,      // interrupt line entered pending (incl. level re-sample)
  Deliver,     // GIC dispatched a physical interrupt to a context
  Trap,        // Group0 interrupt trapped to the monitor
  Smc,         // monitor interface call
  Rmi,         // hypervisor -> RMM call
  Rsi,         // realm VM -> RMM call
  Gpf,         // granule protection fault
  WorldSwitch, // control transfer, payload carries destination world
  VgicFire,    // virtual interrupt fired on VM entry
  Violation,   // a check rejected a hypervisor action
  Reset,       // device soft reset
  Dma,         // device-originated memory transaction
  Mmio,        // core-originated device register access
  GicOp,       // physical GIC state change (ack, enable, config)
  LogWrite,    // monitor appended to an interrupt log view
  Eoi,         // guest end-of-interrupt for a virtual interrupt
  GptUpdate,   // granule protection table range update
  SmmuSync,    // stream tables re-synchronized from a VM table
  Flush,       // TLB/GPC cache flush (zero cost, trace only)
  Measure,     // measurement extended
  Note,        // workload/harness bookkeeping
};

const char* to_string(EventKind k);

struct TraceField {
  using Value = std::variant<uint64_t, int64_t, std::string, bool>;
  const char* key;
  Value value;

  TraceField(const char* k, uint64_t v) : key(k), value(v) {}
  TraceField(const char* k, int v) : key(k), value(static_cast<int64_t>(v)) {}
  TraceField(const char* k, int64_t v) : key(k), value(v) {}
  TraceField(const char* k, uint32_t v) : key(k), value(static_cast<uint64_t>(v)) {}
  TraceField(const char* k, bool v) : key(k), value(v) {}
  TraceField(const char* k, const char* v) : key(k), value(std::string(v)) {}
  TraceField(const char* k, std::string v) : key(k), value(std::move(v)) {}
};

struct TraceRecord {
  uint64_t step;
  EventKind kind;
  std::string line; // serialized JSON, one line, fixed field order

  // Denormalized payload fields the metrics pipeline and harness need without
  // re-parsing. Zero/empty when not applicable to the kind.
  World world = World::Normal;  // WorldSwitch destination
  IntId id = 0;                 // interrupt id for irq-ish kinds
  std::string detail;           // violation check name, smc/rsi/rmi op name
};

class TraceLog {
 public:
  uint64_t emit(EventKind kind, std::initializer_list<TraceField> fields);

  const std::vector<TraceRecord>& records() const { return records_; }
  uint64_t current_step() const { return step_; }

  // Serialized trace, one record per line.
  std::string to_text() const;
  Status write_file(const std::string& path) const;

 private:
  uint64_t step_ = 0;
  std::vector<TraceRecord> records_;
};

inline void emit_world_switch(TraceLog& trace, World to) {
  trace.emit(EventKind::WorldSwitch, {{"to", to_string(to)}});
}

} // namespace realmsim
