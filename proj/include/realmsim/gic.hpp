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

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

struct InterruptConfig {
  IntId id = 0;
  Group group = Group::Group1;
  bool enabled = true;
  uint8_t priority = 128; // lower value = higher urgency
  Trigger trigger = Trigger::Edge;
  uint32_t core = 0;
};

struct Delivery {
  IntId id;
  Group group;
};

// Per-VM list registers. Occupied slots hold distinct ids; all occupied slots
// fire on VM entry and are then emptied, so a given id fires at most once per
// entry.
class Vgic {
 public:
  Vgic() = default;
  Vgic(VmId vm, uint32_t slots) : vm_(vm), slots_(slots) {}

  uint32_t window_size() const { return static_cast<uint32_t>(slots_.size()); }
  bool program(const std::vector<IntId>& ids);
  std::vector<IntId> fire_all(TraceLog& trace);
  bool empty() const;

 private:
  VmId vm_ = 0;
  std::vector<std::optional<IntId>> slots_;
};

// Physical interrupt controller: configuration space, pending/active state,
// level/edge trigger semantics including the re-trigger path that produces
// interrupt storms when a level interrupt is acknowledged too early.
class Gic {
 public:
  // Each id owns a 32-byte block in the configuration space.
  static constexpr uint64_t kConfigStride = 32;
  enum ConfigField : uint64_t { kFieldEnable = 0, kFieldPriority = 8, kFieldGroup = 16, kFieldRouting = 24 };

  explicit Gic(GranuleRange config_space) : config_space_(config_space) {}

  void add_interrupt(const InterruptConfig& cfg);
  bool known(IntId id) const { return configs_.count(id) != 0; }
  const InterruptConfig& config(IntId id) const;
  GranuleRange config_space() const { return config_space_; }

  // Device line activity. A rising edge (or an edge pulse) makes the id
  // pending when enabled; asserts while disabled are latched and enter
  // pending on re-enable.
  void assert_line(IntId id, TraceLog& trace);
  void deassert_line(IntId id);
  bool line_asserted(IntId id) const;

  // Single acknowledgment covering activation and EOI: the id leaves
  // pending/active, and a level id whose line is still asserted re-enters
  // pending immediately.
  void acknowledge(IntId id, TraceLog& trace);

  // Highest-priority pending enabled interrupt, moved to active. Ties break
  // toward the lower id. Active ids are not re-delivered until acknowledged.
  std::optional<Delivery> take_next_delivery(TraceLog& trace);

  bool pending(IntId id) const { return pending_.count(id) != 0; }
  bool active(IntId id) const { return active_.count(id) != 0; }
  bool any_deliverable() const;
  bool quiescent() const { return pending_.empty() && active_.empty(); }

  void set_enabled(IntId id, bool enabled, TraceLog& trace);
  void set_priority(IntId id, uint8_t priority, TraceLog& trace);
  void set_group(IntId id, Group group, TraceLog& trace);
  void set_routing(IntId id, uint32_t core, TraceLog& trace);

  // Raw configuration space accessors used by the trap-and-emulate path.
  // The GPC gate is applied by the caller; these decode and perform.
  std::optional<IntId> decode_config_id(PhysAddr addr) const;
  Status config_write(PhysAddr addr, uint64_t value, TraceLog& trace);
  Status config_read(PhysAddr addr, uint64_t& value) const;

  Vgic& vgic(VmId vm);
  const Vgic& vgic(VmId vm) const;
  void add_vgic(VmId vm, uint32_t slots);

 private:
  InterruptConfig& config_mut(IntId id);
  void enter_pending(IntId id, TraceLog& trace);

  GranuleRange config_space_;
  std::map<IntId, InterruptConfig> configs_;
  std::set<IntId> pending_;
  std::set<IntId> active_;
  std::map<IntId, bool> line_;
  std::set<IntId> latched_; // asserted while disabled
  std::map<VmId, Vgic> vgics_;
};

} // namespace realmsim
