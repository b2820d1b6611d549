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

#include "realmsim/gic.hpp"

#include <algorithm>

namespace realmsim {

bool Vgic::program(const std::vector<IntId>& ids) {
  if (ids.size() > slots_.size()) return false;
  std::set<IntId> distinct(ids.begin(), ids.end());
  if (distinct.size() != ids.size()) return false;

  for (auto& slot : slots_) slot.reset();
  for (size_t i = 0; i < ids.size(); ++i) slots_[i] = ids[i];
  return true;
}

std::vector<IntId> Vgic::fire_all(TraceLog& trace) {
  std::vector<IntId> fired;
  for (auto& slot : slots_) {
    if (slot) {
      trace.emit(EventKind::VgicFire, {{"vm", vm_}, {"id", *slot}});
      fired.push_back(*slot);
      slot.reset();
    }
  }
  return fired;
}

bool Vgic::empty() const {
  return std::none_of(slots_.begin(), slots_.end(),
                      [](const auto& s) { return s.has_value(); });
}

void Gic::add_interrupt(const InterruptConfig& cfg) {
  if (configs_.count(cfg.id)) throw ModelError("duplicate interrupt id");
  configs_[cfg.id] = cfg;
  line_[cfg.id] = false;
}

const InterruptConfig& Gic::config(IntId id) const {
  auto it = configs_.find(id);
  if (it == configs_.end()) throw ModelError("unknown interrupt id");
  return it->second;
}

InterruptConfig& Gic::config_mut(IntId id) {
  auto it = configs_.find(id);
  if (it == configs_.end()) throw ModelError("unknown interrupt id");
  return it->second;
}

void Gic::enter_pending(IntId id, TraceLog& trace) {
  pending_.insert(id);
  trace.emit(EventKind::Assert, {{"id", id}});
}

void Gic::assert_line(IntId id, TraceLog& trace) {
  const InterruptConfig& cfg = config(id);
  if (cfg.trigger == Trigger::Level) line_[id] = true;

  if (!cfg.enabled) {
    latched_.insert(id);
    return;
  }
  // Coalesced: at most one pending instance per id, and an active id is not
  // re-pended until acknowledgment.
  if (pending_.count(id) || active_.count(id)) return;
  enter_pending(id, trace);
}

void Gic::deassert_line(IntId id) {
  config(id);
  line_[id] = false;
}

bool Gic::line_asserted(IntId id) const {
  auto it = line_.find(id);
  return it != line_.end() && it->second;
}

void Gic::acknowledge(IntId id, TraceLog& trace) {
  const InterruptConfig& cfg = config(id);
  if (!pending_.count(id) && !active_.count(id)) {
    trace.emit(EventKind::GicOp, {{"op", "ack-noop"}, {"id", id}});
    return;
  }
  pending_.erase(id);
  active_.erase(id);
  trace.emit(EventKind::GicOp, {{"op", "ack"}, {"id", id}});

  // The storm mechanism: an acknowledged level interrupt whose line is still
  // asserted re-enters pending immediately.
  if (cfg.trigger == Trigger::Level && line_asserted(id) && cfg.enabled)
    enter_pending(id, trace);
}

std::optional<Delivery> Gic::take_next_delivery(TraceLog& trace) {
  const InterruptConfig* best = nullptr;
  for (IntId id : pending_) {
    const InterruptConfig& cfg = config(id);
    if (!cfg.enabled) continue;
    if (!best || cfg.priority < best->priority ||
        (cfg.priority == best->priority && cfg.id < best->id)) {
      best = &cfg;
    }
  }
  if (!best) return std::nullopt;

  pending_.erase(best->id);
  active_.insert(best->id);
  trace.emit(EventKind::Deliver,
             {{"id", best->id}, {"group", best->group == Group::Group0 ? 0 : 1}});
  return Delivery{best->id, best->group};
}

bool Gic::any_deliverable() const {
  return std::any_of(pending_.begin(), pending_.end(),
                     [this](IntId id) { return config(id).enabled; });
}

void Gic::set_enabled(IntId id, bool enabled, TraceLog& trace) {
  InterruptConfig& cfg = config_mut(id);
  if (cfg.enabled == enabled) return;
  cfg.enabled = enabled;
  trace.emit(EventKind::GicOp, {{"op", enabled ? "enable" : "disable"}, {"id", id}});

  if (enabled && !pending_.count(id) && !active_.count(id)) {
    bool level_high = cfg.trigger == Trigger::Level && line_asserted(id);
    if (level_high || latched_.count(id)) enter_pending(id, trace);
  }
  if (enabled) latched_.erase(id);
}

void Gic::set_priority(IntId id, uint8_t priority, TraceLog& trace) {
  config_mut(id).priority = priority;
  trace.emit(EventKind::GicOp, {{"op", "priority"}, {"id", id}, {"value", uint64_t{priority}}});
}

void Gic::set_group(IntId id, Group group, TraceLog& trace) {
  config_mut(id).group = group;
  trace.emit(EventKind::GicOp,
             {{"op", "group"}, {"id", id}, {"value", group == Group::Group0 ? 0 : 1}});
}

void Gic::set_routing(IntId id, uint32_t core, TraceLog& trace) {
  config_mut(id).core = core;
  trace.emit(EventKind::GicOp, {{"op", "routing"}, {"id", id}, {"value", uint64_t{core}}});
}

std::optional<IntId> Gic::decode_config_id(PhysAddr addr) const {
  PhysAddr base = granule_base(config_space_.first);
  PhysAddr end = granule_base(config_space_.end());
  if (addr < base || addr >= end) return std::nullopt;
  return static_cast<IntId>((addr - base) / kConfigStride);
}

Status Gic::config_write(PhysAddr addr, uint64_t value, TraceLog& trace) {
  auto id = decode_config_id(addr);
  if (!id || !known(*id)) return Status::error("address is not a configured GIC entry");
  switch ((addr - granule_base(config_space_.first)) % kConfigStride) {
    case kFieldEnable: set_enabled(*id, value != 0, trace); break;
    case kFieldPriority: set_priority(*id, static_cast<uint8_t>(value), trace); break;
    case kFieldGroup: set_group(*id, value == 0 ? Group::Group0 : Group::Group1, trace); break;
    case kFieldRouting: set_routing(*id, static_cast<uint32_t>(value), trace); break;
    default: return Status::error("unaligned GIC config access");
  }
  return Status::success();
}

Status Gic::config_read(PhysAddr addr, uint64_t& value) const {
  auto id = decode_config_id(addr);
  if (!id || !known(*id)) return Status::error("address is not a configured GIC entry");
  const InterruptConfig& cfg = config(*id);
  switch ((addr - granule_base(config_space_.first)) % kConfigStride) {
    case kFieldEnable: value = cfg.enabled ? 1 : 0; break;
    case kFieldPriority: value = cfg.priority; break;
    case kFieldGroup: value = cfg.group == Group::Group0 ? 0 : 1; break;
    case kFieldRouting: value = cfg.core; break;
    default: return Status::error("unaligned GIC config access");
  }
  return Status::success();
}

Vgic& Gic::vgic(VmId vm) {
  auto it = vgics_.find(vm);
  if (it == vgics_.end()) throw ModelError("no vGIC for VM");
  return it->second;
}

const Vgic& Gic::vgic(VmId vm) const {
  auto it = vgics_.find(vm);
  if (it == vgics_.end()) throw ModelError("no vGIC for VM");
  return it->second;
}

void Gic::add_vgic(VmId vm, uint32_t slots) {
  vgics_.emplace(vm, Vgic{vm, slots});
}

} // namespace realmsim
