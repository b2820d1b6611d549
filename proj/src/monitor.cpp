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

#include "realmsim/monitor.hpp"

namespace realmsim {

Monitor::Monitor(uint64_t granules, Gic& gic, TraceLog& trace, uint64_t log_capacity)
    : gptc_(GranuleProtectionTable::Identity::Gptc, granules),
      gptd_(GranuleProtectionTable::Identity::Gptd, granules),
      gic_(gic),
      trace_(trace),
      log_capacity_(log_capacity) {}

void Monitor::set_world_both(GranuleRange range, World world) {
  gptc_.set_range(range, world, trace_);
  gptd_.set_range(range, world, trace_);
}

void Monitor::set_gptd_range(GranuleRange range, World world) {
  gptd_.set_range(range, world, trace_);
}

void Monitor::delegate_granule(GranuleIndex pa) {
  if (gptc_.world_at(pa) != World::Normal)
    throw ModelError("delegate of a non-normal granule");
  set_world_both({pa, 1}, World::Realm);
}

void Monitor::undelegate_granule(GranuleIndex pa) {
  if (gptc_.world_at(pa) != World::Realm)
    throw ModelError("undelegate of a non-realm granule");
  set_world_both({pa, 1}, World::Normal);
}

Status Monitor::smc_prot_int(VmId vm, const std::vector<std::pair<IntId, uint8_t>>& entries,
                             const std::map<IntId, Trigger>& triggers, bool enable) {
  trace_.emit(EventKind::Smc, {{"op", "smc_prot_int"},
                               {"vm", vm},
                               {"count", static_cast<uint64_t>(entries.size())},
                               {"enable", enable}});
  if (!enable) {
    for (const auto& [id, prio] : entries) {
      (void)prio;
      auto it = protected_.find(id);
      if (it == protected_.end() || it->second.owner != vm)
        return Status::error("deregistering an id not protected for this VM");
      protected_.erase(it);
      gic_.set_group(id, Group::Group1, trace_);
    }
    return Status::success();
  }

  for (const auto& [id, prio] : entries) {
    (void)prio;
    auto it = protected_.find(id);
    if (it != protected_.end() && it->second.owner != vm)
      return Status::error("interrupt already protected for another VM");
  }
  for (const auto& [id, prio] : entries) {
    Trigger trig = triggers.count(id) ? triggers.at(id) : gic_.config(id).trigger;
    protected_[id] = ProtectedEntry{vm, prio, trig};
    gic_.set_group(id, Group::Group0, trace_);
    gic_.set_priority(id, prio, trace_);
  }
  return Status::success();
}

void Monitor::monitor_trap(IntId id) {
  auto it = protected_.find(id);
  if (it == protected_.end())
    throw ModelError("unprotected interrupt reached the monitor trap handler");
  const ProtectedEntry& entry = it->second;

  trace_.emit(EventKind::Trap, {{"id", id}, {"vm", entry.owner}});

  VmLogs& l = logs(entry.owner);
  // Ring occupancy is the unread backlog seen by the slower reader.
  uint64_t occupancy = l.realm_log.size() -
                       std::min(l.rmm_cursor_hint, l.hyp_cursor_hint);
  if (occupancy >= log_capacity_) {
    l.dropped++;
    trace_.emit(EventKind::Note, {{"what", "log-overflow"}, {"vm", entry.owner}, {"id", id}});
    return;
  }

  LogRecord rec{l.next_seq++, id, trace_.current_step()};
  // Two writes: the realm-shared ordered log and the normal-shared
  // notification queue receive the same record.
  l.realm_log.push_back(rec);
  trace_.emit(EventKind::LogWrite, {{"view", "realm"}, {"vm", entry.owner}, {"id", id}, {"seq", rec.seq}});
  l.notify.push_back(rec);
  trace_.emit(EventKind::LogWrite, {{"view", "normal"}, {"vm", entry.owner}, {"id", id}, {"seq", rec.seq}});

  // Edge interrupts are acknowledged greedily right here; level interrupts
  // wait for the VM's virtual EOI via the RMM.
  if (entry.trigger == Trigger::Edge) gic_.acknowledge(id, trace_);

  gic_.assert_line(kSgi7, trace_);
}

Status Monitor::smc_gic_config(AccessKind op, PhysAddr addr, uint64_t& value) {
  trace_.emit(EventKind::Smc, {{"op", "smc_gic_config"},
                               {"addr", addr},
                               {"write", op == AccessKind::Write}});
  auto id = gic_.decode_config_id(addr);
  if (!id) {
    trace_.emit(EventKind::Violation,
                {{"check", "gic-config-range"}, {"addr", addr}});
    return Status::error("address outside GIC configuration space");
  }
  if (is_protected(*id)) {
    trace_.emit(EventKind::Violation, {{"check", "gic-config-protected"}, {"id", *id}});
    return Status::error("interrupt is protected");
  }
  return op == AccessKind::Write ? gic_.config_write(addr, value, trace_)
                                 : gic_.config_read(addr, value);
}

Status Monitor::smc_ack_phys(SmcCaller caller, IntId id) {
  trace_.emit(EventKind::Smc, {{"op", "smc_ack_phys"},
                               {"id", id},
                               {"caller", caller == SmcCaller::Hypervisor ? "hyp" : "rmm"}});
  auto it = protected_.find(id);
  if (caller == SmcCaller::Hypervisor) {
    if (it != protected_.end()) {
      trace_.emit(EventKind::Violation, {{"check", "ack-protected"}, {"id", id}});
      return Status::error("hypervisor may not acknowledge a protected interrupt");
    }
    gic_.acknowledge(id, trace_);
    return Status::success();
  }

  // RMM-forwarded acknowledgment of a protected level interrupt after the
  // owning VM signalled EOI.
  if (it == protected_.end()) return Status::error("id is not protected");
  if (it->second.trigger != Trigger::Level)
    return Status::error("edge interrupts are acknowledged at trap time");
  if (!gic_.active(id)) return Status::error("interrupt is not awaiting acknowledgment");
  gic_.acknowledge(id, trace_);
  return Status::success();
}

std::vector<LogRecord> Monitor::read_realm_log(VmId vm, uint64_t& cursor) const {
  auto it = logs_.find(vm);
  if (it == logs_.end()) return {};
  const VmLogs& l = it->second;
  std::vector<LogRecord> out(l.realm_log.begin() + std::min<size_t>(cursor, l.realm_log.size()),
                             l.realm_log.end());
  cursor = l.realm_log.size();
  const_cast<VmLogs&>(l).rmm_cursor_hint = std::max(l.rmm_cursor_hint, cursor);
  return out;
}

std::vector<LogRecord> Monitor::read_notify_queue(VmId vm, uint64_t& cursor) const {
  auto it = logs_.find(vm);
  if (it == logs_.end()) return {};
  const VmLogs& l = it->second;
  std::vector<LogRecord> out(l.notify.begin() + std::min<size_t>(cursor, l.notify.size()),
                             l.notify.end());
  cursor = l.notify.size();
  const_cast<VmLogs&>(l).hyp_cursor_hint = std::max(l.hyp_cursor_hint, cursor);
  return out;
}

const std::vector<LogRecord>& Monitor::full_log(VmId vm) const {
  static const std::vector<LogRecord> kEmpty;
  auto it = logs_.find(vm);
  return it == logs_.end() ? kEmpty : it->second.realm_log;
}

uint64_t Monitor::dropped_records(VmId vm) const {
  auto it = logs_.find(vm);
  return it == logs_.end() ? 0 : it->second.dropped;
}

} // namespace realmsim
