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

#include "realmsim/rmm.hpp"

#include <algorithm>

#include "realmsim/fnv.hpp"

namespace realmsim {

const char* to_string(AttachState s) {
  switch (s) {
    case AttachState::Idle: return "idle";
    case AttachState::AwaitingFinalize: return "awaiting-finalize";
    case AttachState::Attached: return "attached";
    case AttachState::Detached: return "detached";
    case AttachState::ForceReclaimed: return "force-reclaimed";
  }
  return "?";
}

const char* to_string(CheckOutcome o) {
  switch (o) {
    case CheckOutcome::Accept: return "accept";
    case CheckOutcome::RejectC2: return "c2";
    case CheckOutcome::RejectC3: return "c3";
    case CheckOutcome::RejectC4: return "c4";
    case CheckOutcome::RejectWindow: return "window";
  }
  return "?";
}

std::vector<GranuleRange> contiguous_runs(const std::set<GranuleIndex>& granules) {
  std::vector<GranuleRange> runs;
  for (GranuleIndex g : granules) {
    if (!runs.empty() && runs.back().end() == g) {
      runs.back().count++;
    } else {
      runs.push_back({g, 1});
    }
  }
  return runs;
}

InjectionDecision check_injection(const std::vector<IntId>& req,
                                  const std::deque<PendingRecord>& queue, uint32_t n) {
  if (req.size() > n) return {CheckOutcome::RejectWindow, {}};
  std::set<IntId> distinct(req.begin(), req.end());
  if (distinct.size() != req.size()) return {CheckOutcome::RejectWindow, {}};
  if (req.empty()) return {CheckOutcome::Accept, {}};

  // Queue positions sorted by (priority, arrival).
  std::vector<size_t> order(queue.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (queue[a].priority != queue[b].priority)
      return queue[a].priority < queue[b].priority;
    return queue[a].arrival_seq < queue[b].arrival_seq;
  });

  // Check #2: every requested id must have an authenticated pending record.
  // Each id consumes its earliest record in sort order.
  std::vector<size_t> matched; // positions into `order`
  for (IntId id : req) {
    bool found = false;
    for (size_t rank = 0; rank < order.size(); ++rank) {
      if (queue[order[rank]].id != id) continue;
      if (std::find(matched.begin(), matched.end(), rank) != matched.end()) continue;
      matched.push_back(rank);
      found = true;
      break;
    }
    if (!found) return {CheckOutcome::RejectC2, {}};
  }

  // Checks #3/#4: the matched records must be exactly the head of the sorted
  // queue. Anything else skipped over an older or more urgent record.
  size_t worst = *std::max_element(matched.begin(), matched.end());
  if (worst >= req.size()) {
    size_t skipped_rank = 0;
    while (std::find(matched.begin(), matched.end(), skipped_rank) != matched.end())
      ++skipped_rank;
    const PendingRecord& skipped = queue[order[skipped_rank]];
    const PendingRecord& offender = queue[order[worst]];
    return {offender.priority > skipped.priority ? CheckOutcome::RejectC4
                                                 : CheckOutcome::RejectC3,
            {}};
  }

  std::vector<size_t> consumed;
  for (size_t rank : matched) consumed.push_back(order[rank]);
  std::sort(consumed.begin(), consumed.end());
  return {CheckOutcome::Accept, consumed};
}

Rmm::Rmm(Mode mode, Monitor& monitor, Gic& gic, DeviceSet& devices, PhysicalMemory& memory,
         TraceLog& trace)
    : mode_(mode), monitor_(monitor), gic_(gic), devices_(devices), memory_(memory),
      trace_(trace) {}

void Rmm::create_vm(VmId vm) {
  if (vms_.count(vm)) throw ModelError("VM already exists");
  vms_[vm].s2 = Stage2Table{Stage2Table::OwnerKind::Vm, vm};
}

Rmm::VmState& Rmm::vm_state(VmId vm) {
  auto it = vms_.find(vm);
  if (it == vms_.end()) throw ModelError("unknown VM");
  return it->second;
}

const Rmm::VmState& Rmm::vm_state(VmId vm) const {
  auto it = vms_.find(vm);
  if (it == vms_.end()) throw ModelError("unknown VM");
  return it->second;
}

std::optional<VmId> Rmm::device_holder(DeviceId device) const {
  for (const auto& [vm, st] : vms_) {
    auto it = st.attaches.find(device);
    if (it == st.attaches.end()) continue;
    if (it->second.state == AttachState::AwaitingFinalize ||
        it->second.state == AttachState::Attached)
      return vm;
  }
  return std::nullopt;
}

Status Rmm::rsi_attach_dev(const AttachRequest& req) {
  trace_.emit(EventKind::Rsi, {{"op", "rsi_attach_dev"},
                               {"vm", req.vm},
                               {"device", req.device}});
  VmState& st = vm_state(req.vm);

  const Device* dev = nullptr;
  try {
    dev = &devices_.device(req.device);
  } catch (const ModelError&) {
    return Status::error("device id not present in platform device tree");
  }
  if (device_holder(req.device))
    return Status::error("device already attached or attaching");

  const DeviceDescriptor& desc = dev->descriptor();
  std::set<IntId> ids;
  for (const auto& [id, prio] : req.interrupts) {
    (void)prio;
    if (!desc.has_interrupt(id))
      return Status::error("requested interrupt does not belong to the device");
    if (!ids.insert(id).second) return Status::error("duplicate interrupt in request");
  }

  uint64_t mmio_granules = 0;
  for (const GranuleRange& r : desc.mmio) mmio_granules += r.count;
  std::set<GranuleIndex> gpas(req.gpa_granules.begin(), req.gpa_granules.end());
  if (gpas.size() != req.gpa_granules.size())
    return Status::error("overlapping guest ranges in request");
  if (req.gpa_granules.size() != mmio_granules)
    return Status::error("guest range count does not match device MMIO size");
  if (req.dma_protection && !desc.dma_capable)
    return Status::error("DMA protection requested for a non-DMA device");

  st.attaches[req.device] = AttachInfo{AttachState::AwaitingFinalize, req};
  pending_delegations_.push_back(req);
  return Status::success();
}

Status Rmm::rmi_granule_delegate(GranuleIndex pa) {
  trace_.emit(EventKind::Rmi, {{"op", "rmi_granule_delegate"}, {"pa", pa}});
  if (delegated_.count(pa)) return Status::error("granule already delegated");
  if (monitor_.gptc().world_at(pa) != World::Normal)
    return Status::error("only normal-world granules can be delegated");
  monitor_.delegate_granule(pa);
  delegated_[pa] = std::nullopt;
  return Status::success();
}

Status Rmm::rmi_granule_undelegate(GranuleIndex pa) {
  trace_.emit(EventKind::Rmi, {{"op", "rmi_granule_undelegate"}, {"pa", pa}});
  auto it = delegated_.find(pa);
  if (it == delegated_.end()) return Status::error("granule is not delegated");
  if (it->second) return Status::error("granule still mapped to a VM");
  // Transitioning out of the realm world scrubs the granule.
  memory_.scrub({pa, 1});
  monitor_.undelegate_granule(pa);
  delegated_.erase(it);
  return Status::success();
}

Status Rmm::rmi_data_create(VmId vm, GranuleIndex gpa, GranuleIndex pa) {
  trace_.emit(EventKind::Rmi,
              {{"op", "rmi_data_create"}, {"vm", vm}, {"gpa", gpa}, {"pa", pa}});
  VmState& st = vm_state(vm);
  auto it = delegated_.find(pa);
  if (it == delegated_.end()) return Status::error("granule is not delegated");
  if (it->second) return Status::error("exclusivity: granule already mapped to a VM");
  if (st.s2.mapped(gpa)) return Status::error("guest granule already mapped");

  it->second = vm;
  st.s2.map(gpa, S2Entry{pa, true, true});
  st.owned_pas.insert(pa);

  // Device MMIO granules are reachable by cores only, not by DMA streams.
  if (!devices_.resolve_mmio(granule_base(pa))) st.dma_visible_gpas.insert(gpa);

  if (smmu_.vm_has_streams(vm)) {
    if (vm_dma_protected(vm)) monitor_.set_gptd_range({pa, 1}, World::Normal);
    sync_streams(vm);
  }
  return Status::success();
}

Status Rmm::rmi_data_destroy(VmId vm, GranuleIndex gpa) {
  trace_.emit(EventKind::Rmi, {{"op", "rmi_data_destroy"}, {"vm", vm}, {"gpa", gpa}});
  VmState& st = vm_state(vm);
  auto entry = st.s2.entry(gpa);
  if (!entry) return Status::error("guest granule is not mapped");

  GranuleIndex pa = entry->pa;
  st.s2.unmap(gpa);
  st.owned_pas.erase(pa);
  st.dma_visible_gpas.erase(gpa);
  if (auto it = delegated_.find(pa); it != delegated_.end()) it->second = std::nullopt;

  if (smmu_.vm_has_streams(vm)) {
    if (vm_dma_protected(vm) && monitor_.gptd().world_at(pa) == World::Normal &&
        monitor_.gptc().world_at(pa) == World::Realm)
      monitor_.set_gptd_range({pa, 1}, World::Realm);
    sync_streams(vm);
  }
  return Status::success();
}

void Rmm::map_shared(VmId vm, GranuleIndex gpa, GranuleIndex pa, bool dma_visible) {
  VmState& st = vm_state(vm);
  st.s2.map(gpa, S2Entry{pa, true, true});
  st.owned_pas.insert(pa);
  if (dma_visible) st.dma_visible_gpas.insert(gpa);
  if (smmu_.vm_has_streams(vm)) sync_streams(vm);
}

void Rmm::baseline_attach_stream(VmId vm, StreamId stream) {
  smmu_.streams[stream] = Stage2Table{Stage2Table::OwnerKind::Stream, stream};
  smmu_.streams_by_vm[vm].insert(stream);
  sync_streams(vm);
}

Status Rmm::rmi_dev_finalize(VmId vm, DeviceId device) {
  trace_.emit(EventKind::Rmi, {{"op", "rmi_dev_finalize"}, {"vm", vm}, {"device", device}});
  VmState& st = vm_state(vm);
  auto it = st.attaches.find(device);
  if (it == st.attaches.end() || it->second.state != AttachState::AwaitingFinalize)
    return Status::error("no attach awaiting finalize for this device");
  AttachInfo& info = it->second;
  const AttachRequest& req = info.request;
  Device& dev = devices_.device(device);

  // The GPAs the VM named must map exactly to the device's physical MMIO
  // granules from the trusted platform tree, in order.
  std::vector<GranuleIndex> expected_pas;
  for (const GranuleRange& r : dev.descriptor().mmio)
    for (GranuleIndex g = r.first; g < r.end(); ++g) expected_pas.push_back(g);

  for (size_t i = 0; i < req.gpa_granules.size(); ++i) {
    auto entry = st.s2.entry(req.gpa_granules[i]);
    if (!entry || entry->pa != expected_pas[i]) {
      trace_.emit(EventKind::Violation, {{"check", "pa-mapping"},
                                         {"vm", vm},
                                         {"device", device},
                                         {"gpa", req.gpa_granules[i]}});
      info.state = AttachState::Idle;
      return Status::error("hypervisor mapped a wrong physical address");
    }
  }

  if (req.interrupt_isolation && !req.interrupts.empty()) {
    std::map<IntId, Trigger> triggers;
    for (const auto& [id, prio] : req.interrupts) {
      (void)prio;
      for (const InterruptSpec& s : dev.descriptor().interrupts)
        if (s.id == id) triggers[id] = s.trigger;
    }
    Status reg = monitor_.smc_prot_int(vm, req.interrupts, triggers, true);
    if (!reg) {
      info.state = AttachState::Idle;
      return reg;
    }
    for (const auto& [id, prio] : req.interrupts)
      registered_[id] = RegisteredInterrupt{vm, prio, triggers.at(id)};
  }

  // Stale state from previous owners must not reach the VM.
  dev.soft_reset(gic_, trace_);

  if (req.dma_protection) {
    StreamId stream = device;
    smmu_.streams[stream] = Stage2Table{Stage2Table::OwnerKind::Stream, stream};
    bool first_dma = smmu_.streams_by_vm[vm].empty();
    smmu_.streams_by_vm[vm].insert(stream);
    if (first_dma) apply_gptd_overlay(vm);
    sync_streams(vm);
  }

  extend_measurement(vm, dev.measure_state());
  info.state = AttachState::Attached;
  return Status::success();
}

void Rmm::detach_common(VmId vm, DeviceId device, AttachInfo& info) {
  Device& dev = devices_.device(device);
  dev.soft_reset(gic_, trace_);

  if (info.request.interrupt_isolation && !info.request.interrupts.empty()) {
    std::map<IntId, Trigger> triggers;
    monitor_.smc_prot_int(vm, info.request.interrupts, triggers, false);
    for (const auto& [id, prio] : info.request.interrupts) {
      (void)prio;
      registered_.erase(id);
      vm_state(vm).in_service.erase(id);
    }
  }

  if (info.request.dma_protection) {
    StreamId stream = device;
    smmu_.streams.erase(stream);
    auto& streams = smmu_.streams_by_vm[vm];
    streams.erase(stream);
    if (streams.empty()) revert_gptd_overlay(vm);
  }
}

Status Rmm::rsi_detach_dev(VmId vm, DeviceId device) {
  trace_.emit(EventKind::Rsi, {{"op", "rsi_detach_dev"}, {"vm", vm}, {"device", device}});
  VmState& st = vm_state(vm);
  auto it = st.attaches.find(device);
  if (it == st.attaches.end() || it->second.state != AttachState::Attached)
    return Status::error("device is not attached to this VM");

  detach_common(vm, device, it->second);
  it->second.state = AttachState::Detached;
  reclaimable_.push_back({vm, device});
  return Status::success();
}

void Rmm::destroy_vm(VmId vm) {
  VmState& st = vm_state(vm);
  for (auto& [device, info] : st.attaches) {
    if (info.state != AttachState::Attached && info.state != AttachState::AwaitingFinalize)
      continue;
    detach_common(vm, device, info);
    info.state = AttachState::ForceReclaimed;
    reclaimable_.push_back({vm, device});
  }

  // All VM resources transition back to the normal world, scrubbed.
  std::vector<GranuleIndex> gpas;
  for (const auto& [gpa, entry] : st.s2.entries()) gpas.push_back(gpa);
  for (GranuleIndex gpa : gpas) {
    auto entry = st.s2.entry(gpa);
    GranuleIndex pa = entry->pa;
    bool was_delegated = delegated_.count(pa) != 0;
    rmi_data_destroy(vm, gpa);
    if (was_delegated) rmi_granule_undelegate(pa);
  }
}

AttachState Rmm::attach_state(VmId vm, DeviceId device) const {
  const VmState& st = vm_state(vm);
  auto it = st.attaches.find(device);
  return it == st.attaches.end() ? AttachState::Idle : it->second.state;
}

std::vector<AttachRequest> Rmm::take_pending_delegations() {
  return std::exchange(pending_delegations_, {});
}

std::vector<std::pair<VmId, DeviceId>> Rmm::take_reclaimable() {
  return std::exchange(reclaimable_, {});
}

void Rmm::apply_gptd_overlay(VmId vm) {
  // The device GPT presents all of the VM's memory as normal world so the
  // SMMU's GPC lets attached devices through; GPTc still reads realm.
  for (const GranuleRange& run : contiguous_runs(vm_state(vm).owned_pas)) {
    bool any_realm = false;
    for (GranuleIndex g = run.first; g < run.end(); ++g)
      any_realm |= monitor_.gptc().world_at(g) == World::Realm;
    if (any_realm) monitor_.set_gptd_range(run, World::Normal);
  }
}

void Rmm::revert_gptd_overlay(VmId vm) {
  for (const GranuleRange& run : contiguous_runs(vm_state(vm).owned_pas)) {
    bool any_realm = false;
    for (GranuleIndex g = run.first; g < run.end(); ++g)
      any_realm |= monitor_.gptc().world_at(g) == World::Realm;
    if (any_realm) monitor_.set_gptd_range(run, World::Realm);
  }
}

void Rmm::sync_streams(VmId vm) {
  VmState& st = vm_state(vm);
  smmu_sync(smmu_, vm, st.s2, st.dma_visible_gpas, trace_);
}

void Rmm::extend_measurement(VmId vm, uint64_t digest) {
  VmState& st = vm_state(vm);
  st.measurement = Fnv1a64{}.update_u64(st.measurement).update_u64(digest).digest();
  trace_.emit(EventKind::Measure, {{"vm", vm}, {"value", st.measurement}});
}

void Rmm::ingest_log(VmId vm) {
  VmState& st = vm_state(vm);
  for (const LogRecord& rec : monitor_.read_realm_log(vm, st.log_cursor)) {
    auto reg = registered_.find(rec.id);
    uint8_t priority = reg != registered_.end() ? reg->second.priority : 128;
    st.pending.push_back(PendingRecord{rec.id, priority, rec.seq});
    st.logged_total++;
  }
}

RecEnterResult Rmm::rmi_rec_enter(VmId vm, const std::vector<IntId>& ids) {
  trace_.emit(EventKind::Rmi, {{"op", "rmi_rec_enter"},
                               {"vm", vm},
                               {"count", static_cast<uint64_t>(ids.size())}});
  VmState& st = vm_state(vm);
  Vgic& vgic = gic_.vgic(vm);

  if (mode_ == Mode::Dmi) {
    ingest_log(vm);

    // Only interrupts registered for isolation are subject to the checks;
    // the rest flow through as in vanilla CCA.
    std::vector<IntId> checked;
    for (IntId id : ids) {
      auto reg = registered_.find(id);
      if (reg != registered_.end() && reg->second.vm == vm) checked.push_back(id);
    }

    InjectionDecision decision = check_injection(checked, st.pending, vgic.window_size());
    if (decision.outcome != CheckOutcome::Accept) {
      trace_.emit(EventKind::Violation, {{"check", to_string(decision.outcome)},
                                         {"vm", vm},
                                         {"count", static_cast<uint64_t>(ids.size())}});
      return {false, decision.outcome};
    }
    for (auto it = decision.consumed.rbegin(); it != decision.consumed.rend(); ++it)
      st.pending.erase(st.pending.begin() + static_cast<long>(*it));
    st.injected_total += checked.size();
    for (IntId id : checked) {
      const RegisteredInterrupt& reg = registered_.at(id);
      if (reg.trigger == Trigger::Level) st.in_service.insert(id);
    }
  }

  // Architectural vGIC validity: at most n distinct ids per entry.
  if (!vgic.program(ids)) {
    trace_.emit(EventKind::Violation, {{"check", "window"}, {"vm", vm}});
    return {false, CheckOutcome::RejectWindow};
  }
  return {true, CheckOutcome::Accept};
}

Status Rmm::rsi_ack_int(VmId vm, IntId id) {
  trace_.emit(EventKind::Rsi, {{"op", "rsi_ack_int"}, {"vm", vm}, {"id", id}});
  VmState& st = vm_state(vm);
  auto reg = registered_.find(id);
  if (reg == registered_.end() || reg->second.vm != vm)
    return Status::error("id is not registered for this VM");
  if (reg->second.trigger != Trigger::Level)
    return Status::error("edge interrupts are acknowledged greedily at the monitor");
  if (!st.in_service.count(id))
    return Status::error("id is not awaiting acknowledgment");

  Status ack = monitor_.smc_ack_phys(SmcCaller::Rmm, id);
  if (ack) st.in_service.erase(id);
  return ack;
}

int64_t Rmm::check_count(VmId vm) const {
  const VmState& st = vm_state(vm);
  return static_cast<int64_t>(st.logged_total) - static_cast<int64_t>(st.injected_total);
}

const std::deque<PendingRecord>& Rmm::pending_queue(VmId vm) const {
  return vm_state(vm).pending;
}

const Stage2Table& Rmm::s2(VmId vm) const { return vm_state(vm).s2; }

uint64_t Rmm::measurement(VmId vm) const { return vm_state(vm).measurement; }

const std::set<GranuleIndex>& Rmm::owned_granules(VmId vm) const {
  return vm_state(vm).owned_pas;
}

const std::set<GranuleIndex>& Rmm::dma_visible(VmId vm) const {
  return vm_state(vm).dma_visible_gpas;
}

std::optional<VmId> Rmm::owner_of(GranuleIndex pa) const {
  auto it = delegated_.find(pa);
  if (it == delegated_.end()) return std::nullopt;
  return it->second;
}

bool Rmm::vm_dma_protected(VmId vm) const {
  const VmState& st = vm_state(vm);
  for (const auto& [device, info] : st.attaches) {
    (void)device;
    if (info.state == AttachState::Attached && info.request.dma_protection) return true;
  }
  return false;
}

bool Rmm::id_isolated(VmId vm, IntId id) const {
  auto it = registered_.find(id);
  return it != registered_.end() && it->second.vm == vm;
}

std::vector<VmId> Rmm::vms() const {
  std::vector<VmId> out;
  for (const auto& [vm, st] : vms_) {
    (void)st;
    out.push_back(vm);
  }
  return out;
}

} // namespace realmsim
