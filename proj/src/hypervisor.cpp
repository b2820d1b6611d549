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

#include "realmsim/hypervisor.hpp"

#include <algorithm>

namespace realmsim {

const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Benign: return "benign";
    case StrategyKind::InjectFake: return "inject_fake";
    case StrategyKind::ReorderBeyondWindow: return "reorder_beyond_window";
    case StrategyKind::DropAndMiscount: return "drop_and_miscount";
    case StrategyKind::ReplayConsumed: return "replay_consumed";
    case StrategyKind::PrematureLevelAck: return "premature_level_ack";
    case StrategyKind::GicTamper: return "gic_tamper";
    case StrategyKind::StallScheduling: return "stall_scheduling";
    case StrategyKind::WrongPaMapping: return "wrong_pa_mapping";
  }
  return "?";
}

std::optional<StrategyKind> strategy_from_string(const std::string& name) {
  for (StrategyKind k : {StrategyKind::Benign, StrategyKind::InjectFake,
                         StrategyKind::ReorderBeyondWindow, StrategyKind::DropAndMiscount,
                         StrategyKind::ReplayConsumed, StrategyKind::PrematureLevelAck,
                         StrategyKind::GicTamper, StrategyKind::StallScheduling,
                         StrategyKind::WrongPaMapping}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

Hypervisor::Hypervisor(Mode mode, StrategyConfig strategy, Rmm& rmm, Monitor& monitor,
                       Gic& gic, DeviceSet& devices, PhysicalMemory& memory,
                       TraceLog& trace)
    : mode_(mode), strategy_(strategy), rmm_(rmm), monitor_(monitor), gic_(gic),
      devices_(devices), memory_(memory), trace_(trace) {}

void Hypervisor::add_vm(VmId vm) {
  run_queue_.push_back(vm);
  runs_[vm];
}

void Hypervisor::bind_irq(IntId id, VmId vm, uint8_t priority, Trigger trigger) {
  irq_bindings_[id] = IrqBinding{vm, priority, trigger};
}

void Hypervisor::ack_phys(IntId id) {
  if (mode_ == Mode::Dmi) {
    // GIC lives in root world; acknowledgment goes through the monitor.
    emit_world_switch(trace_, World::Root);
    monitor_.smc_ack_phys(SmcCaller::Hypervisor, id);
    emit_world_switch(trace_, World::Normal);
  } else {
    gic_.acknowledge(id, trace_);
  }
}

void Hypervisor::on_phys_irq(const Delivery& delivery) {
  if (delivery.id == kSgi7) {
    sgi7_pending_ = true;
    ack_phys(kSgi7);
    return;
  }

  auto it = irq_bindings_.find(delivery.id);
  if (it == irq_bindings_.end()) {
    ack_phys(delivery.id);
    return;
  }
  const IrqBinding& binding = it->second;

  if (binding.trigger == Trigger::Level) {
    if (strategy_.kind == StrategyKind::PrematureLevelAck && mode_ != Mode::Dmi) {
      // Greedy acknowledgment without the disable/re-enable dance; the device
      // re-raises the line and the GIC storms.
      ack_phys(delivery.id);
      deviation_applied_ = true;
    } else {
      // Storm avoidance: disable the line, acknowledge, and re-enable only
      // after the VM signalled EOI for the virtual interrupt.
      gic_.set_enabled(delivery.id, false, trace_);
      ack_phys(delivery.id);
      disabled_for_eoi_.insert(delivery.id);
    }
  } else {
    ack_phys(delivery.id);
  }

  VmRun& run = runs_[binding.vm];
  bool queued = std::any_of(run.pending.begin(), run.pending.end(),
                            [&](const VirtRecord& r) { return r.id == delivery.id; });
  if (!queued)
    run.pending.push_back(VirtRecord{delivery.id, binding.priority, ++arrival_counter_});
}

void Hypervisor::refresh_notifications() {
  sgi7_pending_ = false;
  for (auto& [vm, run] : runs_) {
    for (const LogRecord& rec : monitor_.read_notify_queue(vm, run.notify_cursor)) {
      auto it = irq_bindings_.find(rec.id);
      uint8_t priority = it != irq_bindings_.end() ? it->second.priority : 128;
      run.pending.push_back(VirtRecord{rec.id, priority, ++arrival_counter_});
    }
  }
}

std::vector<Hypervisor::VirtRecord> Hypervisor::sorted_pending(const VmRun& run) const {
  std::vector<VirtRecord> sorted(run.pending.begin(), run.pending.end());
  std::sort(sorted.begin(), sorted.end(), [](const VirtRecord& a, const VirtRecord& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    return a.arrival < b.arrival;
  });
  return sorted;
}

std::vector<IntId> Hypervisor::benign_request(VmRun& run, uint32_t window) const {
  // Highest-priority pending interrupts first, stopping at the window size or
  // at a repeated id; the same ordering key the RMM checks against.
  std::vector<IntId> ids;
  for (const VirtRecord& r : sorted_pending(run)) {
    if (ids.size() >= window) break;
    if (std::find(ids.begin(), ids.end(), r.id) != ids.end()) break;
    ids.push_back(r.id);
  }
  return ids;
}

std::optional<std::vector<IntId>> Hypervisor::deviant_request(VmId vm, VmRun& run,
                                                              uint32_t window) {
  if (deviation_done_) return std::nullopt;
  std::vector<VirtRecord> sorted = sorted_pending(run);

  switch (strategy_.kind) {
    case StrategyKind::InjectFake: {
      // Fire once the attach flow has settled so the injected id hits the
      // protections the VM asked for. The point is an interrupt the device
      // never sent, so wait until no authentic record of it is pending.
      if (slice_count_ < 3 || !delegations_.empty()) return std::nullopt;
      IntId fake = static_cast<IntId>(strategy_.param);
      if (std::any_of(sorted.begin(), sorted.end(),
                      [&](const VirtRecord& r) { return r.id == fake; }))
        return std::nullopt;
      deviation_done_ = true;
      return std::vector<IntId>{fake};
    }

    case StrategyKind::ReorderBeyondWindow: {
      if (sorted.size() < window + 1) return std::nullopt;
      std::vector<IntId> ids;
      for (size_t i = sorted.size() - window; i < sorted.size(); ++i)
        ids.push_back(sorted[i].id);
      deviation_done_ = true;
      return ids;
    }

    case StrategyKind::DropAndMiscount:
      if (sorted.size() < 2) return std::nullopt;
      deviation_done_ = true;
      return std::vector<IntId>{sorted[1].id};

    case StrategyKind::ReplayConsumed:
      if (last_accepted_.empty() || sorted.empty()) return std::nullopt;
      deviation_done_ = true;
      return std::vector<IntId>{last_accepted_.front()};

    case StrategyKind::StallScheduling: {
      if (sorted.empty()) return std::nullopt;
      if (!stall_armed_) {
        stall_armed_ = true;
        stall_remaining_ = strategy_.param;
      }
      if (stall_remaining_ > 0) {
        stall_remaining_--;
        trace_.emit(EventKind::Note, {{"what", "stall"}, {"vm", vm}});
        return std::vector<IntId>{}; // marker handled by caller: skip entry
      }
      if (sorted.size() < 2) return std::nullopt;
      deviation_done_ = true;
      // The point of the stall: serve the stale, lowest-urgency record first.
      return std::vector<IntId>{sorted.back().id};
    }

    default:
      return std::nullopt;
  }
}

void Hypervisor::maybe_tamper() {
  if (strategy_.kind != StrategyKind::GicTamper || deviation_done_) return;
  IntId target = static_cast<IntId>(strategy_.param);
  if (mode_ == Mode::Dmi && !monitor_.is_protected(target)) return; // wait for attach
  deviation_done_ = true;

  PhysAddr addr = granule_base(gic_.config_space().first) +
                  target * Gic::kConfigStride + Gic::kFieldEnable;
  uint64_t value = 0; // disable the interrupt
  Status st = hyp_mmio(addr, AccessKind::Write, value);
  if (st.ok) deviation_applied_ = true;
}

void Hypervisor::process_delegations() {
  for (const AttachRequest& req : rmm_.take_pending_delegations()) delegations_.push_back(req);
  if (delegations_.empty()) return;
  std::vector<AttachRequest> work = std::exchange(delegations_, {});
  for (const AttachRequest& req : work) delegate_device_memory(req);
}

void Hypervisor::delegate_device_memory(const AttachRequest& req) {
  const DeviceDescriptor& desc = devices_.device(req.device).descriptor();
  std::vector<GranuleIndex> pas;
  for (const GranuleRange& r : desc.mmio)
    for (GranuleIndex g = r.first; g < r.end(); ++g) pas.push_back(g);

  bool sabotage = strategy_.kind == StrategyKind::WrongPaMapping && !deviation_done_;
  if (sabotage) deviation_done_ = true;

  std::vector<std::pair<GranuleIndex, GranuleIndex>> created; // (gpa, pa)
  for (size_t i = 0; i < pas.size(); ++i) {
    GranuleIndex pa = pas[i];
    if (sabotage && i == 0 && scratch_granule_ != 0) pa = scratch_granule_;
    emit_world_switch(trace_, World::Root);
    emit_world_switch(trace_, World::Realm);
    Status d = rmm_.rmi_granule_delegate(pa);
    Status c = d ? rmm_.rmi_data_create(req.vm, req.gpa_granules[i], pa) : d;
    emit_world_switch(trace_, World::Root);
    emit_world_switch(trace_, World::Normal);
    if (d && c) created.push_back({req.gpa_granules[i], pa});
  }

  emit_world_switch(trace_, World::Root);
  emit_world_switch(trace_, World::Realm);
  Status fin = rmm_.rmi_dev_finalize(req.vm, req.device);
  emit_world_switch(trace_, World::Root);
  emit_world_switch(trace_, World::Normal);

  if (!fin) {
    // Aborted attach: tear down whatever was installed so a retry starts
    // from clean state.
    for (const auto& [gpa, pa] : created) {
      rmm_.rmi_data_destroy(req.vm, gpa);
      rmm_.rmi_granule_undelegate(pa);
    }
  }
}

void Hypervisor::process_reclaims() {
  for (const auto& [vm, device] : rmm_.take_reclaimable()) {
    const DeviceDescriptor& desc = devices_.device(device).descriptor();
    // Walk the VM's stage-2 view of the device and undo delegate/create.
    for (const GranuleRange& r : desc.mmio) {
      for (GranuleIndex pa = r.first; pa < r.end(); ++pa) {
        if (rmm_.owner_of(pa) != vm) continue;
        GranuleIndex gpa = 0;
        for (const auto& [g, entry] : rmm_.s2(vm).entries())
          if (entry.pa == pa) gpa = g;
        rmm_.rmi_data_destroy(vm, gpa);
        rmm_.rmi_granule_undelegate(pa);
      }
    }
  }
}

std::optional<Hypervisor::EntryPlan> Hypervisor::run_slice() {
  slice_count_++;
  process_delegations();
  process_reclaims();
  if (mode_ == Mode::Dmi) refresh_notifications();
  maybe_tamper();

  if (strategy_.kind == StrategyKind::PrematureLevelAck && mode_ == Mode::Dmi &&
      !deviation_done_) {
    // Try to acknowledge the first notified protected interrupt before the
    // VM has seen it.
    for (auto& [vm, run] : runs_) {
      if (run.pending.empty()) continue;
      deviation_done_ = true;
      ack_phys(run.pending.front().id);
      break;
    }
  }

  if (run_queue_.empty()) return std::nullopt;

  VmId vm = run_queue_[rr_index_ % run_queue_.size()];
  rr_index_++;
  VmRun& run = runs_[vm];
  uint32_t window = gic_.vgic(vm).window_size();

  std::vector<IntId> ids;
  plan_was_deviant_ = false;
  if (auto deviant = deviant_request(vm, run, window)) {
    if (deviant->empty() && strategy_.kind == StrategyKind::StallScheduling)
      return std::nullopt; // stalled this slice
    ids = *deviant;
    plan_was_deviant_ = true;
  } else {
    ids = benign_request(run, window);
  }
  return EntryPlan{vm, ids};
}

void Hypervisor::on_entry_accepted(const EntryPlan& plan) {
  VmRun& run = runs_[plan.vm];
  run.entries++;
  for (IntId id : plan.ids) {
    auto sorted = sorted_pending(run);
    for (const VirtRecord& r : sorted) {
      if (r.id != id) continue;
      auto it = std::find_if(run.pending.begin(), run.pending.end(),
                             [&](const VirtRecord& p) { return p.arrival == r.arrival; });
      if (it != run.pending.end()) run.pending.erase(it);
      break;
    }
  }
  if (!plan.ids.empty()) last_accepted_ = plan.ids;
  if (plan_was_deviant_) deviation_applied_ = true; // the deviant injection landed
  plan_was_deviant_ = false;
}

void Hypervisor::on_entry_rejected(const EntryPlan&) { plan_was_deviant_ = false; }

void Hypervisor::on_vm_exit(VmId vm, const std::vector<IntId>& eoi_ids) {
  (void)vm;
  for (IntId id : eoi_ids) {
    if (disabled_for_eoi_.erase(id)) gic_.set_enabled(id, true, trace_);
  }
}

Status Hypervisor::hyp_mmio(PhysAddr addr, AccessKind kind, uint64_t& value) {
  AccessRequest req{CoreSource{World::Normal, std::nullopt}, addr, kind};
  if (gpc_check(req, monitor_.gptc()) == GpcResult::Allowed) {
    GranuleRange gic_range = gic_.config_space();
    if (gic_range.contains(granule_of(addr))) {
      return kind == AccessKind::Write ? gic_.config_write(addr, value, trace_)
                                       : gic_.config_read(addr, value);
    }
    if (auto dev = devices_.resolve_mmio(addr)) {
      MmioResult r = devices_.mmio_access(dev->device, dev->offset, kind, value,
                                          World::Normal, gic_, trace_);
      if (kind == AccessKind::Read) value = r.value;
      return r.ok ? Status::success() : Status::error("write filtered");
    }
    if (kind == AccessKind::Read) value = memory_.read64(addr);
    else memory_.write64(addr, value);
    return Status::success();
  }

  // Granule protection fault: reconstruct the access and ask the monitor.
  trace_.emit(EventKind::Gpf, {{"addr", addr}, {"write", kind == AccessKind::Write}});
  emit_world_switch(trace_, World::Root);
  Status st = monitor_.smc_gic_config(kind, addr, value);
  emit_world_switch(trace_, World::Normal);
  return st;
}

bool Hypervisor::idle() const {
  if (sgi7_pending_ || !delegations_.empty()) return false;
  for (const auto& [vm, run] : runs_) {
    (void)vm;
    if (!run.pending.empty()) return false;
  }
  return true;
}

uint64_t Hypervisor::entries_performed(VmId vm) const {
  auto it = runs_.find(vm);
  return it == runs_.end() ? 0 : it->second.entries;
}

} // namespace realmsim
