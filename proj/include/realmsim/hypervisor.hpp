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

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "realmsim/devices.hpp"
#include "realmsim/gic.hpp"
#include "realmsim/monitor.hpp"
#include "realmsim/rmm.hpp"
#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

// Adversarial behaviors from the security analysis. Every strategy shares
// the benign code path and deviates exactly once; after the deviation is
// attempted (and, under isolation, rejected) the run continues benignly so
// end states stay comparable with the benign twin.
enum class StrategyKind : uint8_t {
  Benign,
  InjectFake,          // inject a virtual interrupt with no physical record
  ReorderBeyondWindow, // inject the newest records while older ones pend
  DropAndMiscount,     // skip the head record and inject the next
  ReplayConsumed,      // re-submit an already consumed record
  PrematureLevelAck,   // acknowledge a protected level interrupt early
  GicTamper,           // write the GIC config of a protected interrupt
  StallScheduling,     // stall the VM, then inject the stale low-priority id
  WrongPaMapping,      // map a device GPA to the wrong physical granule
};

const char* to_string(StrategyKind k);
std::optional<StrategyKind> strategy_from_string(const std::string& name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Benign;
  uint64_t param = 0; // fake id, tamper target, stall slices
};

// Normal-world VM manager: scheduling, delegation flows, interrupt
// virtualization through the RMM, and the GPF trap-and-emulate path for GIC
// configuration.
class Hypervisor {
 public:
  Hypervisor(Mode mode, StrategyConfig strategy, Rmm& rmm, Monitor& monitor, Gic& gic,
             DeviceSet& devices, PhysicalMemory& memory, TraceLog& trace);

  void add_vm(VmId vm);
  // Baseline passthrough wiring: which VM owns a device interrupt, with the
  // priority used to order injections.
  void bind_irq(IntId id, VmId vm, uint8_t priority, Trigger trigger);
  void set_scratch_granule(GranuleIndex pa) { scratch_granule_ = pa; }

  // Physical interrupt delivered to the hypervisor's context (Group1).
  void on_phys_irq(const Delivery& delivery);

  // Section 'run slice': delegation work, reclaim work, one strategy action
  // when armed, then pick a VM and build its injection request.
  struct EntryPlan {
    VmId vm;
    std::vector<IntId> ids;
  };
  std::optional<EntryPlan> run_slice();

  // Outcome feedback from the simulation after it performed the entry.
  void on_entry_accepted(const EntryPlan& plan);
  void on_entry_rejected(const EntryPlan& plan);
  void on_vm_exit(VmId vm, const std::vector<IntId>& eoi_ids);

  // MMIO access from the hypervisor with GPF trap-and-emulate: a faulting
  // GIC access is reconstructed and re-issued as smc_gic_config.
  Status hyp_mmio(PhysAddr addr, AccessKind kind, uint64_t& value);

  bool idle() const;
  bool attach_work_pending() const { return !delegations_.empty(); }
  bool deviation_applied() const { return deviation_applied_; }
  uint64_t entries_performed(VmId vm) const;

 private:
  struct VirtRecord {
    IntId id;
    uint8_t priority;
    uint64_t arrival;
  };

  struct VmRun {
    std::deque<VirtRecord> pending;
    uint64_t notify_cursor = 0;
    uint64_t entries = 0;
  };

  struct IrqBinding {
    VmId vm;
    uint8_t priority;
    Trigger trigger;
  };

  void process_delegations();
  void process_reclaims();
  void refresh_notifications();
  void delegate_device_memory(const AttachRequest& req);
  std::vector<IntId> benign_request(VmRun& run, uint32_t window) const;
  std::vector<VirtRecord> sorted_pending(const VmRun& run) const;
  std::optional<std::vector<IntId>> deviant_request(VmId vm, VmRun& run, uint32_t window);
  void maybe_tamper();
  void ack_phys(IntId id);

  Mode mode_;
  StrategyConfig strategy_;
  Rmm& rmm_;
  Monitor& monitor_;
  Gic& gic_;
  DeviceSet& devices_;
  PhysicalMemory& memory_;
  TraceLog& trace_;

  std::vector<VmId> run_queue_;
  size_t rr_index_ = 0;
  std::map<VmId, VmRun> runs_;
  std::map<IntId, IrqBinding> irq_bindings_;
  std::vector<AttachRequest> delegations_;
  uint64_t arrival_counter_ = 0;
  bool sgi7_pending_ = false;
  GranuleIndex scratch_granule_ = 0;

  bool deviation_done_ = false;
  bool deviation_applied_ = false;
  bool plan_was_deviant_ = false;
  uint64_t slice_count_ = 0;
  uint64_t stall_remaining_ = 0;
  bool stall_armed_ = false;
  std::vector<IntId> last_accepted_;
  std::set<IntId> disabled_for_eoi_; // baseline level-trigger ack dance
};

} // namespace realmsim
