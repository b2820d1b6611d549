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
#include "realmsim/mem_isolation.hpp"
#include "realmsim/monitor.hpp"
#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

enum class AttachState : uint8_t { Idle, AwaitingFinalize, Attached, Detached, ForceReclaimed };

const char* to_string(AttachState s);

struct AttachRequest {
  VmId vm = 0;
  DeviceId device = 0;
  std::vector<GranuleIndex> gpa_granules; // where the VM wants the MMIO mapped
  std::vector<std::pair<IntId, uint8_t>> interrupts; // id -> VM-assigned priority
  bool dma_protection = false;
  bool interrupt_isolation = false;
};

// One authenticated physical interrupt awaiting virtual injection.
struct PendingRecord {
  IntId id;
  uint8_t priority;
  uint64_t arrival_seq;
};

enum class CheckOutcome : uint8_t { Accept, RejectC2, RejectC3, RejectC4, RejectWindow };

const char* to_string(CheckOutcome o);

struct InjectionDecision {
  CheckOutcome outcome;
  std::vector<size_t> consumed; // queue positions, only meaningful on Accept
};

// Pure decision function behind the injection RMI: a request is benign iff,
// after sorting the pending queue by (priority ascending, arrival ascending)
// and matching each requested id to its earliest pending record, the matched
// records are exactly the top-|req| of the queue. The batch is unordered
// within the vGIC window. Rejections name the first failed check:
// C2 ties virtual to physical, C3 preserves arrival order, C4 priorities.
InjectionDecision check_injection(const std::vector<IntId>& req,
                                  const std::deque<PendingRecord>& queue, uint32_t n);

struct RecEnterResult {
  bool entered = false;
  CheckOutcome outcome = CheckOutcome::Accept;
};

// Realm-world EL2 manager: RSI/RMI interface, device attach orchestration,
// stage-2 exclusivity, measurement extension, and the virtual-interrupt
// check engine guarding vGIC programming.
class Rmm {
 public:
  Rmm(Mode mode, Monitor& monitor, Gic& gic, DeviceSet& devices, PhysicalMemory& memory,
      TraceLog& trace);

  void create_vm(VmId vm);
  bool vm_exists(VmId vm) const { return vms_.count(vm) != 0; }

  // --- Device lifecycle -----------------------------------------------

  Status rsi_attach_dev(const AttachRequest& req);
  Status rmi_dev_finalize(VmId vm, DeviceId device);
  Status rsi_detach_dev(VmId vm, DeviceId device);
  void destroy_vm(VmId vm); // force reclaim path

  AttachState attach_state(VmId vm, DeviceId device) const;

  // Attach requests validated by rsi_attach_dev and awaiting hypervisor
  // delegation, and devices released by detach awaiting hypervisor reclaim.
  std::vector<AttachRequest> take_pending_delegations();
  std::vector<std::pair<VmId, DeviceId>> take_reclaimable();

  // --- Memory management ----------------------------------------------

  Status rmi_granule_delegate(GranuleIndex pa);
  Status rmi_granule_undelegate(GranuleIndex pa);
  Status rmi_data_create(VmId vm, GranuleIndex gpa, GranuleIndex pa);
  Status rmi_data_destroy(VmId vm, GranuleIndex gpa);

  // Baseline plumbing: stage-2 mappings to normal-world memory, installed
  // without delegation (shared MMIO and DMA windows in Bn/Br).
  void map_shared(VmId vm, GranuleIndex gpa, GranuleIndex pa, bool dma_visible);
  // Baseline plumbing: hypervisor-managed SMMU stream for a passthrough
  // device, mirroring the VM's DMA-visible mappings.
  void baseline_attach_stream(VmId vm, StreamId stream);

  // --- Interrupt virtualization ----------------------------------------

  // vGIC programming plus realm entry. In Dmi the request is validated
  // against the authenticated pending queue; in Br it is forwarded with only
  // the architectural vGIC validity checks.
  RecEnterResult rmi_rec_enter(VmId vm, const std::vector<IntId>& ids);

  Status rsi_ack_int(VmId vm, IntId id);

  // Check #1: pending-minus-injected, advisory only.
  int64_t check_count(VmId vm) const;

  const std::deque<PendingRecord>& pending_queue(VmId vm) const;
  void ingest_log(VmId vm);

  // --- Introspection ----------------------------------------------------

  const Stage2Table& s2(VmId vm) const;
  const SmmuState& smmu() const { return smmu_; }
  SmmuState& smmu_mut() { return smmu_; }
  uint64_t measurement(VmId vm) const;
  const std::set<GranuleIndex>& owned_granules(VmId vm) const;
  const std::set<GranuleIndex>& dma_visible(VmId vm) const;
  std::optional<VmId> owner_of(GranuleIndex pa) const;
  bool vm_dma_protected(VmId vm) const;
  bool id_isolated(VmId vm, IntId id) const;
  std::vector<VmId> vms() const;

 private:
  struct AttachInfo {
    AttachState state = AttachState::Idle;
    AttachRequest request;
  };

  struct VmState {
    Stage2Table s2;
    std::set<GranuleIndex> owned_pas;        // physical granules mapped to this VM
    std::set<GranuleIndex> dma_visible_gpas; // guest granules devices may reach
    uint64_t measurement = 0;
    std::deque<PendingRecord> pending;
    uint64_t log_cursor = 0;
    uint64_t logged_total = 0;
    uint64_t injected_total = 0;
    std::set<IntId> in_service; // level protected ids awaiting rsi_ack_int
    std::map<DeviceId, AttachInfo> attaches;
  };

  struct RegisteredInterrupt {
    VmId vm;
    uint8_t priority;
    Trigger trigger;
  };

  VmState& vm_state(VmId vm);
  const VmState& vm_state(VmId vm) const;
  std::optional<VmId> device_holder(DeviceId device) const;
  void apply_gptd_overlay(VmId vm);
  void revert_gptd_overlay(VmId vm);
  void sync_streams(VmId vm);
  void extend_measurement(VmId vm, uint64_t digest);
  void detach_common(VmId vm, DeviceId device, AttachInfo& info);

  Mode mode_;
  Monitor& monitor_;
  Gic& gic_;
  DeviceSet& devices_;
  PhysicalMemory& memory_;
  TraceLog& trace_;

  std::map<VmId, VmState> vms_;
  SmmuState smmu_;
  std::map<GranuleIndex, std::optional<VmId>> delegated_; // present = delegated
  std::map<IntId, RegisteredInterrupt> registered_;
  std::vector<AttachRequest> pending_delegations_;
  std::vector<std::pair<VmId, DeviceId>> reclaimable_;
};

// Contiguous runs of a granule set, used to batch GPT range updates.
std::vector<GranuleRange> contiguous_runs(const std::set<GranuleIndex>& granules);

} // namespace realmsim
