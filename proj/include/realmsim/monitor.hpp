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
#include <vector>

#include "realmsim/gic.hpp"
#include "realmsim/mem_isolation.hpp"
#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

// Software-generated interrupt the monitor uses to tell the hypervisor that a
// protected physical interrupt arrived.
constexpr IntId kSgi7 = 7;

struct ProtectedEntry {
  VmId owner;
  uint8_t priority; // VM-assigned, drives the injection checks
  Trigger trigger;
};

struct LogRecord {
  uint64_t seq; // strictly increasing per VM
  IntId id;
  uint64_t arrival_step;
};

enum class SmcCaller : uint8_t { Hypervisor, Rmm };

// Root-world firmware: owns both granule protection tables and the GIC
// configuration space, traps Group0 interrupts, keeps the authenticated
// per-VM interrupt logs, and mediates GIC configuration and physical
// acknowledgment on the hypervisor's behalf.
class Monitor {
 public:
  Monitor(uint64_t granules, Gic& gic, TraceLog& trace, uint64_t log_capacity = 1024);

  const GranuleProtectionTable& gptc() const { return gptc_; }
  const GranuleProtectionTable& gptd() const { return gptd_; }

  // Boot-time and delegation-path GPT updates. All GPT mutation funnels
  // through the monitor.
  void set_world_both(GranuleRange range, World world);
  void set_gptd_range(GranuleRange range, World world);
  void delegate_granule(GranuleIndex pa);   // Normal -> Realm in both tables
  void undelegate_granule(GranuleIndex pa); // Realm -> Normal in both tables

  // Registers (or deregisters) device interrupts for isolation. Registered
  // ids become Group0 and subsequently trap to the monitor.
  Status smc_prot_int(VmId vm, const std::vector<std::pair<IntId, uint8_t>>& entries,
                      const std::map<IntId, Trigger>& triggers, bool enable);

  bool is_protected(IntId id) const { return protected_.count(id) != 0; }
  const std::map<IntId, ProtectedEntry>& protected_set() const { return protected_; }

  // Group0 trap handler: appends the interrupt to both shared log views,
  // greedily acknowledges edge-triggered interrupts, and notifies the
  // hypervisor with SGI 7.
  void monitor_trap(IntId id);

  // Checked GIC configuration for the hypervisor's trap-and-emulate path.
  // Performed only when the address is inside the GIC configuration space
  // and the targeted interrupt is not protected.
  Status smc_gic_config(AccessKind op, PhysAddr addr, uint64_t& value);

  // Physical acknowledgment. The hypervisor may acknowledge unprotected ids;
  // protected level ids are acknowledged only through the RMM after the
  // owning VM signalled virtual EOI.
  Status smc_ack_phys(SmcCaller caller, IntId id);

  // Realm-shared log view (read by the RMM) and normal-shared notification
  // queue (read by the hypervisor). Both receive the same records in the
  // same order; each reader advances its own cursor.
  std::vector<LogRecord> read_realm_log(VmId vm, uint64_t& cursor) const;
  std::vector<LogRecord> read_notify_queue(VmId vm, uint64_t& cursor) const;
  const std::vector<LogRecord>& full_log(VmId vm) const;

  uint64_t dropped_records(VmId vm) const;

 private:
  struct VmLogs {
    std::vector<LogRecord> realm_log;
    std::vector<LogRecord> notify;
    uint64_t next_seq = 1;
    uint64_t dropped = 0;
    uint64_t rmm_cursor_hint = 0; // low-water mark for ring occupancy
    uint64_t hyp_cursor_hint = 0;
  };

  VmLogs& logs(VmId vm) { return logs_[vm]; }

  GranuleProtectionTable gptc_;
  GranuleProtectionTable gptd_;
  Gic& gic_;
  TraceLog& trace_;
  uint64_t log_capacity_;
  std::map<IntId, ProtectedEntry> protected_;
  std::map<VmId, VmLogs> logs_;
};

} // namespace realmsim
