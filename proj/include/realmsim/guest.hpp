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
#include <string>
#include <vector>

#include "realmsim/devices.hpp"
#include "realmsim/gic.hpp"
#include "realmsim/rmm.hpp"
#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

enum class HandlerKind : uint8_t { Counter, WcnssReady, MaliJob, KeyboardIsr, DmaDoneIsr };

const char* to_string(HandlerKind k);
std::optional<HandlerKind> handler_from_string(const std::string& name);

// Externally visible guest state; mutated only by driver handlers running on
// virtual-interrupt delivery or by MMIO completion.
struct GuestObservables {
  uint64_t counter = 0;
  bool wcnss_ready = false;
  uint64_t mali_jobs_done = 0;
  std::vector<uint8_t> keys_received;
  std::map<std::string, uint64_t> dma_digests; // buffer tag -> content digest

  bool operator==(const GuestObservables&) const = default;
};

struct DmaJob {
  AccessKind op; // Read: device reads guest memory; Write: device writes it
  uint64_t bytes;
  std::string tag;
};

struct GuestDeviceBinding {
  DeviceId device = 0;
  GranuleIndex gpa_base = 0; // first guest granule of the device MMIO window
  bool dma_protection = false;
  bool interrupt_isolation = false;
  std::vector<std::pair<IntId, uint8_t>> interrupts;
};

// Minimal realm (or normal) VM: driver state machines keyed by interrupt id,
// an MMIO/memory access path through its stage-2 table and the core GPC, and
// a small workload engine driven one slice per VM entry.
class Guest {
 public:
  Guest(VmId vm, Mode mode, Rmm& rmm, const Monitor& monitor, DeviceSet& devices,
        PhysicalMemory& memory, Gic& gic, TraceLog& trace);

  void bind_handler(IntId id, HandlerKind handler, DeviceId device);
  void add_device(const GuestDeviceBinding& binding);
  void set_dma_plan(std::vector<DmaJob> jobs, GranuleIndex region_gpa, uint64_t region_granules,
                    uint64_t pattern_seed);

  // Virtual interrupt fired on VM entry.
  void handle_virq(IntId id);

  // One scheduling slice: progress attach requests first, then the workload.
  void step();

  // One MMIO read; true when the register holds the expected value.
  bool poll_device(DeviceId device, uint64_t offset, uint64_t expected);

  const GuestObservables& observables() const { return observables_; }
  std::vector<IntId> take_eois() { return std::exchange(slice_eois_, {}); }

  bool attach_complete() const;
  bool dma_done() const { return dma_next_ >= dma_jobs_.size() && !dma_in_flight_; }
  uint64_t dma_verified() const { return dma_verified_; }
  uint64_t integrity_failures() const { return integrity_failures_; }
  uint64_t spurious() const { return spurious_; }
  World world() const { return world_; }

  // CPU-path access helpers (stage-2 translate, then GPC on GPTc unless the
  // target device carries its own PAS filter).
  std::optional<uint64_t> mmio(DeviceId device, uint64_t offset, AccessKind kind,
                               uint64_t value = 0);
  std::optional<uint8_t> mem_read8(GuestAddr gpa);
  bool mem_write8(GuestAddr gpa, uint8_t value);

 private:
  struct Binding {
    HandlerKind handler;
    DeviceId device;
  };

  void eoi(IntId id);
  std::optional<PhysAddr> resolve(GuestAddr gpa, AccessKind kind, bool* pas_filtered);
  const GuestDeviceBinding* device_binding(DeviceId device) const;
  void step_dma();
  bool id_is_level(IntId id) const;

  VmId vm_;
  Mode mode_;
  World world_;
  Rmm& rmm_;
  const Monitor& monitor_;
  DeviceSet& devices_;
  PhysicalMemory& memory_;
  Gic& gic_;
  TraceLog& trace_;

  std::map<IntId, Binding> bindings_;
  std::vector<GuestDeviceBinding> devices_cfg_;
  std::map<DeviceId, uint32_t> attach_retries_;
  GuestObservables observables_;
  std::vector<IntId> slice_eois_;
  uint64_t spurious_ = 0;

  std::vector<DmaJob> dma_jobs_;
  size_t dma_next_ = 0;
  bool dma_in_flight_ = false;
  GranuleIndex dma_region_gpa_ = 0;
  uint64_t dma_region_granules_ = 0;
  uint64_t dma_pattern_seed_ = 0;
  uint64_t dma_expected_digest_ = 0;
  uint64_t dma_verified_ = 0;
  uint64_t integrity_failures_ = 0;
  DeviceId dma_engine_ = 0;
};

} // namespace realmsim
