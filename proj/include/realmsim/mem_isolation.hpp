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
#include <variant>
#include <vector>

#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

// Physical memory as an array of granules, with the two granule protection
// tables and the stage-2 translation state for VMs (MMU path) and device
// streams (SMMU path).

struct CoreSource {
  World world;
  std::optional<VmId> vm; // executing VM, if any
};

struct DeviceSource {
  StreamId stream;
};

struct AccessRequest {
  std::variant<CoreSource, DeviceSource> source;
  PhysAddr address = 0;
  AccessKind kind = AccessKind::Read;

  bool is_device() const { return std::holds_alternative<DeviceSource>(source); }
  World source_world() const; // devices access through the normal world
};

enum class GpcResult : uint8_t { Allowed, Fault };

struct GranuleProtectionFault {
  PhysAddr address;
  World source;
  World target;
};

class GranuleProtectionTable {
 public:
  enum class Identity : uint8_t { Gptc, Gptd };

  GranuleProtectionTable() = default;
  GranuleProtectionTable(Identity identity, uint64_t granules, World initial = World::Normal)
      : identity_(identity), entries_(granules, initial) {}

  Identity identity() const { return identity_; }
  uint64_t size() const { return entries_.size(); }

  World world_at(GranuleIndex g) const {
    if (g >= entries_.size()) throw ModelError("GPT lookup outside modeled memory");
    return entries_[g];
  }

  // One trace event per call, not per granule. Changing GPTd alone only
  // affects the SMMU's GPC, so only an SMMU-scope flush is emitted for it;
  // GPTc changes flush the core GPC caches as well.
  void set_range(GranuleRange range, World world, TraceLog& trace);

  bool operator==(const GranuleProtectionTable& other) const {
    return entries_ == other.entries_;
  }

 private:
  Identity identity_ = Identity::Gptc;
  std::vector<World> entries_;
};

/// CCA access matrix: Root reaches every PAS; Realm reaches {Realm, Normal};
/// Secure reaches {Secure, Normal}; Normal reaches {Normal} only.
bool world_may_access(World source, World target);

GpcResult gpc_check(const AccessRequest& req, const GranuleProtectionTable& gpt);

struct S2Entry {
  GranuleIndex pa;
  bool read = true;
  bool write = true;
};

struct TranslationFault {
  GuestAddr gpa;
  AccessKind kind;
};

class Stage2Table {
 public:
  enum class OwnerKind : uint8_t { Vm, Stream };

  Stage2Table() = default;
  Stage2Table(OwnerKind kind, uint32_t owner) : owner_kind_(kind), owner_(owner) {}

  OwnerKind owner_kind() const { return owner_kind_; }
  uint32_t owner() const { return owner_; }

  void map(GranuleIndex gpa_granule, S2Entry entry) { entries_[gpa_granule] = entry; }
  void unmap(GranuleIndex gpa_granule) { entries_.erase(gpa_granule); }
  bool mapped(GranuleIndex gpa_granule) const { return entries_.count(gpa_granule) != 0; }
  std::optional<S2Entry> entry(GranuleIndex gpa_granule) const;

  std::variant<PhysAddr, TranslationFault> translate(GuestAddr gpa, AccessKind kind) const;

  const std::map<GranuleIndex, S2Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  OwnerKind owner_kind_ = OwnerKind::Vm;
  uint32_t owner_ = 0;
  std::map<GranuleIndex, S2Entry> entries_;
};

class PhysicalMemory {
 public:
  explicit PhysicalMemory(uint64_t granules) : bytes_(granules * kGranuleSize, 0) {}

  uint64_t granules() const { return bytes_.size() / kGranuleSize; }

  uint8_t read8(PhysAddr addr) const { return bytes_.at(addr); }
  void write8(PhysAddr addr, uint8_t v) { bytes_.at(addr) = v; }
  uint64_t read64(PhysAddr addr) const;
  void write64(PhysAddr addr, uint64_t v);

  void scrub(GranuleRange range);

 private:
  std::vector<uint8_t> bytes_;
};

// Stage-2 state for all SMMU streams, keyed by stream id, plus the set of
// streams belonging to each VM.
struct SmmuState {
  std::map<StreamId, Stage2Table> streams;
  std::map<VmId, std::set<StreamId>> streams_by_vm;

  bool vm_has_streams(VmId vm) const {
    auto it = streams_by_vm.find(vm);
    return it != streams_by_vm.end() && !it->second.empty();
  }
};

// Re-derives every attached stream's table from the owner VM's table,
// restricted to the VM's DMA-visible guest addresses.
void smmu_sync(SmmuState& smmu, VmId vm, const Stage2Table& vm_table,
               const std::set<GranuleIndex>& dma_visible_gpas, TraceLog& trace);

} // namespace realmsim
