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

#include "realmsim/mem_isolation.hpp"

namespace realmsim {

World AccessRequest::source_world() const {
  if (const auto* core = std::get_if<CoreSource>(&source)) return core->world;
  // The platform treats transactions from integrated devices as originating
  // in the normal world; the SMMU's GPC filters them against GPTd.
  return World::Normal;
}

void GranuleProtectionTable::set_range(GranuleRange range, World world, TraceLog& trace) {
  if (range.end() > entries_.size())
    throw ModelError("gpt_set_range outside modeled memory");
  for (GranuleIndex g = range.first; g < range.end(); ++g) entries_[g] = world;

  const char* which = identity_ == Identity::Gptc ? "gptc" : "gptd";
  trace.emit(EventKind::GptUpdate, {{"gpt", which},
                                    {"first", range.first},
                                    {"count", range.count},
                                    {"world", to_string(world)}});
  // A GPTd-only update never requires core GPC synchronization.
  trace.emit(EventKind::Flush,
             {{"scope", identity_ == Identity::Gptc ? "cores" : "smmu"}});
}

bool world_may_access(World source, World target) {
  switch (source) {
    case World::Root: return true;
    case World::Realm: return target == World::Realm || target == World::Normal;
    case World::Secure: return target == World::Secure || target == World::Normal;
    case World::Normal: return target == World::Normal;
  }
  return false;
}

GpcResult gpc_check(const AccessRequest& req, const GranuleProtectionTable& gpt) {
  World target = gpt.world_at(granule_of(req.address));
  return world_may_access(req.source_world(), target) ? GpcResult::Allowed
                                                      : GpcResult::Fault;
}

std::optional<S2Entry> Stage2Table::entry(GranuleIndex gpa_granule) const {
  auto it = entries_.find(gpa_granule);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::variant<PhysAddr, TranslationFault> Stage2Table::translate(GuestAddr gpa,
                                                                AccessKind kind) const {
  auto it = entries_.find(granule_of(gpa));
  if (it == entries_.end()) return TranslationFault{gpa, kind};
  const S2Entry& e = it->second;
  if ((kind == AccessKind::Read && !e.read) || (kind == AccessKind::Write && !e.write))
    return TranslationFault{gpa, kind};
  return granule_base(e.pa) | granule_offset(gpa);
}

uint64_t PhysicalMemory::read64(PhysAddr addr) const {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{bytes_.at(addr + i)} << (8 * i);
  return v;
}

void PhysicalMemory::write64(PhysAddr addr, uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.at(addr + i) = static_cast<uint8_t>(v >> (8 * i));
}

void PhysicalMemory::scrub(GranuleRange range) {
  if (range.end() * kGranuleSize > bytes_.size())
    throw ModelError("scrub outside modeled memory");
  std::fill(bytes_.begin() + range.first * kGranuleSize,
            bytes_.begin() + range.end() * kGranuleSize, uint8_t{0});
}

void smmu_sync(SmmuState& smmu, VmId vm, const Stage2Table& vm_table,
               const std::set<GranuleIndex>& dma_visible_gpas, TraceLog& trace) {
  auto it = smmu.streams_by_vm.find(vm);
  if (it == smmu.streams_by_vm.end() || it->second.empty()) return;

  for (StreamId stream : it->second) {
    Stage2Table& table = smmu.streams.at(stream);
    table.clear();
    for (const auto& [gpa, entry] : vm_table.entries()) {
      if (dma_visible_gpas.count(gpa)) table.map(gpa, entry);
    }
  }
  trace.emit(EventKind::SmmuSync,
             {{"vm", vm}, {"streams", static_cast<uint64_t>(it->second.size())}});
}

} // namespace realmsim
