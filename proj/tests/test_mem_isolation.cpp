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

#include <doctest.h>

#include <random>

#include "realmsim/mem_isolation.hpp"

using namespace realmsim;

namespace {

// Reference access matrix, spelled out row by row for the brute-force check.
bool reference_allowed(World source, World target) {
  switch (source) {
    case World::Root: return true;
    case World::Realm:
      return target == World::Realm || target == World::Normal;
    case World::Secure:
      return target == World::Secure || target == World::Normal;
    case World::Normal:
      return target == World::Normal;
  }
  return false;
}

Stage2Table rebuild_reference_mirror(const Stage2Table& vm_table,
                                     const std::set<GranuleIndex>& dma_visible) {
  Stage2Table ref{Stage2Table::OwnerKind::Stream, 0};
  for (const auto& [gpa, entry] : vm_table.entries())
    if (dma_visible.count(gpa)) ref.map(gpa, entry);
  return ref;
}

} // namespace

TEST_CASE("access matrix covers every source/target pair on both paths") {
  TraceLog trace;
  const World worlds[] = {World::Normal, World::Secure, World::Realm, World::Root};

  for (World target : worlds) {
    GranuleProtectionTable gpt{GranuleProtectionTable::Identity::Gptc, 4};
    gpt.set_range({0, 4}, target, trace);

    for (World source : worlds) {
      AccessRequest core{CoreSource{source, std::nullopt}, 0x1000, AccessKind::Read};
      bool allowed = gpc_check(core, gpt) == GpcResult::Allowed;
      CHECK_MESSAGE(allowed == reference_allowed(source, target),
                    "core ", to_string(source), " -> ", to_string(target));
    }

    // Device transactions always originate in the normal world.
    AccessRequest dev{DeviceSource{7}, 0x1000, AccessKind::Write};
    bool allowed = gpc_check(dev, gpt) == GpcResult::Allowed;
    CHECK(allowed == reference_allowed(World::Normal, target));
  }
}

TEST_CASE("normal world core cannot read a realm granule") {
  TraceLog trace;
  GranuleProtectionTable gptc{GranuleProtectionTable::Identity::Gptc, 8};
  gptc.set_range({2, 1}, World::Realm, trace);

  AccessRequest req{CoreSource{World::Normal, std::nullopt}, granule_base(2), AccessKind::Read};
  CHECK(gpc_check(req, gptc) == GpcResult::Fault);

  AccessRequest root{CoreSource{World::Root, std::nullopt}, granule_base(2), AccessKind::Read};
  CHECK(gpc_check(root, gptc) == GpcResult::Allowed);
}

TEST_CASE("device stream sees realm memory as normal through GPTd") {
  TraceLog trace;
  GranuleProtectionTable gptd{GranuleProtectionTable::Identity::Gptd, 8};
  gptd.set_range({3, 1}, World::Normal, trace);

  AccessRequest req{DeviceSource{1}, granule_base(3), AccessKind::Write};
  CHECK(gpc_check(req, gptd) == GpcResult::Allowed);
}

TEST_CASE("gpc_check on an unmapped granule is a model error") {
  GranuleProtectionTable gpt{GranuleProtectionTable::Identity::Gptc, 4};
  AccessRequest req{CoreSource{World::Normal, std::nullopt}, granule_base(9), AccessKind::Read};
  CHECK_THROWS_AS(gpc_check(req, gpt), ModelError);
}

TEST_CASE("stage-2 translation") {
  Stage2Table table{Stage2Table::OwnerKind::Vm, 1};
  table.map(5, S2Entry{5, true, true});   // identity
  table.map(6, S2Entry{42, true, false}); // read-only

  SUBCASE("identity entry resolves to its own address") {
    auto r = table.translate(granule_base(5) + 0x123, AccessKind::Read);
    REQUIRE(std::holds_alternative<PhysAddr>(r));
    CHECK(std::get<PhysAddr>(r) == granule_base(5) + 0x123);
  }

  SUBCASE("unmapped guest address faults") {
    auto r = table.translate(granule_base(7), AccessKind::Read);
    CHECK(std::holds_alternative<TranslationFault>(r));
  }

  SUBCASE("permission mismatch faults") {
    auto r = table.translate(granule_base(6), AccessKind::Write);
    CHECK(std::holds_alternative<TranslationFault>(r));
  }

  SUBCASE("a probe from a table without the mapping faults") {
    Stage2Table other{Stage2Table::OwnerKind::Vm, 2};
    auto r = other.translate(granule_base(5), AccessKind::Read);
    CHECK(std::holds_alternative<TranslationFault>(r));
  }
}

TEST_CASE("gpt_set_range emits one update event per call and scoped flushes") {
  TraceLog trace;
  GranuleProtectionTable gptc{GranuleProtectionTable::Identity::Gptc, 16};
  GranuleProtectionTable gptd{GranuleProtectionTable::Identity::Gptd, 16};

  gptc.set_range({0, 8}, World::Realm, trace);
  gptd.set_range({0, 8}, World::Normal, trace);

  uint64_t updates = 0, core_flushes = 0, smmu_flushes = 0;
  for (const TraceRecord& r : trace.records()) {
    if (r.kind == EventKind::GptUpdate) updates++;
    if (r.kind == EventKind::Flush)
      (r.line.find("cores") != std::string::npos ? core_flushes : smmu_flushes)++;
  }
  CHECK(updates == 2);
  // Changing GPTd alone never flushes the core GPC caches.
  CHECK(core_flushes == 1);
  CHECK(smmu_flushes == 1);

  CHECK_THROWS_AS(gptc.set_range({12, 8}, World::Realm, trace), ModelError);
}

TEST_CASE("smmu_sync keeps stream tables entry-wise equal to the reference") {
  TraceLog trace;
  std::mt19937_64 rng(7);

  SmmuState smmu;
  smmu.streams[10] = Stage2Table{Stage2Table::OwnerKind::Stream, 10};
  smmu.streams[11] = Stage2Table{Stage2Table::OwnerKind::Stream, 11};
  smmu.streams_by_vm[1] = {10, 11};

  Stage2Table vm_table{Stage2Table::OwnerKind::Vm, 1};
  std::set<GranuleIndex> dma_visible;

  // Randomized add/remove sequence; after every mutation both streams must
  // equal the reference recomputation from the VM table.
  for (int step = 0; step < 300; ++step) {
    GranuleIndex gpa = rng() % 32;
    bool mmio_like = gpa >= 24; // a slice of guest space devices cannot reach
    if (rng() % 3 != 0) {
      vm_table.map(gpa, S2Entry{100 + gpa, true, true});
      if (!mmio_like) dma_visible.insert(gpa);
    } else {
      vm_table.unmap(gpa);
      dma_visible.erase(gpa);
    }
    smmu_sync(smmu, 1, vm_table, dma_visible, trace);

    Stage2Table ref = rebuild_reference_mirror(vm_table, dma_visible);
    for (StreamId stream : {StreamId{10}, StreamId{11}}) {
      CHECK(smmu.streams.at(stream).entries() == ref.entries());
    }
  }
}

TEST_CASE("split view impossibility: shared gpa resolves to one pa") {
  TraceLog trace;
  SmmuState smmu;
  smmu.streams[10] = Stage2Table{Stage2Table::OwnerKind::Stream, 10};
  smmu.streams_by_vm[1] = {10};

  Stage2Table vm_table{Stage2Table::OwnerKind::Vm, 1};
  vm_table.map(3, S2Entry{77, true, true});
  smmu_sync(smmu, 1, vm_table, {3}, trace);

  auto vm_pa = vm_table.translate(granule_base(3), AccessKind::Read);
  auto dev_pa = smmu.streams.at(10).translate(granule_base(3), AccessKind::Read);
  REQUIRE(std::holds_alternative<PhysAddr>(vm_pa));
  REQUIRE(std::holds_alternative<PhysAddr>(dev_pa));
  CHECK(std::get<PhysAddr>(vm_pa) == std::get<PhysAddr>(dev_pa));
}

TEST_CASE("sync of a VM without streams is a no-op") {
  TraceLog trace;
  SmmuState smmu;
  Stage2Table vm_table{Stage2Table::OwnerKind::Vm, 2};
  vm_table.map(0, S2Entry{1, true, true});
  smmu_sync(smmu, 2, vm_table, {0}, trace);
  CHECK(smmu.streams.empty());
  CHECK(trace.records().empty());
}

TEST_CASE("physical memory scrub zeroes the granule") {
  PhysicalMemory mem(4);
  mem.write64(granule_base(2) + 8, 0xdeadbeefcafef00dull);
  CHECK(mem.read64(granule_base(2) + 8) == 0xdeadbeefcafef00dull);
  mem.scrub({2, 1});
  CHECK(mem.read64(granule_base(2) + 8) == 0);
}
