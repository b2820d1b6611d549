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

#include "realmsim/devices.hpp"
#include "realmsim/fnv.hpp"

using namespace realmsim;

namespace {

DeviceDescriptor keyboard_desc() {
  return {1, "keyboard", DeviceClass::MmioOnly, {{18, 1}}, false, {{44, Trigger::Level}}};
}

DeviceDescriptor engine_desc() {
  DeviceDescriptor d{6, "engine0", DeviceClass::LegacyDma, {{24, 2}}, true,
                     {{33, Trigger::Edge}}};
  d.interrupts.push_back({60, Trigger::Edge});
  return d;
}

struct EngineRig {
  TraceLog trace;
  Gic gic{{16, 2}};
  PhysicalMemory memory{64};
  SmmuState smmu;
  GranuleProtectionTable gptd{GranuleProtectionTable::Identity::Gptd, 64};
  DmaContext ctx{smmu, gptd, memory, trace};
  TestEngine engine{engine_desc(), std::nullopt};

  EngineRig() {
    gic.add_interrupt({33, Group::Group1, true, 40, Trigger::Edge, 0});
    gic.add_interrupt({60, Group::Group1, true, 10, Trigger::Edge, 0});
    engine.bind_dma(&ctx);
    engine.set_pattern_seed(5);
  }

  void attach_stream(std::initializer_list<GranuleIndex> gpas) {
    Stage2Table table{Stage2Table::OwnerKind::Stream, 6};
    for (GranuleIndex g : gpas) table.map(g, S2Entry{40 + g, true, true});
    smmu.streams[6] = table;
    smmu.streams_by_vm[1] = {6};
    for (GranuleIndex g : gpas) gptd.set_range({40 + g, 1}, World::Normal, trace);
  }

  DmaOutcome run(AccessKind dir, uint64_t bytes, GuestAddr gpa) {
    engine.mmio_write(TestEngine::kRegDir, dir == AccessKind::Write ? 0 : 1, gic, trace);
    engine.mmio_write(TestEngine::kRegLen, bytes, gic, trace);
    engine.mmio_write(TestEngine::kRegGpa, gpa, gic, trace);
    engine.mmio_write(TestEngine::kRegTag, 1, gic, trace);
    engine.mmio_write(TestEngine::kRegGo, 1, gic, trace);
    return engine.reg(TestEngine::kRegFault) == 0 ? DmaOutcome::Ok
                                                  : DmaOutcome::TranslationFault;
  }
};

} // namespace

TEST_CASE("keyboard FIFO: data read pops one byte and drops the line") {
  TraceLog trace;
  Gic gic{{16, 2}};
  gic.add_interrupt({44, Group::Group1, true, 50, Trigger::Level, 0});
  FifoDevice kbd{keyboard_desc(), std::nullopt};

  kbd.push_byte('a', gic, trace);
  kbd.push_byte('b', gic, trace);
  CHECK(gic.line_asserted(44));
  CHECK(kbd.mmio_read(FifoDevice::kRegStatus, gic, trace) == 1);

  CHECK(kbd.mmio_read(FifoDevice::kRegData, gic, trace) == 'a');
  CHECK(gic.line_asserted(44)); // one byte left
  CHECK(kbd.mmio_read(FifoDevice::kRegData, gic, trace) == 'b');
  CHECK_FALSE(gic.line_asserted(44));
  CHECK(kbd.mmio_read(FifoDevice::kRegStatus, gic, trace) == 0);
}

TEST_CASE("soft reset restores the all-zero state and is idempotent") {
  TraceLog trace;
  Gic gic{{16, 2}};
  gic.add_interrupt({44, Group::Group1, true, 50, Trigger::Level, 0});
  FifoDevice kbd{keyboard_desc(), std::nullopt};

  kbd.set_reg(0x20, 0x1234); // hypervisor pre-seeds state
  kbd.push_byte('x', gic, trace);

  kbd.soft_reset(gic, trace);
  CHECK(kbd.state().registers.empty());
  CHECK(kbd.state().fifo.empty());
  CHECK_FALSE(gic.line_asserted(44));
  CHECK(kbd.state().reset_count == 1);
  CHECK(kbd.mmio_read(0x20, gic, trace) == 0);

  uint64_t m1 = kbd.measure_state();
  kbd.soft_reset(gic, trace);
  CHECK(kbd.state().reset_count == 2);
  CHECK(kbd.measure_state() == m1);
}

TEST_CASE("devices may only assert interrupt lines from their descriptor") {
  TraceLog trace;
  Gic gic{{16, 2}};
  gic.add_interrupt({44, Group::Group1, true, 50, Trigger::Level, 0});
  gic.add_interrupt({45, Group::Group1, true, 50, Trigger::Level, 0});

  DeviceDescriptor bad = keyboard_desc();
  bad.interrupts.clear();
  bad.interrupts.push_back({45, Trigger::Level}); // not the keyboard's line
  FifoDevice kbd{keyboard_desc(), std::nullopt};
  (void)bad;

  CHECK_THROWS_AS(
      [&] {
        struct Rogue : FifoDevice {
          using FifoDevice::FifoDevice;
          void poke(Gic& g, TraceLog& t) { assert_irq(45, g, t); }
        };
        Rogue rogue{keyboard_desc(), std::nullopt};
        rogue.poke(gic, trace);
      }(),
      ModelError);
}

TEST_CASE("PAS filter views") {
  TraceLog trace;
  Gic gic{{16, 2}};
  DeviceSet devices;

  DeviceDescriptor gps{5, "gps", DeviceClass::MmioOnlyPasFilter, {{22, 1}}, false, {}};
  PasFilterView filter;
  filter.set_policy(World::Normal, PasFilterView::Policy::Zero);
  filter.set_policy(World::Secure, PasFilterView::Policy::Zero);
  devices.add(std::make_unique<Device>(gps, filter));
  devices.device(5).set_reg(0x0, 474747); // coordinates

  SUBCASE("normal world reads zero, realm reads the value") {
    auto normal = devices.mmio_access(5, 0x0, AccessKind::Read, 0, World::Normal, gic, trace);
    CHECK(normal.value == 0);
    auto realm = devices.mmio_access(5, 0x0, AccessKind::Read, 0, World::Realm, gic, trace);
    CHECK(realm.value == 474747);
  }

  SUBCASE("root always sees the full view") {
    auto root = devices.mmio_access(5, 0x0, AccessKind::Read, 0, World::Root, gic, trace);
    CHECK(root.value == 474747);
  }

  SUBCASE("read-only view lets reads through and drops writes") {
    DeviceDescriptor led{3, "led", DeviceClass::MmioOnlyPasFilter, {{20, 1}}, false, {}};
    PasFilterView ro;
    ro.set_policy(World::Normal, PasFilterView::Policy::ReadOnly);
    devices.add(std::make_unique<LedDevice>(led, ro));

    CHECK(devices.mmio_access(3, 0, AccessKind::Write, 7, World::Realm, gic, trace).ok);
    auto realm = devices.mmio_access(3, 0, AccessKind::Read, 0, World::Realm, gic, trace);
    CHECK(realm.value == 7);

    CHECK_FALSE(devices.mmio_access(3, 0, AccessKind::Write, 9, World::Normal, gic, trace).ok);
    auto normal = devices.mmio_access(3, 0, AccessKind::Read, 0, World::Normal, gic, trace);
    CHECK(normal.value == 7);
  }
}

TEST_CASE("one-to-one MMIO resolution and platform validation") {
  DeviceSet devices;
  devices.add(std::make_unique<FifoDevice>(keyboard_desc(), std::nullopt));
  devices.add(std::make_unique<TestEngine>(engine_desc(), std::nullopt));
  devices.validate();

  auto hit = devices.resolve_mmio(granule_base(18) + 0x8);
  REQUIRE(hit);
  CHECK(hit->device == 1);
  CHECK(hit->offset == 0x8);

  auto second_granule = devices.resolve_mmio(granule_base(25) + 4);
  REQUIRE(second_granule);
  CHECK(second_granule->device == 6);
  CHECK(second_granule->offset == kGranuleSize + 4);

  CHECK_FALSE(devices.resolve_mmio(granule_base(50)).has_value());

  DeviceSet overlapping;
  overlapping.add(std::make_unique<FifoDevice>(keyboard_desc(), std::nullopt));
  DeviceDescriptor clash = engine_desc();
  clash.id = 9;
  clash.mmio = {{18, 1}};
  clash.interrupts = {{90, Trigger::Edge}};
  overlapping.add(std::make_unique<Device>(clash, std::nullopt));
  CHECK_THROWS_AS(overlapping.validate(), ModelError);
}

TEST_CASE("measurement digests") {
  DeviceSet devices;
  devices.add(std::make_unique<FifoDevice>(keyboard_desc(), std::nullopt));

  SUBCASE("deterministic") {
    CHECK(devices.device(1).measure_state() == devices.device(1).measure_state());
    CHECK(keyboard_desc().measure() == keyboard_desc().measure());
  }

  SUBCASE("empty register file digests descriptor only") {
    Fnv1a64 h{keyboard_desc().measure()};
    CHECK(devices.device(1).measure_state() == h.digest());
  }

  SUBCASE("any one-register perturbation changes the digest") {
    uint64_t baseline = devices.device(1).measure_state();
    for (uint64_t offset = 0; offset < 0x40; offset += 8) {
      devices.device(1).set_reg(offset, 1);
      CHECK(devices.device(1).measure_state() != baseline);
      devices.device(1).set_reg(offset, 0);
      CHECK(devices.device(1).measure_state() == baseline);
    }
  }

  SUBCASE("descriptor fields feed the tree measurement") {
    DeviceDescriptor a = keyboard_desc();
    DeviceDescriptor b = keyboard_desc();
    b.interrupts[0].trigger = Trigger::Edge;
    CHECK(a.measure() != b.measure());
  }
}

TEST_CASE("DMA issue through stream table and GPTd") {
  EngineRig rig;

  SUBCASE("attached engine writes the owner buffer") {
    rig.attach_stream({2});
    CHECK(rig.run(AccessKind::Write, 64, granule_base(2)) == DmaOutcome::Ok);
    CHECK(rig.engine.reg(TestEngine::kRegStatus) == 1);
    // Pattern landed in backing memory at the translated address.
    CHECK(rig.memory.read8(granule_base(42)) == TestEngine::pattern_byte(5, 1, 0));
    CHECK(rig.gic.pending(33)); // completion interrupt
  }

  SUBCASE("unattached engine faults on translation") {
    CHECK(rig.run(AccessKind::Write, 64, granule_base(2)) != DmaOutcome::Ok);
    CHECK(rig.engine.reg(TestEngine::kRegStatus) == 0);
    CHECK_FALSE(rig.gic.pending(33));
  }

  SUBCASE("stream mapping to a realm-in-GPTd granule faults on the GPC") {
    rig.attach_stream({2});
    rig.gptd.set_range({42, 1}, World::Realm, rig.trace);
    CHECK(rig.run(AccessKind::Write, 64, granule_base(2)) != DmaOutcome::Ok);
  }

  SUBCASE("status register clears on read") {
    rig.attach_stream({2});
    CHECK(rig.run(AccessKind::Read, 16, granule_base(2)) == DmaOutcome::Ok);
    CHECK(rig.engine.mmio_read(TestEngine::kRegStatus, rig.gic, rig.trace) == 1);
    CHECK(rig.engine.mmio_read(TestEngine::kRegStatus, rig.gic, rig.trace) == 0);
  }
}

TEST_CASE("engine event lines pulse only configured interrupts") {
  EngineRig rig;
  rig.engine.pulse_event(0, rig.gic, rig.trace); // line after completion: id 60
  CHECK(rig.gic.pending(60));
  CHECK_THROWS_AS(rig.engine.pulse_event(5, rig.gic, rig.trace), ModelError);
}
