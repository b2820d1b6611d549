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

#include "realmsim/monitor.hpp"

using namespace realmsim;

namespace {

struct MonitorRig {
  TraceLog trace;
  Gic gic{{16, 2}};
  Monitor monitor;

  explicit MonitorRig(uint64_t log_capacity = 1024)
      : monitor(64, gic, trace, log_capacity) {
    gic.add_interrupt({kSgi7, Group::Group1, true, 0, Trigger::Edge, 0});
    gic.add_interrupt({44, Group::Group1, true, 50, Trigger::Level, 0});
    gic.add_interrupt({45, Group::Group1, true, 50, Trigger::Level, 0});
    gic.add_interrupt({33, Group::Group1, true, 40, Trigger::Edge, 0});
    gic.add_interrupt({30, Group::Group1, true, 60, Trigger::Edge, 0});
  }

  Status protect(VmId vm, IntId id, uint8_t prio, Trigger trig) {
    return monitor.smc_prot_int(vm, {{id, prio}}, {{id, trig}}, true);
  }
};

} // namespace

TEST_CASE("smc_prot_int registers, conflicts, and deregisters") {
  MonitorRig rig;

  CHECK(rig.protect(1, 44, 50, Trigger::Level).ok);
  CHECK(rig.monitor.is_protected(44));
  CHECK(rig.gic.config(44).group == Group::Group0);
  CHECK(rig.gic.config(44).priority == 50);

  SUBCASE("an id protected for another VM is rejected") {
    CHECK_FALSE(rig.protect(2, 44, 10, Trigger::Level).ok);
  }

  SUBCASE("re-registering for the same VM is allowed") {
    CHECK(rig.protect(1, 44, 50, Trigger::Level).ok);
  }

  SUBCASE("empty set is a no-op success") {
    CHECK(rig.monitor.smc_prot_int(1, {}, {}, true).ok);
  }

  SUBCASE("deregistration flips the group back") {
    CHECK(rig.monitor.smc_prot_int(1, {{44, 50}}, {}, false).ok);
    CHECK_FALSE(rig.monitor.is_protected(44));
    CHECK(rig.gic.config(44).group == Group::Group1);
  }

  SUBCASE("deregistering someone else's id fails") {
    CHECK_FALSE(rig.monitor.smc_prot_int(2, {{44, 50}}, {}, false).ok);
  }
}

TEST_CASE("monitor trap appends to both views, acks edges, notifies via SGI 7") {
  MonitorRig rig;
  REQUIRE(rig.protect(1, 44, 50, Trigger::Level).ok);
  REQUIRE(rig.protect(1, 33, 40, Trigger::Edge).ok);

  SUBCASE("edge: log, greedy physical ack, SGI 7") {
    rig.gic.assert_line(33, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(33);

    CHECK(rig.monitor.full_log(1).size() == 1);
    CHECK(rig.monitor.full_log(1)[0].id == 33);
    CHECK_FALSE(rig.gic.active(33)); // already acknowledged
    CHECK(rig.gic.pending(kSgi7));
  }

  SUBCASE("level: log but no physical ack until the VM is done") {
    rig.gic.assert_line(44, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(44);

    CHECK(rig.monitor.full_log(1).size() == 1);
    CHECK(rig.gic.active(44)); // still awaiting acknowledgment
    CHECK(rig.gic.pending(kSgi7));
  }

  SUBCASE("both views carry the same ids in the same order") {
    rig.gic.assert_line(33, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(33);
    rig.gic.assert_line(33, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(33);

    uint64_t rmm_cursor = 0, hyp_cursor = 0;
    auto realm_view = rig.monitor.read_realm_log(1, rmm_cursor);
    auto notify_view = rig.monitor.read_notify_queue(1, hyp_cursor);
    REQUIRE(realm_view.size() == 2);
    REQUIRE(notify_view.size() == 2);
    for (size_t i = 0; i < realm_view.size(); ++i) {
      CHECK(realm_view[i].id == notify_view[i].id);
      CHECK(realm_view[i].seq == notify_view[i].seq);
    }
    CHECK(realm_view[0].seq < realm_view[1].seq);
  }

  SUBCASE("a trap of an unprotected id is a model error") {
    CHECK_THROWS_AS(rig.monitor.monitor_trap(30), ModelError);
  }
}

TEST_CASE("log ring overflow drops the new record and counts it") {
  MonitorRig rig(2);
  REQUIRE(rig.protect(1, 33, 40, Trigger::Edge).ok);

  for (int i = 0; i < 4; ++i) {
    rig.gic.assert_line(33, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(33);
  }
  CHECK(rig.monitor.full_log(1).size() == 2);
  CHECK(rig.monitor.dropped_records(1) == 2);

  // Draining the queue makes room again.
  uint64_t cursor = 0;
  rig.monitor.read_realm_log(1, cursor);
  uint64_t hyp_cursor = 0;
  rig.monitor.read_notify_queue(1, hyp_cursor);
  rig.gic.assert_line(33, rig.trace);
  REQUIRE(rig.gic.take_next_delivery(rig.trace));
  rig.monitor.monitor_trap(33);
  CHECK(rig.monitor.full_log(1).size() == 3);
}

TEST_CASE("smc_gic_config is gated on range and protection") {
  MonitorRig rig;
  REQUIRE(rig.protect(1, 44, 50, Trigger::Level).ok);
  PhysAddr base = granule_base(16);

  SUBCASE("unprotected id: performed") {
    uint64_t v = 0;
    CHECK(rig.monitor.smc_gic_config(AccessKind::Write,
                                     base + 30 * Gic::kConfigStride + Gic::kFieldEnable, v)
              .ok);
    CHECK_FALSE(rig.gic.config(30).enabled);
  }

  SUBCASE("protected id: rejected with a violation event") {
    uint64_t v = 1;
    CHECK_FALSE(rig.monitor
                    .smc_gic_config(AccessKind::Write,
                                    base + 44 * Gic::kConfigStride + Gic::kFieldRouting, v)
                    .ok);
    bool violation = false;
    for (const TraceRecord& r : rig.trace.records())
      if (r.kind == EventKind::Violation && r.detail == "gic-config-protected")
        violation = true;
    CHECK(violation);
  }

  SUBCASE("address outside the GIC configuration space: rejected") {
    uint64_t v = 0;
    CHECK_FALSE(rig.monitor.smc_gic_config(AccessKind::Read, granule_base(3), v).ok);
    bool violation = false;
    for (const TraceRecord& r : rig.trace.records())
      if (r.kind == EventKind::Violation && r.detail == "gic-config-range") violation = true;
    CHECK(violation);
  }
}

TEST_CASE("physical acknowledgment policy") {
  MonitorRig rig;
  REQUIRE(rig.protect(1, 44, 50, Trigger::Level).ok);
  REQUIRE(rig.protect(1, 33, 40, Trigger::Edge).ok);

  SUBCASE("hypervisor acks unprotected ids") {
    rig.gic.assert_line(30, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    CHECK(rig.monitor.smc_ack_phys(SmcCaller::Hypervisor, 30).ok);
    CHECK(rig.gic.quiescent());
  }

  SUBCASE("hypervisor acking a protected id is a violation") {
    rig.gic.assert_line(44, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    CHECK_FALSE(rig.monitor.smc_ack_phys(SmcCaller::Hypervisor, 44).ok);
    CHECK(rig.gic.active(44)); // untouched
    bool violation = false;
    for (const TraceRecord& r : rig.trace.records())
      if (r.kind == EventKind::Violation && r.detail == "ack-protected") violation = true;
    CHECK(violation);
  }

  SUBCASE("RMM-forwarded ack of an in-service level id succeeds") {
    rig.gic.assert_line(44, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(44);
    rig.gic.deassert_line(44); // FIFO drained
    CHECK(rig.monitor.smc_ack_phys(SmcCaller::Rmm, 44).ok);
    CHECK_FALSE(rig.gic.pending(44)); // no re-fire
  }

  SUBCASE("RMM ack with the line still asserted re-fires legitimately") {
    rig.gic.assert_line(44, rig.trace);
    REQUIRE(rig.gic.take_next_delivery(rig.trace));
    rig.monitor.monitor_trap(44);
    CHECK(rig.monitor.smc_ack_phys(SmcCaller::Rmm, 44).ok);
    CHECK(rig.gic.pending(44)); // backlog remains
  }

  SUBCASE("RMM ack of an edge id is rejected") {
    CHECK_FALSE(rig.monitor.smc_ack_phys(SmcCaller::Rmm, 33).ok);
  }

  SUBCASE("RMM ack of an id not awaiting acknowledgment is rejected") {
    CHECK_FALSE(rig.monitor.smc_ack_phys(SmcCaller::Rmm, 44).ok);
  }
}

TEST_CASE("delegate and undelegate flip worlds in both tables") {
  MonitorRig rig;
  CHECK(rig.monitor.gptc().world_at(40) == World::Normal);
  rig.monitor.delegate_granule(40);
  CHECK(rig.monitor.gptc().world_at(40) == World::Realm);
  CHECK(rig.monitor.gptd().world_at(40) == World::Realm);
  rig.monitor.undelegate_granule(40);
  CHECK(rig.monitor.gptc().world_at(40) == World::Normal);
  CHECK(rig.monitor.gptd().world_at(40) == World::Normal);

  CHECK_THROWS_AS(rig.monitor.undelegate_granule(40), ModelError);
  rig.monitor.set_world_both({41, 1}, World::Root);
  CHECK_THROWS_AS(rig.monitor.delegate_granule(41), ModelError);
}
