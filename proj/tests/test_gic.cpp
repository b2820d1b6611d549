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

#include "realmsim/gic.hpp"

using namespace realmsim;

namespace {

Gic make_gic() {
  Gic gic{{16, 2}};
  gic.add_interrupt({44, Group::Group1, true, 50, Trigger::Level, 0});
  gic.add_interrupt({33, Group::Group1, true, 40, Trigger::Edge, 0});
  gic.add_interrupt({30, Group::Group1, true, 60, Trigger::Edge, 0});
  return gic;
}

uint64_t deliveries(Gic& gic, TraceLog& trace, IntId id) {
  // Drain with immediate acknowledgment; how often did `id` come out?
  uint64_t n = 0;
  for (int i = 0; i < 64; ++i) {
    auto d = gic.take_next_delivery(trace);
    if (!d) break;
    if (d->id == id) n++;
    gic.acknowledge(d->id, trace);
  }
  return n;
}

} // namespace

TEST_CASE("level interrupt re-fires after ack while the line stays asserted") {
  TraceLog trace;
  Gic gic = make_gic();

  gic.assert_line(44, trace);
  auto d = gic.take_next_delivery(trace);
  REQUIRE(d);
  CHECK(d->id == 44);
  CHECK(gic.active(44));

  // The device has not deasserted: acknowledging re-pends immediately.
  gic.acknowledge(44, trace);
  CHECK(gic.pending(44));

  // After deassert the ack is final.
  auto d2 = gic.take_next_delivery(trace);
  REQUIRE(d2);
  gic.deassert_line(44);
  gic.acknowledge(44, trace);
  CHECK_FALSE(gic.pending(44));
  CHECK(gic.quiescent());
}

TEST_CASE("edge interrupt does not re-fire without a new assert") {
  TraceLog trace;
  Gic gic = make_gic();
  gic.assert_line(33, trace);
  auto d = gic.take_next_delivery(trace);
  REQUIRE(d);
  gic.acknowledge(33, trace);
  CHECK(gic.quiescent());
}

TEST_CASE("edge asserts before delivery coalesce to one pending instance") {
  TraceLog trace;
  Gic gic = make_gic();
  gic.assert_line(33, trace);
  gic.assert_line(33, trace);
  CHECK(deliveries(gic, trace, 33) == 1);
  // Coalescing bound: deliveries never exceed asserts.
  uint64_t asserts = 0;
  for (const TraceRecord& r : trace.records())
    if (r.kind == EventKind::Assert && r.id == 33) asserts++;
  CHECK(asserts == 2);
}

TEST_CASE("asserting a disabled id pends only on re-enable") {
  TraceLog trace;
  Gic gic = make_gic();

  SUBCASE("edge is latched") {
    gic.set_enabled(33, false, trace);
    gic.assert_line(33, trace);
    CHECK_FALSE(gic.pending(33));
    gic.set_enabled(33, true, trace);
    CHECK(gic.pending(33));
  }

  SUBCASE("level follows the line") {
    gic.set_enabled(44, false, trace);
    gic.assert_line(44, trace);
    CHECK_FALSE(gic.pending(44));
    gic.set_enabled(44, true, trace);
    CHECK(gic.pending(44));
  }

  SUBCASE("level line dropped while disabled does not pend") {
    gic.set_enabled(44, false, trace);
    gic.assert_line(44, trace);
    gic.deassert_line(44);
    gic.set_enabled(44, true, trace);
    CHECK_FALSE(gic.pending(44));
  }
}

TEST_CASE("delivery order follows priority then id") {
  TraceLog trace;
  Gic gic = make_gic();
  gic.assert_line(30, trace); // priority 60
  gic.assert_line(44, trace); // priority 50
  gic.assert_line(33, trace); // priority 40

  auto d1 = gic.take_next_delivery(trace);
  auto d2 = gic.take_next_delivery(trace);
  auto d3 = gic.take_next_delivery(trace);
  REQUIRE(d1);
  REQUIRE(d2);
  REQUIRE(d3);
  CHECK(d1->id == 33);
  CHECK(d2->id == 44);
  CHECK(d3->id == 30);
}

TEST_CASE("an active interrupt is not redelivered until acknowledged") {
  TraceLog trace;
  Gic gic = make_gic();
  gic.assert_line(44, trace);
  REQUIRE(gic.take_next_delivery(trace));
  gic.assert_line(44, trace); // still active
  CHECK_FALSE(gic.take_next_delivery(trace).has_value());
}

TEST_CASE("acknowledging a non-pending id is a warning no-op") {
  TraceLog trace;
  Gic gic = make_gic();
  gic.acknowledge(33, trace);
  bool warned = false;
  for (const TraceRecord& r : trace.records())
    if (r.kind == EventKind::GicOp && r.line.find("ack-noop") != std::string::npos)
      warned = true;
  CHECK(warned);
}

TEST_CASE("unknown interrupt id is a model error") {
  TraceLog trace;
  Gic gic = make_gic();
  CHECK_THROWS_AS(gic.assert_line(99, trace), ModelError);
  CHECK_THROWS_AS(gic.acknowledge(99, trace), ModelError);
}

TEST_CASE("vGIC list register semantics") {
  TraceLog trace;
  Gic gic = make_gic();
  gic.add_vgic(1, 3);

  SUBCASE("programmed ids fire once each and then clear") {
    REQUIRE(gic.vgic(1).program({44, 33}));
    auto fired = gic.vgic(1).fire_all(trace);
    CHECK(fired == std::vector<IntId>{44, 33});
    CHECK(gic.vgic(1).fire_all(trace).empty());
  }

  SUBCASE("empty program fires nothing") {
    REQUIRE(gic.vgic(1).program({}));
    CHECK(gic.vgic(1).fire_all(trace).empty());
  }

  SUBCASE("the same id twice is rejected") {
    CHECK_FALSE(gic.vgic(1).program({44, 44}));
  }

  SUBCASE("more ids than slots is rejected") {
    CHECK_FALSE(gic.vgic(1).program({44, 33, 30, 7}));
  }

  SUBCASE("per-entry uniqueness holds over repeated entries") {
    for (int round = 0; round < 4; ++round) {
      REQUIRE(gic.vgic(1).program({44}));
      auto fired = gic.vgic(1).fire_all(trace);
      std::set<IntId> distinct(fired.begin(), fired.end());
      CHECK(distinct.size() == fired.size());
    }
  }
}

TEST_CASE("config space decode and field access") {
  TraceLog trace;
  Gic gic = make_gic();
  PhysAddr base = granule_base(16);

  uint64_t value = 0;
  CHECK(gic.config_write(base + 44 * Gic::kConfigStride + Gic::kFieldPriority, 9, trace).ok);
  CHECK(gic.config_read(base + 44 * Gic::kConfigStride + Gic::kFieldPriority, value).ok);
  CHECK(value == 9);

  CHECK(gic.config_write(base + 44 * Gic::kConfigStride + Gic::kFieldEnable, 0, trace).ok);
  CHECK_FALSE(gic.config(44).enabled);

  CHECK_FALSE(gic.decode_config_id(granule_base(15)).has_value());
  CHECK_FALSE(gic.config_read(base + 99 * Gic::kConfigStride, value).ok); // unknown id
}
