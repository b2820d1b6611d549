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

#include "realmsim/harness.hpp"

namespace realmsim {

namespace {

std::vector<DmaOpConfig> bfs_like_trace() {
  // Graph-traversal style transfer mix: 12 transfers, matching the shape of
  // a bfs run on the test engine.
  return {
      {AccessKind::Write, 3680, "nodes"},     {AccessKind::Write, 1840, "edges"},
      {AccessKind::Write, 1840, "mask"},      {AccessKind::Write, 1840, "updating"},
      {AccessKind::Write, 1840, "visited"},   {AccessKind::Write, 3680, "cost"},
      {AccessKind::Read, 1840, "mask-out"},   {AccessKind::Read, 1840, "updating-out"},
      {AccessKind::Write, 1840, "mask-in"},   {AccessKind::Read, 1840, "stop-flag"},
      {AccessKind::Read, 3680, "cost-out"},   {AccessKind::Read, 1840, "visited-out"},
  };
}

ScenarioConfig keyboard_scenario(const std::string& name, uint64_t keys, uint64_t backlog) {
  ScenarioConfig cfg;
  cfg.name = name;
  cfg.mode = Mode::Dmi;
  cfg.workload.kind = WorkloadKind::Keyboard;
  cfg.workload.keys = keys;
  cfg.workload.backlog = backlog;
  return cfg;
}

ScenarioConfig counter_scenario(const std::string& name, uint64_t events,
                                std::vector<uint64_t> lines, bool paced) {
  ScenarioConfig cfg;
  cfg.name = name;
  cfg.mode = Mode::Dmi;
  cfg.workload.kind = WorkloadKind::Counter;
  cfg.workload.events = events;
  cfg.workload.event_lines = std::move(lines);
  cfg.workload.paced = paced;
  return cfg;
}

ScenarioConfig dma_scenario(const std::string& name) {
  ScenarioConfig cfg;
  cfg.name = name;
  cfg.mode = Mode::Dmi;
  cfg.workload.kind = WorkloadKind::Dma;
  cfg.workload.dma_trace = bfs_like_trace();
  return cfg;
}

// Idle guest with a firmware-ready handler bound to the mouse interrupt; the
// mouse never sends, so the ready flag may only flip through injection.
ScenarioConfig wcnss_scenario() {
  ScenarioConfig cfg;
  cfg.name = "wcnss";
  cfg.mode = Mode::Dmi;
  cfg.workload.kind = WorkloadKind::Idle;
  cfg.workload.idle_iterations = 60;
  VmConfig vm;
  vm.id = 1;
  VmDeviceConfig mouse{"mouse", false, true, {{45, 60}}};
  vm.devices.push_back(mouse);
  vm.bindings.push_back({45, HandlerKind::WcnssReady, "mouse"});
  cfg.vms.push_back(vm);
  return cfg;
}

// Spurious-interrupt guard demo: job interrupts left unisolated, MMIO state
// protected. The injected interrupt reaches the handler, which reads a zero
// status register and bails out.
ScenarioConfig mali_scenario() {
  ScenarioConfig cfg;
  cfg.name = "mali";
  cfg.mode = Mode::Dmi;
  cfg.workload.kind = WorkloadKind::Idle;
  cfg.workload.idle_iterations = 60;
  cfg.strategy = {StrategyKind::InjectFake, 33};
  VmConfig vm;
  vm.id = 1;
  VmDeviceConfig engine{"engine0", false, false, {{33, 40}}};
  vm.devices.push_back(engine);
  vm.bindings.push_back({33, HandlerKind::MaliJob, "engine0"});
  cfg.vms.push_back(vm);
  return cfg;
}

} // namespace

std::vector<std::string> builtin_scenario_names() {
  return {
      "keyboard",          "keyboard-1000",     "storm",
      "bfs-dma",           "counter",           "wcnss",
      "mali",              "attack-inject-fake", "attack-reorder",
      "attack-drop",       "attack-replay",     "attack-premature-ack",
      "attack-gic-tamper", "attack-stall",      "attack-wrong-pa",
  };
}

std::optional<ScenarioConfig> builtin_scenario(const std::string& name) {
  if (name == "keyboard") return keyboard_scenario("keyboard", 10, 0);
  if (name == "keyboard-1000") return keyboard_scenario("keyboard-1000", 1000, 0);
  if (name == "storm") return keyboard_scenario("storm", 5, 5);
  if (name == "bfs-dma") return dma_scenario("bfs-dma");
  if (name == "counter") return counter_scenario("counter", 3, {0}, true);
  if (name == "wcnss") return wcnss_scenario();
  if (name == "mali") return mali_scenario();

  if (name == "attack-inject-fake") {
    // Authentic events arrive on line 0 (id 60); the fake targets id 61,
    // which is registered for the counter but never asserted by the device.
    ScenarioConfig cfg = counter_scenario(name, 3, {0}, true);
    VmConfig vm;
    vm.id = 1;
    VmDeviceConfig engine{"engine0", false, true, {{33, 40}, {60, 10}, {61, 10}}};
    vm.devices.push_back(engine);
    vm.bindings.push_back({60, HandlerKind::Counter, "engine0"});
    vm.bindings.push_back({61, HandlerKind::Counter, "engine0"});
    cfg.vms.push_back(vm);
    cfg.strategy = {StrategyKind::InjectFake, 61};
    return cfg;
  }
  if (name == "attack-reorder") {
    // Nine equal-priority event sources pending at once, window of 3.
    ScenarioConfig cfg =
        counter_scenario(name, 9, {0, 1, 2, 3, 4, 5, 6, 7, 8}, false);
    cfg.platform.vgic_slots = 3;
    cfg.strategy = {StrategyKind::ReorderBeyondWindow, 0};
    return cfg;
  }
  if (name == "attack-drop") {
    ScenarioConfig cfg = counter_scenario(name, 3, {0, 1, 2}, false);
    cfg.strategy = {StrategyKind::DropAndMiscount, 0};
    return cfg;
  }
  if (name == "attack-replay") {
    ScenarioConfig cfg = counter_scenario(name, 2, {0, 1}, true);
    cfg.strategy = {StrategyKind::ReplayConsumed, 0};
    return cfg;
  }
  if (name == "attack-premature-ack") {
    ScenarioConfig cfg = keyboard_scenario(name, 5, 5);
    cfg.strategy = {StrategyKind::PrematureLevelAck, 0};
    return cfg;
  }
  if (name == "attack-gic-tamper") {
    ScenarioConfig cfg = keyboard_scenario(name, 3, 0);
    cfg.strategy = {StrategyKind::GicTamper, 44};
    return cfg;
  }
  if (name == "attack-stall") {
    // A low-priority event arrives early, a high-priority one during the
    // stall; the resumed hypervisor tries to serve the stale one first.
    ScenarioConfig cfg = counter_scenario(name, 2, {0, 1}, true);
    cfg.workload.event_at = {4, 10};
    VmConfig vm;
    vm.id = 1;
    VmDeviceConfig engine{"engine0", false, true, {{33, 40}, {60, 20}, {61, 10}}};
    vm.devices.push_back(engine);
    vm.bindings.push_back({60, HandlerKind::Counter, "engine0"});
    vm.bindings.push_back({61, HandlerKind::Counter, "engine0"});
    cfg.vms.push_back(vm);
    cfg.strategy = {StrategyKind::StallScheduling, 8};
    return cfg;
  }
  if (name == "attack-wrong-pa") {
    ScenarioConfig cfg = dma_scenario(name);
    cfg.workload.dma_trace.resize(3);
    cfg.strategy = {StrategyKind::WrongPaMapping, 0};
    return cfg;
  }
  return std::nullopt;
}

} // namespace realmsim
