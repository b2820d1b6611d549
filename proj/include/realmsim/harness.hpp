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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "realmsim/devices.hpp"
#include "realmsim/guest.hpp"
#include "realmsim/hypervisor.hpp"
#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

enum class WorkloadKind : uint8_t { Idle, Keyboard, Dma, Counter, Button, Led };

const char* to_string(WorkloadKind k);
std::optional<WorkloadKind> workload_from_string(const std::string& name);

struct DmaOpConfig {
  AccessKind op; // Read: device reads guest memory; Write: device writes it
  uint64_t bytes;
  std::string tag;
};

struct WorkloadConfig {
  WorkloadKind kind = WorkloadKind::Idle;

  // keyboard: `keys` total key presses, `backlog` of them preloaded into the
  // FIFO before the run starts. The next key is typed only after the guest
  // EOIs the previous one.
  uint64_t keys = 0;
  uint64_t backlog = 0;

  // dma: inline trace or a line-delimited file of {op, bytes, tag} records.
  std::vector<DmaOpConfig> dma_trace;
  std::string dma_trace_file;

  // counter: `events` pulses over the engine's aux lines, round-robin across
  // `event_lines`. Paced (after previous EOI), burst (all at once), or timed
  // via per-event iteration gates.
  uint64_t events = 0;
  std::vector<uint64_t> event_lines = {0};
  bool paced = true;
  std::vector<uint64_t> event_at;

  uint64_t idle_iterations = 20;
  uint64_t presses = 0; // button
};

struct PlatformDeviceConfig {
  DeviceDescriptor desc;
  std::string model; // keyboard | mouse | led | button | engine | plain
  std::vector<std::pair<World, PasFilterView::Policy>> filter;
};

struct PlatformConfig {
  uint64_t memory_granules = 4096;
  uint32_t vgic_slots = 4;
  GranuleRange gic_range{16, 2};
  uint64_t monitor_log_capacity = 1024;
  std::vector<PlatformDeviceConfig> devices; // empty -> default platform
};

struct VmDeviceConfig {
  std::string device;
  bool dma_protection = false;
  bool interrupt_isolation = true;
  std::vector<std::pair<IntId, uint8_t>> priorities;
};

struct BindingConfig {
  IntId id;
  HandlerKind handler;
  std::string device;
};

struct VmConfig {
  VmId id = 1;
  uint64_t ram_granules = 32;
  std::vector<VmDeviceConfig> devices;
  std::vector<BindingConfig> bindings;
};

struct CostTable {
  uint64_t world_switch = 100;
  uint64_t interface_call = 50; // SMC / RMI / RSI
  uint64_t mmio = 5;
  uint64_t gic_op = 5;
  uint64_t other = 1;

  uint64_t cost(EventKind k) const;
  bool operator==(const CostTable&) const = default;
};

// Fully determines a run: identical config implies an identical trace.
struct ScenarioConfig {
  std::string name = "scenario";
  Mode mode = Mode::Dmi;
  StrategyConfig strategy;
  uint64_t seed = 1;
  uint64_t step_limit = 10'000'000;
  bool check_invariants = true;
  PlatformConfig platform;
  std::vector<VmConfig> vms; // empty -> one default VM for the workload
  WorkloadConfig workload;
};

Status parse_scenario_json(const std::string& text, ScenarioConfig& out);
Status load_scenario_file(const std::string& path, ScenarioConfig& out);
std::string scenario_to_json(const ScenarioConfig& cfg);

// Fills in the default platform and a default VM suited to the workload.
ScenarioConfig normalize_scenario(ScenarioConfig cfg);

struct MetricsReport {
  uint64_t irq_injected = 0;
  uint64_t rmi = 0, rsi = 0, smc = 0;
  uint64_t traps = 0, gpfs = 0, asserts = 0, deliveries = 0, eois = 0;
  uint64_t resets = 0, dma_ops = 0, mmio_ops = 0, violations = 0;
  uint64_t ws_root = 0, ws_realm = 0, ws_normal = 0;
  uint64_t cost_units = 0;

  uint64_t world_switch_total() const { return ws_root + ws_realm + ws_normal; }
  bool operator==(const MetricsReport&) const = default;
  std::string to_json() const;
};

MetricsReport compute_metrics(const std::vector<TraceRecord>& records, const CostTable& costs);
Status metrics_from_trace_text(const std::string& text, const CostTable& costs,
                               MetricsReport& out);

uint64_t count_events(const TraceLog& trace, EventKind kind,
                      std::optional<IntId> id = std::nullopt);

enum class ExitStatus : int {
  Clean = 0,
  ConfigError = 1,
  ViolationsDetected = 2,
  AttackSucceeded = 3,
};

struct RunResult {
  ExitStatus status = ExitStatus::Clean;
  std::string error;
  MetricsReport metrics;
  std::map<VmId, GuestObservables> observables;
  std::shared_ptr<const TraceLog> trace;
  uint64_t dma_verified = 0;
  uint64_t integrity_failures = 0;

  const GuestObservables& vm1() const;
};

RunResult run_scenario(const ScenarioConfig& cfg);

// Runs both configs (same workload required) and reports per-metric values
// and ratios as JSON.
Status compare_runs(const ScenarioConfig& a, const ScenarioConfig& b, std::string& json_out);

struct ReplayVerdict {
  bool identical = false;
  uint64_t diverged_at_step = 0; // 0 when identical
};

// Re-executes the config and byte-compares against a previously written trace.
ReplayVerdict replay_trace(const std::string& trace_text, const ScenarioConfig& cfg);

std::vector<std::string> builtin_scenario_names();
std::optional<ScenarioConfig> builtin_scenario(const std::string& name);

} // namespace realmsim
