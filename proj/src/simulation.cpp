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

#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "realmsim/harness.hpp"
#include "realmsim/monitor.hpp"

namespace realmsim {

namespace {

constexpr GranuleIndex kMonitorBase = 0, kMonitorGranules = 16;
constexpr GranuleIndex kRmmBase = 32, kRmmGranules = 32;
constexpr GranuleIndex kVmRamBase = 256;
constexpr GranuleIndex kDeviceGpaBase = 0x100; // guest granule for first device
constexpr GranuleIndex kDeviceGpaStride = 0x10;
constexpr GranuleIndex kSharedGpaBase = 0x200; // baseline DMA window in guest space
constexpr uint64_t kDmaRegionGranules = 16;
constexpr GranuleIndex kDmaRegionGpa = 8; // inside VM RAM when protected
constexpr int kDeliveryBudget = 8;

std::vector<PlatformDeviceConfig> default_platform_devices() {
  std::vector<PlatformDeviceConfig> devs;

  PlatformDeviceConfig keyboard;
  keyboard.desc = {1, "keyboard", DeviceClass::MmioOnly, {{18, 1}}, false,
                   {{44, Trigger::Level}}};
  keyboard.model = "keyboard";
  devs.push_back(keyboard);

  PlatformDeviceConfig mouse;
  mouse.desc = {2, "mouse", DeviceClass::MmioOnly, {{19, 1}}, false, {{45, Trigger::Level}}};
  mouse.model = "mouse";
  devs.push_back(mouse);

  PlatformDeviceConfig led;
  led.desc = {3, "led", DeviceClass::MmioOnly, {{20, 1}}, false, {}};
  led.model = "led";
  devs.push_back(led);

  PlatformDeviceConfig button;
  button.desc = {4, "button", DeviceClass::MmioOnly, {{21, 1}}, false, {}};
  button.model = "button";
  devs.push_back(button);

  // Location sensor with its own PAS filter: the normal world reads zeros.
  PlatformDeviceConfig gps;
  gps.desc = {5, "gps", DeviceClass::MmioOnlyPasFilter, {{22, 1}}, false, {}};
  gps.model = "plain";
  gps.filter = {{World::Normal, PasFilterView::Policy::Zero},
                {World::Secure, PasFilterView::Policy::Zero}};
  devs.push_back(gps);

  // Two DMA test engines; engine0 additionally exposes nine scriptable edge
  // event lines for interrupt-heavy scenarios.
  PlatformDeviceConfig engine0;
  engine0.desc = {6, "engine0", DeviceClass::LegacyDma, {{24, 2}}, true,
                  {{33, Trigger::Edge}}};
  for (IntId id = 60; id <= 68; ++id) engine0.desc.interrupts.push_back({id, Trigger::Edge});
  engine0.model = "engine";
  devs.push_back(engine0);

  PlatformDeviceConfig engine1;
  engine1.desc = {7, "engine1", DeviceClass::LegacyDma, {{26, 2}}, true,
                  {{34, Trigger::Edge}}};
  engine1.model = "engine";
  devs.push_back(engine1);

  return devs;
}

VmConfig default_vm_for(const WorkloadConfig& w) {
  VmConfig vm;
  vm.id = 1;
  switch (w.kind) {
    case WorkloadKind::Keyboard: {
      VmDeviceConfig d{"keyboard", false, true, {{44, 50}}};
      vm.devices.push_back(d);
      vm.bindings.push_back({44, HandlerKind::KeyboardIsr, "keyboard"});
      break;
    }
    case WorkloadKind::Dma: {
      VmDeviceConfig d{"engine0", true, true, {{33, 40}}};
      vm.devices.push_back(d);
      vm.bindings.push_back({33, HandlerKind::DmaDoneIsr, "engine0"});
      break;
    }
    case WorkloadKind::Counter: {
      VmDeviceConfig d{"engine0", false, true, {{33, 40}}};
      for (uint64_t line : w.event_lines)
        d.priorities.push_back({static_cast<IntId>(60 + line), 10});
      vm.devices.push_back(d);
      for (uint64_t line : w.event_lines)
        vm.bindings.push_back(
            {static_cast<IntId>(60 + line), HandlerKind::Counter, "engine0"});
      break;
    }
    case WorkloadKind::Button: {
      VmDeviceConfig d{"button", false, false, {}};
      vm.devices.push_back(d);
      break;
    }
    case WorkloadKind::Led: {
      VmDeviceConfig d{"led", false, false, {}};
      vm.devices.push_back(d);
      break;
    }
    case WorkloadKind::Idle:
      break;
  }
  return vm;
}

std::unique_ptr<Device> make_device(const PlatformDeviceConfig& cfg) {
  std::optional<PasFilterView> filter;
  if (!cfg.filter.empty()) {
    PasFilterView view;
    for (const auto& [world, policy] : cfg.filter) view.set_policy(world, policy);
    filter = view;
  }
  if (cfg.model == "keyboard" || cfg.model == "mouse")
    return std::make_unique<FifoDevice>(cfg.desc, filter);
  if (cfg.model == "led") return std::make_unique<LedDevice>(cfg.desc, filter);
  if (cfg.model == "button") return std::make_unique<ButtonDevice>(cfg.desc, filter);
  if (cfg.model == "engine") return std::make_unique<TestEngine>(cfg.desc, filter);
  if (cfg.model == "plain") return std::make_unique<Device>(cfg.desc, filter);
  throw std::runtime_error("unknown device model: " + cfg.model);
}

Status load_dma_trace_file(const std::string& path, std::vector<DmaOpConfig>& out) {
  std::ifstream f(path);
  if (!f) return Status::error("cannot open DMA trace file: " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      return Status::error(std::string("bad DMA trace record: ") + e.what());
    }
    DmaOpConfig op;
    std::string dir = j.value("op", std::string{});
    if (dir != "read" && dir != "write")
      return Status::error("DMA trace op must be read or write");
    op.op = dir == "read" ? AccessKind::Read : AccessKind::Write;
    op.bytes = j.value("bytes", uint64_t{0});
    op.tag = j.value("tag", std::string{});
    out.push_back(op);
  }
  return Status::success();
}

// Execution contexts for world-switch accounting. Every cross-world transfer
// transits EL3, so switching between non-root worlds emits a root record
// followed by the destination record.
struct Ctx {
  enum class Kind : uint8_t { Hyp, Rmm, MonitorCtx, Guest } kind = Kind::Hyp;
  VmId vm = 0;

  bool operator==(const Ctx&) const = default;
  static Ctx hyp() { return {Kind::Hyp, 0}; }
  static Ctx rmm() { return {Kind::Rmm, 0}; }
  static Ctx monitor() { return {Kind::MonitorCtx, 0}; }
  static Ctx guest(VmId vm) { return {Kind::Guest, vm}; }
};

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg);

  RunResult run();

 private:
  void boot();
  void boot_vm(const VmConfig& vm_cfg);
  void feeder_step(uint64_t iter);
  void deliver_phase();
  void hyp_phase();
  void enter_vm(VmId vm);
  bool done(uint64_t iter);
  void check_invariants();
  void switch_to(Ctx ctx);
  World world_of(const Ctx& ctx) const;
  FifoDevice* keyboard_device();
  TestEngine* counter_engine();
  uint64_t eois_of(const std::set<IntId>& ids);

  ScenarioConfig cfg_;
  std::shared_ptr<TraceLog> trace_;
  PhysicalMemory memory_;
  Gic gic_;
  DeviceSet devices_;
  Monitor monitor_;
  Rmm rmm_;
  Hypervisor hyp_;
  std::map<VmId, std::unique_ptr<Guest>> guests_;
  DmaContext dma_ctx_;
  std::mt19937_64 rng_;
  Ctx current_ = Ctx::hyp();

  // feeder state
  uint64_t typed_ = 0;
  uint64_t pulsed_ = 0;
  std::set<IntId> event_ids_;
  IntId keyboard_irq_ = 44;
  uint64_t trace_scan_ = 0; // first unscanned trace record
  uint64_t eois_seen_ = 0;
  uint64_t button_scripted_ = 0;
  uint64_t polls_matched_ = 0;
  bool led_written_ = false;
  std::string run_error_;
};

Simulation::Simulation(const ScenarioConfig& cfg)
    : cfg_(cfg),
      trace_(std::make_shared<TraceLog>()),
      memory_(cfg.platform.memory_granules),
      gic_(cfg.platform.gic_range),
      devices_(),
      monitor_(cfg.platform.memory_granules, gic_, *trace_, cfg.platform.monitor_log_capacity),
      rmm_(cfg.mode, monitor_, gic_, devices_, memory_, *trace_),
      hyp_(cfg.mode, cfg.strategy, rmm_, monitor_, gic_, devices_, memory_, *trace_),
      dma_ctx_{rmm_.smmu_mut(), monitor_.gptd(), memory_, *trace_},
      rng_(cfg.seed) {}

World Simulation::world_of(const Ctx& ctx) const {
  switch (ctx.kind) {
    case Ctx::Kind::Hyp: return World::Normal;
    case Ctx::Kind::Rmm: return World::Realm;
    case Ctx::Kind::MonitorCtx: return World::Root;
    case Ctx::Kind::Guest: return cfg_.mode == Mode::Bn ? World::Normal : World::Realm;
  }
  return World::Normal;
}

void Simulation::switch_to(Ctx ctx) {
  if (ctx == current_) return;
  World from = world_of(current_);
  World to = world_of(ctx);
  if (from != to && from != World::Root && to != World::Root)
    emit_world_switch(*trace_, World::Root);
  emit_world_switch(*trace_, to);
  current_ = ctx;
}

void Simulation::boot() {
  gic_.add_interrupt({kSgi7, Group::Group1, true, 0, Trigger::Edge, 0});

  for (const PlatformDeviceConfig& dev : cfg_.platform.devices) {
    devices_.add(make_device(dev));
    for (const InterruptSpec& s : dev.desc.interrupts)
      gic_.add_interrupt({s.id, Group::Group1, true, 100, s.trigger, 0});
  }
  devices_.validate();

  for (auto& [id, dev] : devices_.all()) {
    (void)id;
    if (auto* engine = dynamic_cast<TestEngine*>(dev.get())) {
      engine->bind_dma(&dma_ctx_);
      engine->set_pattern_seed(cfg_.seed);
    }
  }

  // Firmware and RMM carve-outs; the GIC configuration space moves to root
  // world only under full isolation.
  monitor_.set_world_both({kMonitorBase, kMonitorGranules}, World::Root);
  monitor_.set_world_both({kRmmBase, kRmmGranules}, World::Realm);
  if (cfg_.mode == Mode::Dmi)
    monitor_.set_world_both(cfg_.platform.gic_range, World::Root);

  hyp_.set_scratch_granule(cfg_.platform.memory_granules - 1);

  for (const VmConfig& vm_cfg : cfg_.vms) boot_vm(vm_cfg);
}

void Simulation::boot_vm(const VmConfig& vm_cfg) {
  VmId vm = vm_cfg.id;
  rmm_.create_vm(vm);
  gic_.add_vgic(vm, cfg_.platform.vgic_slots);
  hyp_.add_vm(vm);
  auto guest = std::make_unique<Guest>(vm, cfg_.mode, rmm_, monitor_, devices_, memory_,
                                       gic_, *trace_);

  GranuleIndex ram_base = kVmRamBase + (vm - 1) * 128;
  for (GranuleIndex g = 0; g < vm_cfg.ram_granules; ++g) {
    if (cfg_.mode == Mode::Bn) {
      rmm_.map_shared(vm, g, ram_base + g, true);
    } else {
      rmm_.rmi_granule_delegate(ram_base + g);
      rmm_.rmi_data_create(vm, g, ram_base + g);
    }
  }

  size_t dev_index = 0;
  for (const VmDeviceConfig& vd : vm_cfg.devices) {
    Device* dev = devices_.find_by_name(vd.device);
    if (!dev) throw std::runtime_error("VM references unknown device: " + vd.device);
    const DeviceDescriptor& desc = dev->descriptor();
    GranuleIndex gpa_base = kDeviceGpaBase + dev_index * kDeviceGpaStride;
    dev_index++;

    GuestDeviceBinding binding;
    binding.device = desc.id;
    binding.gpa_base = gpa_base;
    binding.dma_protection = vd.dma_protection;
    binding.interrupt_isolation = vd.interrupt_isolation;
    binding.interrupts = vd.priorities;
    guest->add_device(binding);

    for (const auto& [id, prio] : vd.priorities) {
      hyp_.bind_irq(id, vm, prio, gic_.config(id).trigger);
      if (cfg_.mode != Mode::Dmi) gic_.set_priority(id, prio, *trace_);
    }

    if (cfg_.mode != Mode::Dmi) {
      // Baseline passthrough: MMIO mapped shared, SMMU managed by the
      // hypervisor, no delegation and no protections.
      GranuleIndex gpa = gpa_base;
      for (const GranuleRange& r : desc.mmio)
        for (GranuleIndex pa = r.first; pa < r.end(); ++pa) rmm_.map_shared(vm, gpa++, pa, false);
      if (vd.dma_protection && desc.dma_capable) {
        // Shared normal-world DMA window.
        GranuleIndex window_pa = kVmRamBase + (vm - 1) * 128 + 96;
        for (uint64_t i = 0; i < kDmaRegionGranules; ++i)
          rmm_.map_shared(vm, kSharedGpaBase + i, window_pa + i, true);
        rmm_.baseline_attach_stream(vm, desc.id);
      }
    }
  }

  for (const BindingConfig& b : vm_cfg.bindings) {
    Device* dev = b.device.empty() ? nullptr : devices_.find_by_name(b.device);
    guest->bind_handler(b.id, b.handler, dev ? dev->descriptor().id : 0);
  }

  if (cfg_.workload.kind == WorkloadKind::Dma) {
    std::vector<DmaJob> jobs;
    for (const DmaOpConfig& op : cfg_.workload.dma_trace)
      jobs.push_back(DmaJob{op.op, op.bytes, op.tag});
    GranuleIndex region = cfg_.mode == Mode::Br ? kSharedGpaBase : kDmaRegionGpa;
    guest->set_dma_plan(std::move(jobs), region, kDmaRegionGranules, cfg_.seed);
  }

  guests_[vm] = std::move(guest);
}

FifoDevice* Simulation::keyboard_device() {
  return dynamic_cast<FifoDevice*>(devices_.find_by_name("keyboard"));
}

TestEngine* Simulation::counter_engine() {
  return dynamic_cast<TestEngine*>(devices_.find_by_name("engine0"));
}

uint64_t Simulation::eois_of(const std::set<IntId>& ids) {
  const auto& records = trace_->records();
  for (; trace_scan_ < records.size(); ++trace_scan_) {
    const TraceRecord& r = records[trace_scan_];
    if (r.kind == EventKind::Eoi && ids.count(r.id)) eois_seen_++;
  }
  return eois_seen_;
}

void Simulation::feeder_step(uint64_t iter) {
  Guest& guest = *guests_.begin()->second;

  switch (cfg_.workload.kind) {
    case WorkloadKind::Keyboard: {
      if (!guest.attach_complete()) return;
      FifoDevice* kbd = keyboard_device();
      if (!kbd) return;
      if (typed_ == 0 && cfg_.workload.backlog > 0) {
        for (uint64_t i = 0; i < cfg_.workload.backlog && typed_ < cfg_.workload.keys; ++i) {
          kbd->push_byte(static_cast<uint8_t>('a' + rng_() % 26), gic_, *trace_);
          typed_++;
        }
        return;
      }
      // Type the next character only after the guest acknowledged the
      // previous keypress.
      if (typed_ < cfg_.workload.keys && eois_of({keyboard_irq_}) >= typed_) {
        kbd->push_byte(static_cast<uint8_t>('a' + rng_() % 26), gic_, *trace_);
        typed_++;
      }
      break;
    }

    case WorkloadKind::Counter: {
      if (!guest.attach_complete()) return;
      TestEngine* engine = counter_engine();
      if (!engine || pulsed_ >= cfg_.workload.events) return;
      if (event_ids_.empty()) {
        for (uint64_t line : cfg_.workload.event_lines)
          event_ids_.insert(static_cast<IntId>(60 + line));
      }
      auto pulse_next = [&] {
        uint64_t line = cfg_.workload.event_lines[pulsed_ % cfg_.workload.event_lines.size()];
        engine->pulse_event(line, gic_, *trace_);
        pulsed_++;
      };
      if (!cfg_.workload.event_at.empty()) {
        while (pulsed_ < cfg_.workload.events &&
               pulsed_ < cfg_.workload.event_at.size() &&
               iter >= cfg_.workload.event_at[pulsed_])
          pulse_next();
      } else if (!cfg_.workload.paced) {
        while (pulsed_ < cfg_.workload.events) pulse_next();
      } else if (eois_of(event_ids_) >= pulsed_) {
        pulse_next();
      }
      break;
    }

    case WorkloadKind::Button: {
      auto* button = dynamic_cast<ButtonDevice*>(devices_.find_by_name("button"));
      if (!button || button_scripted_ >= cfg_.workload.presses) return;
      if (iter % 4 == 1) button->set_pressed(true);
      if (iter % 4 == 3) {
        button->set_pressed(false);
        button_scripted_++;
      }
      break;
    }

    default:
      break;
  }
}

void Simulation::deliver_phase() {
  for (int budget = 0; budget < kDeliveryBudget; ++budget) {
    auto delivery = gic_.take_next_delivery(*trace_);
    if (!delivery) break;
    Ctx prev = current_;
    if (delivery->group == Group::Group0) {
      switch_to(Ctx::monitor());
      monitor_.monitor_trap(delivery->id);
      switch_to(prev);
    } else {
      switch_to(Ctx::hyp());
      hyp_.on_phys_irq(*delivery);
      switch_to(prev);
    }
  }
}

void Simulation::enter_vm(VmId vm) {
  switch_to(Ctx::guest(vm));
  Guest& guest = *guests_.at(vm);
  for (IntId id : gic_.vgic(vm).fire_all(*trace_)) guest.handle_virq(id);
  guest.step();

  // Poll-style workloads run on the guest's timeslice.
  if (cfg_.workload.kind == WorkloadKind::Button) {
    Device* button = devices_.find_by_name("button");
    if (button && guest.poll_device(button->descriptor().id, ButtonDevice::kRegState, 1))
      polls_matched_++;
  } else if (cfg_.workload.kind == WorkloadKind::Led) {
    Device* led = devices_.find_by_name("led");
    if (led) {
      DeviceId id = led->descriptor().id;
      if (!led_written_) {
        guest.mmio(id, LedDevice::kRegValue, AccessKind::Write, 1);
        led_written_ = true;
      }
      if (guest.poll_device(id, LedDevice::kRegValue, 1)) polls_matched_++;
    }
  }

  std::vector<IntId> eois = guest.take_eois();
  switch_to(Ctx::hyp());
  hyp_.on_vm_exit(vm, eois);
}

void Simulation::hyp_phase() {
  switch_to(Ctx::hyp());
  auto plan = hyp_.run_slice();
  if (!plan) return;

  if (cfg_.mode == Mode::Bn) {
    // No RMM between the hypervisor and a normal-world VM.
    if (!gic_.vgic(plan->vm).program(plan->ids))
      throw ModelError("benign vGIC programming rejected");
    hyp_.on_entry_accepted(*plan);
    enter_vm(plan->vm);
    return;
  }

  switch_to(Ctx::rmm());
  RecEnterResult result = rmm_.rmi_rec_enter(plan->vm, plan->ids);
  if (result.entered) {
    hyp_.on_entry_accepted(*plan);
    enter_vm(plan->vm);
    return;
  }
  hyp_.on_entry_rejected(*plan);
  switch_to(Ctx::hyp());

  // The rejected request did not enter the VM; retry this slice benignly so
  // a single deviation cannot starve the guest.
  auto retry = hyp_.run_slice();
  if (!retry) return;
  switch_to(Ctx::rmm());
  RecEnterResult second = rmm_.rmi_rec_enter(retry->vm, retry->ids);
  if (second.entered) {
    hyp_.on_entry_accepted(*retry);
    enter_vm(retry->vm);
  } else {
    switch_to(Ctx::hyp());
  }
}

bool Simulation::done(uint64_t iter) {
  for (auto& [vm, guest] : guests_) {
    (void)vm;
    if (!guest->attach_complete()) return false;
  }
  if (!gic_.quiescent() || !hyp_.idle()) return false;
  if (cfg_.mode == Mode::Dmi) {
    for (VmId vm : rmm_.vms())
      if (!rmm_.pending_queue(vm).empty()) return false;
  }

  Guest& guest = *guests_.begin()->second;
  switch (cfg_.workload.kind) {
    case WorkloadKind::Keyboard:
      return typed_ == cfg_.workload.keys &&
             guest.observables().keys_received.size() == cfg_.workload.keys;
    case WorkloadKind::Dma:
      return guest.dma_done();
    case WorkloadKind::Counter:
      return pulsed_ == cfg_.workload.events;
    case WorkloadKind::Button:
      return button_scripted_ >= cfg_.workload.presses;
    case WorkloadKind::Led:
      return led_written_ && polls_matched_ > 0;
    case WorkloadKind::Idle:
      return iter >= cfg_.workload.idle_iterations;
  }
  return true;
}

void Simulation::check_invariants() {
  const GranuleProtectionTable& gptc = monitor_.gptc();
  const GranuleProtectionTable& gptd = monitor_.gptd();

  // Two-GPT divergence bound: the tables may differ only on granules owned
  // by a VM with a DMA-protected device attached, and there the core view is
  // realm while the device view is normal.
  for (GranuleIndex g = 0; g < gptc.size(); ++g) {
    if (gptc.world_at(g) == gptd.world_at(g)) continue;
    if (gptc.world_at(g) != World::Realm || gptd.world_at(g) != World::Normal)
      throw ModelError("GPT divergence outside the realm/normal overlay");
    bool owned_by_dma_vm = false;
    for (VmId vm : rmm_.vms()) {
      if (rmm_.vm_dma_protected(vm) && rmm_.owned_granules(vm).count(g))
        owned_by_dma_vm = true;
    }
    if (!owned_by_dma_vm)
      throw ModelError("GPT divergence on a granule without an attached DMA device");
  }

  // Exclusivity: no physical granule is mapped into two VM tables.
  std::set<GranuleIndex> seen;
  for (VmId vm : rmm_.vms()) {
    for (GranuleIndex pa : rmm_.owned_granules(vm)) {
      if (gptc.world_at(pa) != World::Realm) continue;
      if (!seen.insert(pa).second) throw ModelError("realm granule mapped into two VMs");
    }
  }

  // Device mirror and split-view impossibility.
  const SmmuState& smmu = rmm_.smmu();
  for (const auto& [vm, streams] : smmu.streams_by_vm) {
    const Stage2Table& vm_table = rmm_.s2(vm);
    for (StreamId stream : streams) {
      const Stage2Table& st = smmu.streams.at(stream);
      for (const auto& [gpa, entry] : st.entries()) {
        auto vm_entry = vm_table.entry(gpa);
        if (!vm_entry || vm_entry->pa != entry.pa)
          throw ModelError("split view: stream and VM disagree on a mapping");
      }
      uint64_t expected = 0;
      for (const auto& [gpa, entry] : vm_table.entries()) {
        (void)entry;
        if (rmm_.dma_visible(vm).count(gpa)) expected++;
      }
      if (expected != st.entries().size())
        throw ModelError("stream table is not a mirror of the VM table");
    }
  }
}

RunResult Simulation::run() {
  RunResult result;
  result.trace = trace_;

  try {
    boot();

    uint64_t iter = 0;
    while (true) {
      if (trace_->current_step() >= cfg_.step_limit) {
        run_error_ = "step limit exceeded (livelock or storm)";
        break;
      }
      feeder_step(iter);
      deliver_phase();
      hyp_phase();
      if (cfg_.check_invariants) check_invariants();
      if (done(iter)) break;
      iter++;
    }
  } catch (const std::exception& e) {
    run_error_ = e.what();
  }

  CostTable costs;
  result.metrics = compute_metrics(trace_->records(), costs);
  for (auto& [vm, guest] : guests_) {
    result.observables[vm] = guest->observables();
    result.dma_verified += guest->dma_verified();
    result.integrity_failures += guest->integrity_failures();
  }

  if (!run_error_.empty()) {
    result.status = ExitStatus::ConfigError;
    result.error = run_error_;
  } else if (result.metrics.violations > 0) {
    result.status = ExitStatus::ViolationsDetected;
  } else if (cfg_.mode != Mode::Dmi && cfg_.strategy.kind != StrategyKind::Benign &&
             hyp_.deviation_applied()) {
    result.status = ExitStatus::AttackSucceeded;
  } else {
    result.status = ExitStatus::Clean;
  }
  return result;
}

} // namespace

ScenarioConfig normalize_scenario(ScenarioConfig cfg) {
  if (cfg.platform.devices.empty()) cfg.platform.devices = default_platform_devices();
  if (cfg.vms.empty()) cfg.vms.push_back(default_vm_for(cfg.workload));
  return cfg;
}

const GuestObservables& RunResult::vm1() const {
  static const GuestObservables kEmpty;
  auto it = observables.begin();
  return it == observables.end() ? kEmpty : it->second;
}

RunResult run_scenario(const ScenarioConfig& raw) {
  ScenarioConfig cfg = normalize_scenario(raw);

  if (!cfg.workload.dma_trace_file.empty() && cfg.workload.dma_trace.empty()) {
    Status st = load_dma_trace_file(cfg.workload.dma_trace_file, cfg.workload.dma_trace);
    if (!st) {
      RunResult r;
      r.status = ExitStatus::ConfigError;
      r.error = st.message;
      r.trace = std::make_shared<TraceLog>();
      return r;
    }
  }

  if (cfg.workload.kind == WorkloadKind::Counter &&
      cfg.strategy.kind == StrategyKind::InjectFake && cfg.strategy.param == 0) {
    RunResult r;
    r.status = ExitStatus::ConfigError;
    r.error = "inject_fake requires a target interrupt id parameter";
    r.trace = std::make_shared<TraceLog>();
    return r;
  }

  try {
    Simulation sim(cfg);
    return sim.run();
  } catch (const std::exception& e) {
    RunResult r;
    r.status = ExitStatus::ConfigError;
    r.error = e.what();
    r.trace = std::make_shared<TraceLog>();
    return r;
  }
}

Status compare_runs(const ScenarioConfig& a, const ScenarioConfig& b, std::string& json_out) {
  nlohmann::ordered_json wa = nlohmann::ordered_json::parse(
      scenario_to_json(normalize_scenario(a)))["workload"];
  nlohmann::ordered_json wb = nlohmann::ordered_json::parse(
      scenario_to_json(normalize_scenario(b)))["workload"];
  if (wa != wb) return Status::error("compared scenarios run different workloads");

  RunResult ra = run_scenario(a);
  RunResult rb = run_scenario(b);
  if (ra.status == ExitStatus::ConfigError) return Status::error("first run failed: " + ra.error);
  if (rb.status == ExitStatus::ConfigError) return Status::error("second run failed: " + rb.error);

  auto row = [](uint64_t x, uint64_t y) {
    nlohmann::ordered_json j;
    j["a"] = x;
    j["b"] = y;
    j["ratio"] = y == 0 ? 0.0 : static_cast<double>(x) / static_cast<double>(y);
    return j;
  };

  nlohmann::ordered_json j;
  j["scenario_a"] = a.name;
  j["scenario_b"] = b.name;
  j["mode_a"] = to_string(a.mode);
  j["mode_b"] = to_string(b.mode);
  j["irq_injected"] = row(ra.metrics.irq_injected, rb.metrics.irq_injected);
  j["rmi"] = row(ra.metrics.rmi, rb.metrics.rmi);
  j["rsi"] = row(ra.metrics.rsi, rb.metrics.rsi);
  j["smc"] = row(ra.metrics.smc, rb.metrics.smc);
  j["dma"] = row(ra.metrics.dma_ops, rb.metrics.dma_ops);
  j["world_switches"] = row(ra.metrics.world_switch_total(), rb.metrics.world_switch_total());
  j["cost_units"] = row(ra.metrics.cost_units, rb.metrics.cost_units);
  j["violations"] = row(ra.metrics.violations, rb.metrics.violations);
  json_out = j.dump(2);
  return Status::success();
}

ReplayVerdict replay_trace(const std::string& trace_text, const ScenarioConfig& cfg) {
  RunResult fresh = run_scenario(cfg);

  std::vector<std::string> original;
  size_t pos = 0;
  while (pos < trace_text.size()) {
    size_t end = trace_text.find('\n', pos);
    if (end == std::string::npos) end = trace_text.size();
    if (end > pos) original.push_back(trace_text.substr(pos, end - pos));
    pos = end + 1;
  }

  const auto& records = fresh.trace->records();
  size_t n = std::min(original.size(), records.size());
  for (size_t i = 0; i < n; ++i) {
    if (original[i] != records[i].line) return {false, records[i].step};
  }
  if (original.size() != records.size())
    return {false, static_cast<uint64_t>(n) + 1};
  return {true, 0};
}

} // namespace realmsim
