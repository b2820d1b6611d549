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
#include <sstream>

#include <json.hpp>

#include "realmsim/harness.hpp"

namespace realmsim {

using json = nlohmann::ordered_json;

const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Idle: return "idle";
    case WorkloadKind::Keyboard: return "keyboard";
    case WorkloadKind::Dma: return "dma";
    case WorkloadKind::Counter: return "counter";
    case WorkloadKind::Button: return "button";
    case WorkloadKind::Led: return "led";
  }
  return "?";
}

std::optional<WorkloadKind> workload_from_string(const std::string& name) {
  for (WorkloadKind k : {WorkloadKind::Idle, WorkloadKind::Keyboard, WorkloadKind::Dma,
                         WorkloadKind::Counter, WorkloadKind::Button, WorkloadKind::Led}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

namespace {

std::optional<Mode> mode_from_string(const std::string& s) {
  if (s == "bn") return Mode::Bn;
  if (s == "br") return Mode::Br;
  if (s == "dmi") return Mode::Dmi;
  return std::nullopt;
}

DeviceClass class_from_string(const std::string& s) {
  if (s == "mmio-only") return DeviceClass::MmioOnly;
  if (s == "mmio-only-pas") return DeviceClass::MmioOnlyPasFilter;
  if (s == "legacy-dma") return DeviceClass::LegacyDma;
  throw std::runtime_error("unknown device class: " + s);
}

PasFilterView::Policy policy_from_string(const std::string& s) {
  if (s == "full") return PasFilterView::Policy::Full;
  if (s == "read-only") return PasFilterView::Policy::ReadOnly;
  if (s == "zero") return PasFilterView::Policy::Zero;
  throw std::runtime_error("unknown filter policy: " + s);
}

World world_from_string(const std::string& s) {
  if (s == "normal") return World::Normal;
  if (s == "secure") return World::Secure;
  if (s == "realm") return World::Realm;
  if (s == "root") return World::Root;
  throw std::runtime_error("unknown world: " + s);
}

const char* policy_to_string(PasFilterView::Policy p) {
  switch (p) {
    case PasFilterView::Policy::Full: return "full";
    case PasFilterView::Policy::ReadOnly: return "read-only";
    case PasFilterView::Policy::Zero: return "zero";
  }
  return "?";
}

WorkloadConfig parse_workload(const json& j) {
  WorkloadConfig w;
  if (j.contains("kind")) {
    auto kind = workload_from_string(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("workload.kind: unknown value");
    w.kind = *kind;
  }
  w.keys = j.value("keys", w.keys);
  w.backlog = j.value("backlog", w.backlog);
  w.events = j.value("events", w.events);
  w.paced = j.value("paced", w.paced);
  w.idle_iterations = j.value("idle_iterations", w.idle_iterations);
  w.presses = j.value("presses", w.presses);
  if (j.contains("event_lines")) w.event_lines = j.at("event_lines").get<std::vector<uint64_t>>();
  if (j.contains("event_at")) w.event_at = j.at("event_at").get<std::vector<uint64_t>>();
  w.dma_trace_file = j.value("dma_trace_file", std::string{});
  if (j.contains("dma_trace")) {
    for (const json& e : j.at("dma_trace")) {
      DmaOpConfig op;
      std::string dir = e.at("op").get<std::string>();
      if (dir != "read" && dir != "write")
        throw std::runtime_error("dma trace op must be read or write");
      op.op = dir == "read" ? AccessKind::Read : AccessKind::Write;
      op.bytes = e.at("bytes").get<uint64_t>();
      op.tag = e.value("tag", std::string{});
      w.dma_trace.push_back(op);
    }
  }
  return w;
}

json workload_to_json(const WorkloadConfig& w) {
  json j;
  j["kind"] = to_string(w.kind);
  switch (w.kind) {
    case WorkloadKind::Keyboard:
      j["keys"] = w.keys;
      j["backlog"] = w.backlog;
      break;
    case WorkloadKind::Dma:
      if (!w.dma_trace_file.empty()) j["dma_trace_file"] = w.dma_trace_file;
      if (!w.dma_trace.empty()) {
        json arr = json::array();
        for (const DmaOpConfig& op : w.dma_trace) {
          arr.push_back({{"op", op.op == AccessKind::Read ? "read" : "write"},
                         {"bytes", op.bytes},
                         {"tag", op.tag}});
        }
        j["dma_trace"] = arr;
      }
      break;
    case WorkloadKind::Counter:
      j["events"] = w.events;
      j["event_lines"] = w.event_lines;
      j["paced"] = w.paced;
      if (!w.event_at.empty()) j["event_at"] = w.event_at;
      break;
    case WorkloadKind::Idle:
      j["idle_iterations"] = w.idle_iterations;
      break;
    case WorkloadKind::Button:
      j["presses"] = w.presses;
      break;
    case WorkloadKind::Led:
      break;
  }
  return j;
}

} // namespace

Status parse_scenario_json(const std::string& text, ScenarioConfig& out) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    return Status::error(std::string("scenario JSON parse error: ") + e.what());
  }

  try {
    ScenarioConfig cfg;
    cfg.name = j.value("name", cfg.name);
    if (j.contains("mode")) {
      auto m = mode_from_string(j.at("mode").get<std::string>());
      if (!m) return Status::error("mode: must be one of bn, br, dmi");
      cfg.mode = *m;
    }
    if (j.contains("strategy")) {
      const json& s = j.at("strategy");
      auto k = strategy_from_string(s.at("name").get<std::string>());
      if (!k) return Status::error("strategy.name: unknown strategy");
      cfg.strategy.kind = *k;
      cfg.strategy.param = s.value("param", uint64_t{0});
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.step_limit = j.value("step_limit", cfg.step_limit);
    cfg.check_invariants = j.value("check_invariants", cfg.check_invariants);

    if (j.contains("platform")) {
      const json& p = j.at("platform");
      cfg.platform.memory_granules = p.value("memory_granules", cfg.platform.memory_granules);
      cfg.platform.vgic_slots = p.value("vgic_slots", cfg.platform.vgic_slots);
      cfg.platform.monitor_log_capacity =
          p.value("monitor_log_capacity", cfg.platform.monitor_log_capacity);
      if (p.contains("gic_range")) {
        cfg.platform.gic_range.first = p.at("gic_range").at("first").get<uint64_t>();
        cfg.platform.gic_range.count = p.at("gic_range").at("count").get<uint64_t>();
      }
      if (p.contains("devices")) {
        for (const json& d : p.at("devices")) {
          PlatformDeviceConfig dev;
          dev.desc.id = d.at("id").get<uint32_t>();
          dev.desc.name = d.at("name").get<std::string>();
          dev.desc.cls = class_from_string(d.value("class", std::string("mmio-only")));
          dev.desc.dma_capable = d.value("dma", false);
          dev.model = d.value("model", std::string("plain"));
          for (const json& r : d.at("mmio"))
            dev.desc.mmio.push_back({r.at("first").get<uint64_t>(), r.at("count").get<uint64_t>()});
          if (d.contains("interrupts")) {
            for (const json& irq : d.at("interrupts")) {
              InterruptSpec spec;
              spec.id = irq.at("id").get<uint32_t>();
              spec.trigger =
                  irq.value("trigger", std::string("edge")) == "level" ? Trigger::Level
                                                                       : Trigger::Edge;
              dev.desc.interrupts.push_back(spec);
            }
          }
          if (d.contains("filter")) {
            for (auto it = d.at("filter").begin(); it != d.at("filter").end(); ++it) {
              dev.filter.push_back(
                  {world_from_string(it.key()), policy_from_string(it.value().get<std::string>())});
            }
          }
          cfg.platform.devices.push_back(std::move(dev));
        }
      }
    }

    if (j.contains("vms")) {
      for (const json& v : j.at("vms")) {
        VmConfig vm;
        vm.id = v.value("id", uint32_t{1});
        vm.ram_granules = v.value("ram_granules", vm.ram_granules);
        if (v.contains("devices")) {
          for (const json& d : v.at("devices")) {
            VmDeviceConfig vd;
            vd.device = d.at("device").get<std::string>();
            vd.dma_protection = d.value("dma_protection", false);
            vd.interrupt_isolation = d.value("interrupt_isolation", true);
            if (d.contains("priorities")) {
              for (auto it = d.at("priorities").begin(); it != d.at("priorities").end(); ++it)
                vd.priorities.push_back({static_cast<IntId>(std::stoul(it.key())),
                                         it.value().get<uint8_t>()});
            }
            vm.devices.push_back(std::move(vd));
          }
        }
        if (v.contains("bindings")) {
          for (const json& b : v.at("bindings")) {
            BindingConfig bc;
            bc.id = b.at("id").get<uint32_t>();
            auto h = handler_from_string(b.at("handler").get<std::string>());
            if (!h) return Status::error("bindings.handler: unknown handler kind");
            bc.handler = *h;
            bc.device = b.value("device", std::string{});
            vm.bindings.push_back(bc);
          }
        }
        cfg.vms.push_back(std::move(vm));
      }
    }

    if (j.contains("workload")) cfg.workload = parse_workload(j.at("workload"));
    out = std::move(cfg);
    return Status::success();
  } catch (const std::exception& e) {
    return Status::error(std::string("scenario config error: ") + e.what());
  }
}

Status load_scenario_file(const std::string& path, ScenarioConfig& out) {
  std::ifstream f(path);
  if (!f) return Status::error("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_scenario_json(buf.str(), out);
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["mode"] = to_string(cfg.mode);
  j["strategy"] = {{"name", to_string(cfg.strategy.kind)}, {"param", cfg.strategy.param}};
  j["seed"] = cfg.seed;
  j["step_limit"] = cfg.step_limit;
  j["check_invariants"] = cfg.check_invariants;

  json platform;
  platform["memory_granules"] = cfg.platform.memory_granules;
  platform["vgic_slots"] = cfg.platform.vgic_slots;
  platform["monitor_log_capacity"] = cfg.platform.monitor_log_capacity;
  platform["gic_range"] = {{"first", cfg.platform.gic_range.first},
                           {"count", cfg.platform.gic_range.count}};
  if (!cfg.platform.devices.empty()) {
    json devs = json::array();
    for (const PlatformDeviceConfig& d : cfg.platform.devices) {
      json dev;
      dev["id"] = d.desc.id;
      dev["name"] = d.desc.name;
      dev["class"] = to_string(d.desc.cls);
      dev["model"] = d.model;
      dev["dma"] = d.desc.dma_capable;
      json mmio = json::array();
      for (const GranuleRange& r : d.desc.mmio)
        mmio.push_back({{"first", r.first}, {"count", r.count}});
      dev["mmio"] = mmio;
      if (!d.desc.interrupts.empty()) {
        json irqs = json::array();
        for (const InterruptSpec& s : d.desc.interrupts)
          irqs.push_back({{"id", s.id},
                          {"trigger", s.trigger == Trigger::Level ? "level" : "edge"}});
        dev["interrupts"] = irqs;
      }
      if (!d.filter.empty()) {
        json filt;
        for (const auto& [world, policy] : d.filter)
          filt[to_string(world)] = policy_to_string(policy);
        dev["filter"] = filt;
      }
      devs.push_back(dev);
    }
    platform["devices"] = devs;
  }
  j["platform"] = platform;

  if (!cfg.vms.empty()) {
    json vms = json::array();
    for (const VmConfig& vm : cfg.vms) {
      json v;
      v["id"] = vm.id;
      v["ram_granules"] = vm.ram_granules;
      json devs = json::array();
      for (const VmDeviceConfig& d : vm.devices) {
        json dev;
        dev["device"] = d.device;
        dev["dma_protection"] = d.dma_protection;
        dev["interrupt_isolation"] = d.interrupt_isolation;
        if (!d.priorities.empty()) {
          json prios;
          for (const auto& [id, prio] : d.priorities) prios[std::to_string(id)] = prio;
          dev["priorities"] = prios;
        }
        devs.push_back(dev);
      }
      v["devices"] = devs;
      json binds = json::array();
      for (const BindingConfig& b : vm.bindings) {
        binds.push_back(
            {{"id", b.id}, {"handler", to_string(b.handler)}, {"device", b.device}});
      }
      v["bindings"] = binds;
      vms.push_back(v);
    }
    j["vms"] = vms;
  }

  j["workload"] = workload_to_json(cfg.workload);
  return j.dump(2);
}

} // namespace realmsim
