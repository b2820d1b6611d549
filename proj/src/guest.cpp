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

#include "realmsim/guest.hpp"

#include "realmsim/fnv.hpp"
#include "realmsim/monitor.hpp"

namespace realmsim {

const char* to_string(HandlerKind k) {
  switch (k) {
    case HandlerKind::Counter: return "counter";
    case HandlerKind::WcnssReady: return "wcnss_ready";
    case HandlerKind::MaliJob: return "mali_job";
    case HandlerKind::KeyboardIsr: return "keyboard_isr";
    case HandlerKind::DmaDoneIsr: return "dma_done_isr";
  }
  return "?";
}

std::optional<HandlerKind> handler_from_string(const std::string& name) {
  for (HandlerKind k : {HandlerKind::Counter, HandlerKind::WcnssReady, HandlerKind::MaliJob,
                        HandlerKind::KeyboardIsr, HandlerKind::DmaDoneIsr}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

Guest::Guest(VmId vm, Mode mode, Rmm& rmm, const Monitor& monitor, DeviceSet& devices,
             PhysicalMemory& memory, Gic& gic, TraceLog& trace)
    : vm_(vm), mode_(mode),
      world_(mode == Mode::Bn ? World::Normal : World::Realm),
      rmm_(rmm), monitor_(monitor), devices_(devices), memory_(memory), gic_(gic),
      trace_(trace) {}

void Guest::bind_handler(IntId id, HandlerKind handler, DeviceId device) {
  bindings_[id] = Binding{handler, device};
}

void Guest::add_device(const GuestDeviceBinding& binding) {
  devices_cfg_.push_back(binding);
  if (binding.dma_protection) dma_engine_ = binding.device;
}

void Guest::set_dma_plan(std::vector<DmaJob> jobs, GranuleIndex region_gpa,
                         uint64_t region_granules, uint64_t pattern_seed) {
  dma_jobs_ = std::move(jobs);
  dma_region_gpa_ = region_gpa;
  dma_region_granules_ = region_granules;
  dma_pattern_seed_ = pattern_seed;
  if (dma_engine_ == 0 && !devices_cfg_.empty()) dma_engine_ = devices_cfg_.front().device;
}

const GuestDeviceBinding* Guest::device_binding(DeviceId device) const {
  for (const GuestDeviceBinding& b : devices_cfg_)
    if (b.device == device) return &b;
  return nullptr;
}

bool Guest::id_is_level(IntId id) const {
  return gic_.known(id) && gic_.config(id).trigger == Trigger::Level;
}

void Guest::eoi(IntId id) {
  trace_.emit(EventKind::Eoi, {{"vm", vm_}, {"id", id}});
  slice_eois_.push_back(id);
  // The guest kernel traps EOIs of isolated level interrupts and forwards
  // them so the physical acknowledgment happens only now.
  if (mode_ == Mode::Dmi && id_is_level(id) && rmm_.id_isolated(vm_, id)) {
    emit_world_switch(trace_, World::Realm);
    rmm_.rsi_ack_int(vm_, id);
    emit_world_switch(trace_, World::Realm);
  }
}

std::optional<PhysAddr> Guest::resolve(GuestAddr gpa, AccessKind kind, bool* pas_filtered) {
  auto translated = rmm_.s2(vm_).translate(gpa, kind);
  if (std::holds_alternative<TranslationFault>(translated)) {
    trace_.emit(EventKind::Note, {{"what", "translation-fault"}, {"vm", vm_}, {"gpa", gpa}});
    return std::nullopt;
  }
  PhysAddr pa = std::get<PhysAddr>(translated);

  bool filtered = false;
  if (auto dev = devices_.resolve_mmio(pa)) {
    const Device& d = devices_.device(dev->device);
    filtered = d.descriptor().cls == DeviceClass::MmioOnlyPasFilter;
  }
  if (pas_filtered) *pas_filtered = filtered;

  // Devices with PAS filters do their own world-level filtering; everything
  // else goes through the core GPC.
  if (!filtered) {
    AccessRequest req{CoreSource{world_, vm_}, pa, kind};
    if (gpc_check(req, monitor_.gptc()) == GpcResult::Fault) {
      trace_.emit(EventKind::Gpf, {{"addr", pa}, {"vm", vm_}});
      return std::nullopt;
    }
  }
  return pa;
}

std::optional<uint64_t> Guest::mmio(DeviceId device, uint64_t offset, AccessKind kind,
                                    uint64_t value) {
  const GuestDeviceBinding* binding = device_binding(device);
  if (!binding) return std::nullopt;
  GuestAddr gpa = granule_base(binding->gpa_base) + offset;

  auto pa = resolve(gpa, kind, nullptr);
  if (!pa) return std::nullopt;
  auto resolved = devices_.resolve_mmio(*pa);
  if (!resolved) throw ModelError("guest device GPA does not resolve to MMIO");

  MmioResult r = devices_.mmio_access(resolved->device, resolved->offset, kind, value,
                                      world_, gic_, trace_);
  if (!r.ok) return std::nullopt;
  return r.value;
}

std::optional<uint8_t> Guest::mem_read8(GuestAddr gpa) {
  auto pa = resolve(gpa, AccessKind::Read, nullptr);
  if (!pa) return std::nullopt;
  return memory_.read8(*pa);
}

bool Guest::mem_write8(GuestAddr gpa, uint8_t value) {
  auto pa = resolve(gpa, AccessKind::Write, nullptr);
  if (!pa) return false;
  memory_.write8(*pa, value);
  return true;
}

void Guest::handle_virq(IntId id) {
  auto it = bindings_.find(id);
  if (it == bindings_.end()) {
    spurious_++;
    trace_.emit(EventKind::Note, {{"what", "spurious-virq"}, {"vm", vm_}, {"id", id}});
    return;
  }
  const Binding& b = it->second;

  switch (b.handler) {
    case HandlerKind::Counter:
      // Device-agnostic interrupt-driven counter; no MMIO to consult.
      observables_.counter++;
      break;

    case HandlerKind::WcnssReady:
      observables_.wcnss_ready = true;
      break;

    case HandlerKind::MaliJob: {
      // Spurious-interrupt guard: consult the job status register and bail
      // out without side effects when it reads zero.
      auto status = mmio(b.device, TestEngine::kRegStatus, AccessKind::Read);
      if (!status || *status == 0) break;
      observables_.mali_jobs_done++;
      break;
    }

    case HandlerKind::KeyboardIsr: {
      auto status = mmio(b.device, FifoDevice::kRegStatus, AccessKind::Read);
      if (status && *status != 0) {
        auto data = mmio(b.device, FifoDevice::kRegData, AccessKind::Read);
        if (data) observables_.keys_received.push_back(static_cast<uint8_t>(*data));
      }
      break;
    }

    case HandlerKind::DmaDoneIsr: {
      auto status = mmio(b.device, TestEngine::kRegStatus, AccessKind::Read);
      if (!status || *status == 0) break;
      auto digest = mmio(b.device, TestEngine::kRegDigest, AccessKind::Read);
      if (!digest) break;

      // Split-view check: what the device digested must equal what this VM
      // reads back through its own translation path.
      const DmaJob& job = dma_jobs_[dma_next_];
      Fnv1a64 h;
      bool readable = true;
      for (uint64_t i = 0; i < job.bytes && readable; ++i) {
        auto byte = mem_read8(granule_base(dma_region_gpa_) + i);
        if (byte) h.update(*byte);
        else readable = false;
      }
      uint64_t cpu_view = h.digest();
      uint64_t expected = job.op == AccessKind::Read ? dma_expected_digest_ : cpu_view;

      if (readable && *digest == expected) {
        observables_.dma_digests[job.tag] = *digest;
        dma_verified_++;
      } else {
        integrity_failures_++;
        trace_.emit(EventKind::Note,
                    {{"what", "integrity-failure"}, {"vm", vm_}, {"tag", job.tag}});
      }
      dma_in_flight_ = false;
      dma_next_++;
      break;
    }
  }
  eoi(id);
}

bool Guest::attach_complete() const {
  if (mode_ != Mode::Dmi) return true;
  for (const GuestDeviceBinding& b : devices_cfg_) {
    if (rmm_.attach_state(vm_, b.device) != AttachState::Attached) return false;
  }
  return true;
}

void Guest::step() {
  if (mode_ == Mode::Dmi) {
    for (const GuestDeviceBinding& b : devices_cfg_) {
      AttachState state = rmm_.attach_state(vm_, b.device);
      if (state == AttachState::Attached || state == AttachState::AwaitingFinalize) continue;
      if (attach_retries_[b.device] >= 3) continue;
      attach_retries_[b.device]++;

      AttachRequest req;
      req.vm = vm_;
      req.device = b.device;
      const DeviceDescriptor& desc = devices_.device(b.device).descriptor();
      uint64_t granules = 0;
      for (const GranuleRange& r : desc.mmio) granules += r.count;
      for (uint64_t i = 0; i < granules; ++i) req.gpa_granules.push_back(b.gpa_base + i);
      req.interrupts = b.interrupts;
      req.dma_protection = b.dma_protection;
      req.interrupt_isolation = b.interrupt_isolation;
      emit_world_switch(trace_, World::Realm);
      rmm_.rsi_attach_dev(req);
      emit_world_switch(trace_, World::Realm);
    }
    if (!attach_complete()) return;
  }
  step_dma();
}

void Guest::step_dma() {
  if (dma_jobs_.empty() || dma_in_flight_ || dma_next_ >= dma_jobs_.size()) return;
  if (dma_engine_ == 0) return;

  const DmaJob& job = dma_jobs_[dma_next_];
  GuestAddr target = granule_base(dma_region_gpa_);
  if (job.bytes > dma_region_granules_ * kGranuleSize)
    throw ModelError("DMA job larger than the buffer region");

  if (job.op == AccessKind::Read) {
    // Device will read guest memory: fill the buffer and remember its digest.
    Fnv1a64 h;
    uint64_t tag_key = Fnv1a64{}.update(std::span<const uint8_t>(
                                    reinterpret_cast<const uint8_t*>(job.tag.data()),
                                    job.tag.size()))
                           .digest();
    for (uint64_t i = 0; i < job.bytes; ++i) {
      uint8_t b = TestEngine::pattern_byte(dma_pattern_seed_ ^ 0x5a5a, tag_key, i);
      if (!mem_write8(target + i, b)) return;
      h.update(b);
    }
    dma_expected_digest_ = h.digest();
  }

  uint64_t tag_num = dma_next_;
  mmio(dma_engine_, TestEngine::kRegDir, AccessKind::Write,
       job.op == AccessKind::Write ? 0 : 1);
  mmio(dma_engine_, TestEngine::kRegLen, AccessKind::Write, job.bytes);
  mmio(dma_engine_, TestEngine::kRegGpa, AccessKind::Write, target);
  mmio(dma_engine_, TestEngine::kRegTag, AccessKind::Write, tag_num);
  dma_in_flight_ = true;
  mmio(dma_engine_, TestEngine::kRegGo, AccessKind::Write, 1);

  auto fault = mmio(dma_engine_, TestEngine::kRegFault, AccessKind::Read);
  if (fault && *fault != 0) {
    // Transfer faulted; no completion interrupt will arrive.
    dma_in_flight_ = false;
    dma_next_++;
    integrity_failures_++;
  }
}

bool Guest::poll_device(DeviceId device, uint64_t offset, uint64_t expected) {
  auto value = mmio(device, offset, AccessKind::Read);
  return value && *value == expected;
}

} // namespace realmsim
