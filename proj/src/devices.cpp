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

#include "realmsim/devices.hpp"

#include <algorithm>

#include "realmsim/fnv.hpp"

namespace realmsim {

const char* to_string(DeviceClass c) {
  switch (c) {
    case DeviceClass::MmioOnly: return "mmio-only";
    case DeviceClass::MmioOnlyPasFilter: return "mmio-only-pas";
    case DeviceClass::LegacyDma: return "legacy-dma";
  }
  return "?";
}

bool DeviceDescriptor::has_interrupt(IntId id_) const {
  return std::any_of(interrupts.begin(), interrupts.end(),
                     [&](const InterruptSpec& s) { return s.id == id_; });
}

uint64_t DeviceDescriptor::measure() const {
  Fnv1a64 h;
  h.update_u64(id);
  h.update_u64(static_cast<uint64_t>(cls));
  h.update_u64(dma_capable ? 1 : 0);

  auto ranges = mmio;
  std::sort(ranges.begin(), ranges.end(),
            [](const GranuleRange& a, const GranuleRange& b) { return a.first < b.first; });
  for (const GranuleRange& r : ranges) {
    h.update_u64(r.first);
    h.update_u64(r.count);
  }

  auto irqs = interrupts;
  std::sort(irqs.begin(), irqs.end(),
            [](const InterruptSpec& a, const InterruptSpec& b) { return a.id < b.id; });
  for (const InterruptSpec& s : irqs) {
    h.update_u64(s.id);
    h.update_u64(s.trigger == Trigger::Level ? 0 : 1);
  }
  return h.digest();
}

void PasFilterView::set_policy(World world, Policy policy) {
  if (world == World::Root) throw ModelError("root always sees the full device view");
  policies_[world] = policy;
}

PasFilterView::Policy PasFilterView::policy(World world) const {
  if (world == World::Root) return Policy::Full;
  auto it = policies_.find(world);
  return it == policies_.end() ? Policy::Full : it->second;
}

uint64_t Device::reg(uint64_t offset) const {
  auto it = state_.registers.find(offset);
  return it == state_.registers.end() ? 0 : it->second;
}

void Device::set_reg(uint64_t offset, uint64_t value) {
  if (value == 0) {
    state_.registers.erase(offset);
  } else {
    state_.registers[offset] = value;
  }
}

uint64_t Device::mmio_read(uint64_t offset, Gic&, TraceLog&) { return reg(offset); }

void Device::mmio_write(uint64_t offset, uint64_t value, Gic&, TraceLog&) {
  set_reg(offset, value);
}

void Device::soft_reset(Gic& gic, TraceLog& trace) {
  state_.registers.clear();
  state_.fifo.clear();
  for (const InterruptSpec& s : descriptor_.interrupts) gic.deassert_line(s.id);
  state_.reset_count++;
  trace.emit(EventKind::Reset, {{"device", descriptor_.id}, {"count", state_.reset_count}});
}

uint64_t Device::measure_state() const {
  Fnv1a64 h{descriptor_.measure()};
  for (const auto& [offset, value] : state_.registers) { // std::map: sorted
    h.update_u64(offset);
    h.update_u64(value);
  }
  return h.digest();
}

void Device::assert_irq(IntId id, Gic& gic, TraceLog& trace) {
  if (!descriptor_.has_interrupt(id))
    throw ModelError("device asserting an interrupt line it does not own");
  gic.assert_line(id, trace);
}

void Device::deassert_irq(IntId id, Gic& gic) {
  if (!descriptor_.has_interrupt(id))
    throw ModelError("device deasserting an interrupt line it does not own");
  gic.deassert_line(id);
}

IntId FifoDevice::line_id() const {
  if (descriptor_.interrupts.empty()) throw ModelError("FIFO device without interrupt line");
  return descriptor_.interrupts.front().id;
}

void FifoDevice::push_byte(uint8_t byte, Gic& gic, TraceLog& trace) {
  state_.fifo.push_back(byte);
  assert_irq(line_id(), gic, trace);
}

uint64_t FifoDevice::mmio_read(uint64_t offset, Gic& gic, TraceLog& trace) {
  if (offset == kRegStatus) return state_.fifo.empty() ? 0 : 1;
  if (offset == kRegData) {
    if (state_.fifo.empty()) return 0;
    uint8_t byte = state_.fifo.front();
    state_.fifo.pop_front();
    if (state_.fifo.empty()) deassert_irq(line_id(), gic);
    return byte;
  }
  return Device::mmio_read(offset, gic, trace);
}

uint8_t TestEngine::pattern_byte(uint64_t seed, uint64_t tag, uint64_t i) {
  return static_cast<uint8_t>(Fnv1a64{}.update_u64(seed).update_u64(tag).update_u64(i).digest());
}

uint64_t TestEngine::mmio_read(uint64_t offset, Gic& gic, TraceLog& trace) {
  if (offset == kRegStatus) { // clear-on-read
    uint64_t v = reg(kRegStatus);
    set_reg(kRegStatus, 0);
    return v;
  }
  return Device::mmio_read(offset, gic, trace);
}

void TestEngine::mmio_write(uint64_t offset, uint64_t value, Gic& gic, TraceLog& trace) {
  if (offset == kRegGo && value != 0) {
    DmaOutcome outcome = run_job(gic, trace);
    set_reg(kRegFault, outcome == DmaOutcome::Ok ? 0 : 1);
    if (outcome == DmaOutcome::Ok) {
      set_reg(kRegStatus, 1);
      if (!descriptor_.interrupts.empty()) assert_irq(descriptor_.interrupts.front().id, gic, trace);
    }
    return;
  }
  Device::mmio_write(offset, value, gic, trace);
}

DmaOutcome TestEngine::run_job(Gic&, TraceLog& trace) {
  if (!dma_) throw ModelError("test engine has no DMA context bound");

  const uint64_t len = reg(kRegLen);
  const GuestAddr gpa = reg(kRegGpa);
  const uint64_t tag = reg(kRegTag);
  const bool device_writes = reg(kRegDir) == 0;
  const StreamId stream = descriptor_.id;

  auto fail = [&](DmaOutcome outcome, const char* why) {
    trace.emit(EventKind::Dma, {{"device", descriptor_.id},
                                {"dir", device_writes ? "write" : "read"},
                                {"bytes", len},
                                {"fault", why}});
    return outcome;
  };

  auto stream_it = dma_->smmu.streams.find(stream);
  if (stream_it == dma_->smmu.streams.end())
    return fail(DmaOutcome::TranslationFault, "no-stream");

  // Resolve and check every granule the transfer touches before moving data.
  std::vector<PhysAddr> pages;
  for (uint64_t off = 0; off < len; off += kGranuleSize) {
    auto translated = stream_it->second.translate(gpa + off, device_writes
                                                                ? AccessKind::Write
                                                                : AccessKind::Read);
    if (std::holds_alternative<TranslationFault>(translated))
      return fail(DmaOutcome::TranslationFault, "translation");
    PhysAddr pa = std::get<PhysAddr>(translated);
    AccessRequest req{DeviceSource{stream}, pa,
                      device_writes ? AccessKind::Write : AccessKind::Read};
    if (gpc_check(req, dma_->gptd) == GpcResult::Fault)
      return fail(DmaOutcome::ProtectionFault, "gpc");
    pages.push_back(pa);
  }

  Fnv1a64 digest;
  for (uint64_t i = 0; i < len; ++i) {
    PhysAddr pa = pages[i / kGranuleSize] + (i % kGranuleSize);
    if (device_writes) {
      uint8_t b = pattern_byte(pattern_seed_, tag, i);
      dma_->memory.write8(pa, b);
      digest.update(b);
    } else {
      digest.update(dma_->memory.read8(pa));
    }
  }
  set_reg(kRegDigest, digest.digest());

  trace.emit(EventKind::Dma, {{"device", descriptor_.id},
                              {"dir", device_writes ? "write" : "read"},
                              {"bytes", len},
                              {"tag", tag}});
  return DmaOutcome::Ok;
}

void TestEngine::pulse_event(size_t index, Gic& gic, TraceLog& trace) {
  if (index + 1 >= descriptor_.interrupts.size())
    throw ModelError("test engine event line out of range");
  assert_irq(descriptor_.interrupts[index + 1].id, gic, trace);
}

void DeviceSet::add(std::unique_ptr<Device> device) {
  DeviceId id = device->descriptor().id;
  if (devices_.count(id)) throw ModelError("duplicate device id");
  devices_[id] = std::move(device);
}

const Device& DeviceSet::device(DeviceId id) const {
  auto it = devices_.find(id);
  if (it == devices_.end()) throw ModelError("unknown device id");
  return *it->second;
}

Device& DeviceSet::device(DeviceId id) {
  auto it = devices_.find(id);
  if (it == devices_.end()) throw ModelError("unknown device id");
  return *it->second;
}

Device* DeviceSet::find_by_name(const std::string& name) {
  for (auto& [id, dev] : devices_) {
    if (dev->descriptor().name == name) return dev.get();
  }
  return nullptr;
}

std::optional<DeviceSet::Resolved> DeviceSet::resolve_mmio(PhysAddr pa) const {
  GranuleIndex g = granule_of(pa);
  for (const auto& [id, dev] : devices_) {
    uint64_t base_offset = 0;
    for (const GranuleRange& r : dev->descriptor().mmio) {
      if (r.contains(g)) {
        uint64_t offset = base_offset + (pa - granule_base(r.first));
        return Resolved{id, offset};
      }
      base_offset += r.count * kGranuleSize;
    }
  }
  return std::nullopt;
}

MmioResult DeviceSet::mmio_access(DeviceId id, uint64_t offset, AccessKind kind,
                                  uint64_t value, World source_world, Gic& gic,
                                  TraceLog& trace) {
  Device& dev = device(id);
  uint64_t span = 0;
  for (const GranuleRange& r : dev.descriptor().mmio) span += r.count * kGranuleSize;
  if (offset >= span) throw ModelError("MMIO offset outside device range");

  trace.emit(EventKind::Mmio, {{"device", id},
                               {"offset", offset},
                               {"op", kind == AccessKind::Read ? "read" : "write"},
                               {"world", to_string(source_world)}});

  PasFilterView::Policy policy = PasFilterView::Policy::Full;
  if (dev.filter()) policy = dev.filter()->policy(source_world);

  if (kind == AccessKind::Read) {
    if (policy == PasFilterView::Policy::Zero) return {true, 0};
    return {true, dev.mmio_read(offset, gic, trace)};
  }
  if (policy != PasFilterView::Policy::Full) return {false, 0}; // write dropped
  dev.mmio_write(offset, value, gic, trace);
  return {true, 0};
}

uint64_t DeviceSet::tree_measurement() const {
  Fnv1a64 h;
  for (const auto& [id, dev] : devices_) h.update_u64(dev->descriptor().measure());
  return h.digest();
}

void DeviceSet::validate() const {
  std::set<GranuleIndex> seen_granules;
  std::set<IntId> seen_irqs;
  for (const auto& [id, dev] : devices_) {
    for (const GranuleRange& r : dev->descriptor().mmio) {
      for (GranuleIndex g = r.first; g < r.end(); ++g) {
        if (!seen_granules.insert(g).second)
          throw ModelError("overlapping MMIO ranges in platform device tree");
      }
    }
    for (const InterruptSpec& s : dev->descriptor().interrupts) {
      if (!seen_irqs.insert(s.id).second)
        throw ModelError("shared interrupt id in platform device tree");
    }
  }
}

} // namespace realmsim
