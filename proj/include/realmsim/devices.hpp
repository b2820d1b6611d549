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

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "realmsim/gic.hpp"
#include "realmsim/mem_isolation.hpp"
#include "realmsim/trace.hpp"
#include "realmsim/types.hpp"

namespace realmsim {

enum class DeviceClass : uint8_t { MmioOnly, MmioOnlyPasFilter, LegacyDma };

const char* to_string(DeviceClass c);

struct InterruptSpec {
  IntId id;
  Trigger trigger;
};

// Fixed at platform definition; the physical addresses are part of the
// trusted platform description and software cannot move them.
struct DeviceDescriptor {
  DeviceId id = 0;
  std::string name;
  DeviceClass cls = DeviceClass::MmioOnly;
  std::vector<GranuleRange> mmio;
  bool dma_capable = false;
  std::vector<InterruptSpec> interrupts;

  bool has_interrupt(IntId id_) const;
  uint64_t measure() const;
};

// Per-world register filter for devices with their own PAS filters. Such
// devices perform world-level filtering themselves and skip the GPC.
class PasFilterView {
 public:
  enum class Policy : uint8_t { Full, ReadOnly, Zero };

  void set_policy(World world, Policy policy);
  Policy policy(World world) const; // Root always sees the full view

 private:
  std::map<World, Policy> policies_;
};

struct DeviceState {
  std::map<uint64_t, uint64_t> registers; // offset -> value
  std::deque<uint8_t> fifo;
  uint32_t reset_count = 0;
};

struct MmioResult {
  bool ok = true;
  uint64_t value = 0; // read result
};

struct DmaContext {
  SmmuState& smmu;
  const GranuleProtectionTable& gptd;
  PhysicalMemory& memory;
  TraceLog& trace;
};

enum class DmaOutcome : uint8_t { Ok, TranslationFault, ProtectionFault };

class Device {
 public:
  Device(DeviceDescriptor descriptor, std::optional<PasFilterView> filter)
      : descriptor_(std::move(descriptor)), filter_(std::move(filter)) {}
  virtual ~Device() = default;

  const DeviceDescriptor& descriptor() const { return descriptor_; }
  const std::optional<PasFilterView>& filter() const { return filter_; }
  const DeviceState& state() const { return state_; }

  uint64_t reg(uint64_t offset) const;
  void set_reg(uint64_t offset, uint64_t value);

  // Register-file semantics; subclasses add side effects (FIFO pops, DMA
  // kicks). `offset` is relative to the device's first MMIO granule.
  virtual uint64_t mmio_read(uint64_t offset, Gic& gic, TraceLog& trace);
  virtual void mmio_write(uint64_t offset, uint64_t value, Gic& gic, TraceLog& trace);

  // Restores the all-zero state: registers cleared, FIFO empty, lines
  // deasserted. Idempotent apart from the reset counter.
  virtual void soft_reset(Gic& gic, TraceLog& trace);

  uint64_t measure_state() const;

 protected:
  void assert_irq(IntId id, Gic& gic, TraceLog& trace); // id must be in the descriptor
  void deassert_irq(IntId id, Gic& gic);

  DeviceDescriptor descriptor_;
  std::optional<PasFilterView> filter_;
  DeviceState state_;
};

// PL050-style byte FIFO with a status and a data register. The interrupt
// line is asserted while the FIFO is non-empty; reading the data register
// pops one byte and deasserts the line when the FIFO drains. Models both the
// keyboard and the mouse.
class FifoDevice : public Device {
 public:
  static constexpr uint64_t kRegStatus = 0x00; // bit0: data available
  static constexpr uint64_t kRegData = 0x08;   // read pops one byte

  using Device::Device;

  void push_byte(uint8_t byte, Gic& gic, TraceLog& trace);
  size_t backlog() const { return state_.fifo.size(); }

  uint64_t mmio_read(uint64_t offset, Gic& gic, TraceLog& trace) override;

 private:
  IntId line_id() const;
};

class LedDevice : public Device {
 public:
  static constexpr uint64_t kRegValue = 0x00;
  using Device::Device;
};

class ButtonDevice : public Device {
 public:
  static constexpr uint64_t kRegState = 0x00; // 1 while pressed
  using Device::Device;

  void set_pressed(bool pressed) { set_reg(kRegState, pressed ? 1 : 0); }
};

// DMA test pattern engine behind the SMMU. The guest programs a transfer
// through MMIO; the engine reads or writes guest memory through its stream's
// stage-2 table with a GPC check against GPTd, publishes a digest of the
// transferred bytes, raises its status flag, and pulses the edge-triggered
// completion interrupt. The status register is set by the device and clears
// on read. Extra descriptor interrupt lines, when present, are scriptable
// event sources used by interrupt-heavy scenarios.
class TestEngine : public Device {
 public:
  static constexpr uint64_t kRegDir = 0x00;    // 0: device writes memory, 1: device reads
  static constexpr uint64_t kRegLen = 0x08;    // bytes
  static constexpr uint64_t kRegGpa = 0x10;    // target guest address
  static constexpr uint64_t kRegTag = 0x18;    // buffer tag, feeds the pattern
  static constexpr uint64_t kRegGo = 0x20;     // write 1 to start
  static constexpr uint64_t kRegStatus = 0x28; // job done flag, clear-on-read
  static constexpr uint64_t kRegDigest = 0x30; // digest of the last transfer
  static constexpr uint64_t kRegFault = 0x38;  // nonzero if the last transfer faulted

  using Device::Device;

  void bind_dma(DmaContext* ctx) { dma_ = ctx; }
  void set_pattern_seed(uint64_t seed) { pattern_seed_ = seed; }

  uint64_t mmio_read(uint64_t offset, Gic& gic, TraceLog& trace) override;
  void mmio_write(uint64_t offset, uint64_t value, Gic& gic, TraceLog& trace) override;

  // Scripted event source: pulses descriptor interrupt line `index + 1`
  // (line 0 is the DMA completion interrupt).
  void pulse_event(size_t index, Gic& gic, TraceLog& trace);

  static uint8_t pattern_byte(uint64_t seed, uint64_t tag, uint64_t i);

 private:
  DmaOutcome run_job(Gic& gic, TraceLog& trace);

  DmaContext* dma_ = nullptr;
  uint64_t pattern_seed_ = 0;
};

// The trusted platform device tree plus the live device models.
class DeviceSet {
 public:
  void add(std::unique_ptr<Device> device);

  const Device& device(DeviceId id) const;
  Device& device(DeviceId id);
  Device* find_by_name(const std::string& name);
  const std::map<DeviceId, std::unique_ptr<Device>>& all() const { return devices_; }

  // One-to-one mapping: any MMIO physical address resolves to at most one
  // device. Returns the device and the offset within its register file.
  struct Resolved {
    DeviceId device;
    uint64_t offset;
  };
  std::optional<Resolved> resolve_mmio(PhysAddr pa) const;

  // Register access with the PAS-filter view applied for filtered devices.
  MmioResult mmio_access(DeviceId id, uint64_t offset, AccessKind kind, uint64_t value,
                         World source_world, Gic& gic, TraceLog& trace);

  uint64_t tree_measurement() const;
  void validate() const; // disjoint MMIO ranges and interrupt ids

 private:
  std::map<DeviceId, std::unique_ptr<Device>> devices_;
};

} // namespace realmsim
