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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace realmsim {

/// Physical address spaces of an RME-capable platform.
enum class World : uint8_t { Normal = 0, Secure = 1, Realm = 2, Root = 3 };

const char* to_string(World w);

using GranuleIndex = uint64_t;
using PhysAddr = uint64_t;
using GuestAddr = uint64_t;
using VmId = uint32_t;
using DeviceId = uint32_t;
using StreamId = uint32_t; // SMMU stream; one per DMA-attached device
using IntId = uint32_t;

constexpr uint64_t kGranuleBits = 12;
constexpr uint64_t kGranuleSize = uint64_t{1} << kGranuleBits;

constexpr GranuleIndex granule_of(PhysAddr addr) { return addr >> kGranuleBits; }
constexpr PhysAddr granule_base(GranuleIndex g) { return g << kGranuleBits; }
constexpr uint64_t granule_offset(PhysAddr addr) { return addr & (kGranuleSize - 1); }

struct GranuleRange {
  GranuleIndex first = 0;
  uint64_t count = 0;

  bool contains(GranuleIndex g) const { return g >= first && g < first + count; }
  GranuleIndex end() const { return first + count; }
};

enum class AccessKind : uint8_t { Read, Write };
enum class Trigger : uint8_t { Level, Edge };
enum class Group : uint8_t { Group0, Group1 }; // Group0 traps to EL3

/// Simulation modes: normal-world VM baseline, realm VM baseline, and the
/// full memory + interrupt isolation configuration.
enum class Mode : uint8_t { Bn, Br, Dmi };

const char* to_string(Mode m);

/// Configuration bugs in the model itself (unmapped granules, unknown ids).
/// Distinct from in-model faults, which are ordinary return values.
class ModelError : public std::logic_error {
 public:
  explicit ModelError(const std::string& what) : std::logic_error(what) {}
};

/// Outcome of an operation that can fail in-model (not a configuration bug).
struct Status {
  bool ok = true;
  std::string message;

  static Status success() { return {}; }
  static Status error(std::string msg) { return {false, std::move(msg)}; }
  explicit operator bool() const { return ok; }
};

} // namespace realmsim
