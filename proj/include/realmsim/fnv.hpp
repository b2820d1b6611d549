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
#include <span>

namespace realmsim {

// FNV-1a 64-bit. Used for all measurement digests; chosen for bit-exact
// reproducibility, not cryptographic strength.
class Fnv1a64 {
 public:
  static constexpr uint64_t kOffset = 14695981039346656037ull;
  static constexpr uint64_t kPrime = 1099511628211ull;

  Fnv1a64() = default;
  explicit Fnv1a64(uint64_t state) : state_(state) {}

  Fnv1a64& update(uint8_t byte) {
    state_ = (state_ ^ byte) * kPrime;
    return *this;
  }

  Fnv1a64& update(std::span<const uint8_t> bytes) {
    for (uint8_t b : bytes) update(b);
    return *this;
  }

  Fnv1a64& update_u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) update(static_cast<uint8_t>(v >> (8 * i)));
    return *this;
  }

  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = kOffset;
};

inline uint64_t fnv1a64(std::span<const uint8_t> bytes) {
  return Fnv1a64{}.update(bytes).digest();
}

} // namespace realmsim
