// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "staleflow/types.hpp"

namespace staleflow {

// 64-bit FNV-1a. Pinned as the project-wide checksum: streaming, byte-order
// independent, stable across platforms. Used for weight shard integrity and
// checkpoint manifests.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ull;
  static constexpr std::uint64_t kPrime = 0x100000001b3ull;

  void update(const std::uint8_t* data, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= data[i];
      state_ *= kPrime;
    }
  }
  void update(const Bytes& b) { update(b.data(), b.size()); }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len) {
  Fnv1a64 h;
  h.update(data, len);
  return h.digest();
}

inline std::uint64_t fnv1a64(const Bytes& b) { return fnv1a64(b.data(), b.size()); }

}  // namespace staleflow
