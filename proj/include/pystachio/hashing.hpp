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

#include <cstddef>
#include <cstdint>

namespace pystachio {

/// Key-hash strategy for partitioning and hash tables. Identity exists so
/// small tests can predict partition membership by hand.
enum class HashKind { MultiplyShift, Identity };

/// 64-bit multiply-shift with a fixed odd constant. Seedless so that every
/// node derives the same placement for the same key.
inline std::uint64_t multiply_shift(std::uint64_t key) {
  return (key * 0x9E3779B97F4A7C15ull) >> 13;
}

inline std::uint64_t hash_key(std::int64_t key, HashKind kind) {
  const auto u = static_cast<std::uint64_t>(key);
  return kind == HashKind::Identity ? u : multiply_shift(u);
}

inline std::uint32_t partition_of(std::int64_t key, std::uint32_t node_count, HashKind kind) {
  return static_cast<std::uint32_t>(hash_key(key, kind) % node_count);
}

/// FNV-1a, used as the per-envelope payload checksum on the socket backend.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace pystachio
