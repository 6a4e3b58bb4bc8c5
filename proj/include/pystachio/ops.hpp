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
#include <memory>
#include <string>
#include <vector>

#include "pystachio/hashing.hpp"
#include "pystachio/memory_pool.hpp"
#include "pystachio/predicate.hpp"
#include "pystachio/types.hpp"

namespace pystachio {

/// Accounting that op bodies feed to the modeled-time envelope.
struct OpStats {
  std::uint64_t work_bytes = 0;
  std::uint64_t out_bytes = 0;
  std::uint64_t alloc_count = 0;
};

/// Order-preserving predicate filter.
ChunkBatch filter(const ChunkBatch& batch, const Predicate& pred, MemoryPool& pool,
                  OpStats* stats = nullptr);

/// Splits rows by hash(key) mod node_count; within each partition input
/// order is preserved.
std::vector<ChunkBatch> partition(const ChunkBatch& batch, const std::string& key_column,
                                  std::uint32_t node_count, HashKind hash, MemoryPool& pool,
                                  OpStats* stats = nullptr);

/// Concatenates batches of one schema into a single batch.
ChunkBatch concat(const Schema& schema, const std::vector<ChunkBatch>& batches, MemoryPool& pool,
                  OpStats* stats = nullptr);

/// Chained hash table over an Int64 key. Duplicate keys keep every row.
/// Bucket count is sized for load factor 0.5.
class HashTable {
 public:
  HashTable() = default;

  static HashTable build(const std::vector<ChunkBatch>& batches, const std::string& key_column,
                         HashKind hash, MemoryPool& pool, OpStats* stats = nullptr);

  /// Payload rows for `key` as indices into the materialized build side.
  std::vector<std::size_t> lookup(std::int64_t key) const;

  /// Inner-join probe: result columns are build payload columns followed by
  /// every probe column.
  ChunkBatch probe(const ChunkBatch& probe_batch, const std::string& probe_key, MemoryPool& pool,
                   OpStats* stats = nullptr) const;

  std::size_t row_count() const { return keys_.size(); }
  const Schema& payload_schema() const { return payload_schema_; }
  std::uint64_t byte_size() const;
  std::int64_t key_at(std::size_t row) const { return keys_[row]; }
  std::uint64_t payload_at(std::size_t col, std::size_t row) const { return payload_[col][row]; }

  /// Conservative size estimate used by the pipeline planner.
  static std::uint64_t estimate_bytes(std::uint64_t rows, std::uint64_t payload_columns);

 private:
  HashKind hash_ = HashKind::MultiplyShift;
  Schema payload_schema_;
  std::vector<std::int64_t> keys_;
  std::vector<std::vector<std::uint64_t>> payload_;  // column-major raw words
  std::vector<std::int64_t> bucket_heads_;           // -1 empty
  std::vector<std::int64_t> next_;
  std::uint64_t bucket_mask_ = 0;
  PoolLease lease_;
};

}  // namespace pystachio
