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
//
// End-to-end query execution: scans feeding a replicated-build join chain
// and one shuffled join, with reader combining, dynamic buffering, bounded
// chunk queues between the storage and networking control paths, and
// planner-assigned queue capacities (adaptive regulation).

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pystachio/chunk_queue.hpp"
#include "pystachio/device.hpp"
#include "pystachio/join.hpp"
#include "pystachio/metadata_cache.hpp"
#include "pystachio/net.hpp"
#include "pystachio/scan.hpp"

namespace pystachio {

/// Coalesces small chunks before bandwidth-sensitive operators. Emits a
/// combined batch once pending bytes reach the target; flush() drains the
/// remainder, preserving all rows.
class DynamicBuffer {
 public:
  explicit DynamicBuffer(std::uint64_t target_bytes) : target_(target_bytes) {
    if (target_ < 1) throw InvalidInput("buffer target must be >= 1 byte");
  }

  std::optional<ChunkBatch> push(ChunkBatch batch, MemoryPool& pool) {
    pending_bytes_ += batch.byte_size();
    if (schema_.fields.empty()) schema_ = batch.schema();
    pending_.push_back(std::move(batch));
    if (pending_bytes_ >= target_) return emit(pool);
    return std::nullopt;
  }

  std::optional<ChunkBatch> flush(MemoryPool& pool) {
    if (pending_.empty()) return std::nullopt;
    return emit(pool);
  }

  std::uint64_t pending_bytes() const { return pending_bytes_; }

 private:
  std::optional<ChunkBatch> emit(MemoryPool& pool) {
    if (pending_.size() == 1) {
      ChunkBatch only = std::move(pending_.front());
      pending_.clear();
      pending_bytes_ = 0;
      return only;
    }
    ChunkBatch combined = concat(schema_, pending_, pool);
    pending_.clear();
    pending_bytes_ = 0;
    return combined;
  }

  std::uint64_t target_;
  std::uint64_t pending_bytes_ = 0;
  Schema schema_;
  std::vector<ChunkBatch> pending_;
};

/// Stream form of dynamic buffering (unit-test surface).
std::vector<ChunkBatch> buffer_chunks(std::vector<ChunkBatch> in, std::uint64_t target_bytes,
                                      MemoryPool& pool);

struct ScanNode {
  std::string table;
  std::vector<std::string> paths;  // this node's shards ({node} resolved)
  std::vector<std::string> columns;
  Predicate predicate;
  bool replicated = false;
};

struct JoinNode {
  std::string id;
  std::string build;  // upstream name: scan table or prior join id
  std::string probe;
  std::string build_key;
  std::string probe_key;
  bool shuffle = false;  // false: build side is a replicated table, joined locally
};

struct AggregateNode {
  std::string group_by;  // empty = global aggregate; else must equal the shuffle probe key
  std::vector<std::string> sum_columns;
};

struct QueryPlan {
  std::vector<ScanNode> scans;
  std::vector<JoinNode> joins;
  std::optional<AggregateNode> aggregate;
  std::uint64_t buffer_target_bytes = 8 * 1024 * 1024;
  std::uint64_t memory_budget_bytes = 0;  // 0 = unlimited
  std::uint64_t ht_estimate_bytes = 0;    // planner estimate for the shuffle build side
  int io_workers = 4;

  /// Loads the declarative plan file, substituting {data} and {node}.
  static QueryPlan from_json_file(const std::string& path, const std::string& data_root,
                                  int node, int node_count);
  static QueryPlan from_json_text(const std::string& text, const std::string& data_root,
                                  int node, int node_count);
  void validate() const;

  const ScanNode& scan(const std::string& table) const;
  const JoinNode* shuffle_join() const;
};

enum class ExecMode { FullyBlocking, FastIO, Combined, Overlapped };
const char* to_string(ExecMode m);
ExecMode exec_mode_from_string(const std::string& s);

/// Planner-assigned queue capacities: worst-case concurrent resident bytes
/// stay within the budget, and producers block on full queues.
struct Regulation {
  std::map<std::string, std::size_t> queue_capacity_chunks;
  std::uint64_t reserved_bytes = 0;  // replicated + hash table + buffers + in-flight
};
Regulation regulate(const QueryPlan& plan, std::uint64_t memory_budget_bytes,
                    const std::map<std::string, std::uint64_t>& chunk_bytes_per_table,
                    std::uint64_t replicated_bytes, std::uint64_t ht_estimate_bytes);

struct PipelineResult {
  Schema schema;
  std::vector<std::vector<std::uint64_t>> rows;  // this node's result rows (raw words)
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  std::int64_t storage_phase_ns = 0;  // phase-sequential modes only
  std::int64_t network_phase_ns = 0;
  std::uint64_t peak_bytes = 0;
  std::uint64_t bytes_received = 0;
  std::map<std::string, std::size_t> queue_high_water;
  std::int64_t runtime_ns() const { return end_ns - start_ns; }
};

/// Executes the plan for one node. All nodes of a run share the plan; the
/// result multiset is identical across the four modes.
PipelineResult execute_plan(const QueryPlan& plan, ExecMode mode, ExecEnv& env, Fabric& fabric,
                            int node, DeviceManager& devices, MetadataCache& cache,
                            QueueTrace* queue_trace = nullptr);

}  // namespace pystachio
