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
// Distributed symmetric-repartitioning hash join in four scheduling
// variants. The variants share every operator; they differ only in how the
// per-chunk partition / size-exchange / shuffle / build / probe steps are
// ordered across execution streams.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pystachio/exec.hpp"
#include "pystachio/net.hpp"
#include "pystachio/ops.hpp"
#include "pystachio/types.hpp"

namespace pystachio {

enum class JoinVariant { Blocking, BlockingOpt, Chunking, DeferredSync };

const char* to_string(JoinVariant v);
JoinVariant join_variant_from_string(const std::string& s);

struct JoinSpec {
  std::string build_key = "k";
  std::string probe_key = "k";
  int node_count = 2;
  std::uint64_t chunk_rows = 32 * 1024;
  JoinVariant variant = JoinVariant::DeferredSync;
  int stream_count = 2;
  HashKind hash = HashKind::MultiplyShift;

  void validate() const {
    if (node_count < 1) throw InvalidInput("node_count must be >= 1");
    if (chunk_rows < 1) throw InvalidInput("chunk_rows must be >= 1");
    if (stream_count < 1) throw InvalidInput("stream_count must be >= 1");
    if ((variant == JoinVariant::Blocking || variant == JoinVariant::BlockingOpt) &&
        effective_stream_count() != 1)
      throw InvalidInput("blocking variants use a single stream");
  }
  int effective_stream_count() const {
    return (variant == JoinVariant::Blocking || variant == JoinVariant::BlockingOpt) ? 1
                                                                                     : stream_count;
  }
  /// Allocator mode implied by the variant: the naive blocking join pays a
  /// modeled latency per allocation; every optimized variant pools.
  PoolMode pool_mode() const {
    return variant == JoinVariant::Blocking ? PoolMode::PerAllocation : PoolMode::Pooled;
  }
  /// Network preset implied by the variant.
  NetConfig net_preset() const {
    return variant == JoinVariant::Blocking ? NetConfig::untuned() : NetConfig{};
  }
};

/// One entry of a schedule plan: which phase runs for which wave on which
/// stream. Plans are pure data so nodes derive identical collective orders.
struct PlanStep {
  enum class Phase {
    ConcatLeft,
    PartitionLeft,
    SizesLeft,
    ShuffleLeft,
    Build,
    ConcatRight,
    PartitionRight,
    SizesRight,
    ShuffleRight,
    Probe,
    Drain,
  };
  Phase phase;
  int stream = 0;  // == stream_count selects the dedicated build stream
  int wave = -1;
};

struct SchedulePlan {
  std::vector<PlanStep> steps;
  int stream_count = 1;
  int left_waves = 1;
  int right_waves = 1;
};

const char* to_string(PlanStep::Phase p);

/// Single stream, full-table phases strictly in sequence.
SchedulePlan plan_blocking(const JoinSpec& spec);
/// Waves round-robined over streams; per wave partition/sizes/shuffle(/probe)
/// back-to-back in one stream; build once on a dedicated stream after every
/// left shuffle.
SchedulePlan plan_chunking(const JoinSpec& spec, int left_waves, int right_waves);
/// Like chunking, but each wave's probe is issued as the first operation of
/// the next wave assigned to its stream, and the build is issued right after
/// the first right-hand shuffle; trailing probes flush in a drain phase.
SchedulePlan plan_deferred(const JoinSpec& spec, int left_waves, int right_waves);

SchedulePlan make_plan(const JoinSpec& spec, int left_waves, int right_waves);

struct JoinStats {
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  std::uint64_t result_rows = 0;
  std::uint64_t bytes_received = 0;
  std::int64_t runtime_ns() const { return end_ns - start_ns; }
};

/// Runs the join for one node. `build_chunks`/`probe_chunks` are this node's
/// local (non-co-partitioned) inputs; chunk boundaries are the wave units.
/// Joined batches stream into `sink` (untracked from the pool first). All
/// nodes of a run must use the same spec.
JoinStats run_join(const JoinSpec& spec, ExecEnv& env, Fabric& fabric, int node,
                   const Schema& build_schema, std::vector<ChunkBatch> build_chunks,
                   const Schema& probe_schema, std::vector<ChunkBatch> probe_chunks,
                   const std::function<void(ChunkBatch)>& sink);

/// Per-node received bytes divided by the configured link bandwidth.
double theoretical_shuffle_floor(std::uint64_t per_node_recv_bytes,
                                 double link_bandwidth_bytes_per_s);

/// Expected per-node shuffle receive volume for evenly spread tables.
std::uint64_t expected_shuffle_recv_bytes(std::uint64_t total_table_bytes, int node_count);

/// Splits one batch into chunk_rows-sized waves (helper for harnesses).
/// Chunks are charged to `pool` when given, untracked otherwise.
std::vector<ChunkBatch> chunk_rows_split(const ChunkBatch& batch, std::uint64_t chunk_rows,
                                         MemoryPool* pool = nullptr);

}  // namespace pystachio
