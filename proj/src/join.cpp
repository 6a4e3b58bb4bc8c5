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

#include "pystachio/join.hpp"

#include <algorithm>
#include <atomic>

namespace pystachio {

const char* to_string(JoinVariant v) {
  switch (v) {
    case JoinVariant::Blocking: return "blocking";
    case JoinVariant::BlockingOpt: return "blocking-opt";
    case JoinVariant::Chunking: return "chunking";
    case JoinVariant::DeferredSync: return "deferred";
  }
  return "?";
}

JoinVariant join_variant_from_string(const std::string& s) {
  if (s == "blocking") return JoinVariant::Blocking;
  if (s == "blocking-opt") return JoinVariant::BlockingOpt;
  if (s == "chunking") return JoinVariant::Chunking;
  if (s == "deferred") return JoinVariant::DeferredSync;
  throw InvalidInput("unknown join variant: " + s);
}

const char* to_string(PlanStep::Phase p) {
  switch (p) {
    case PlanStep::Phase::ConcatLeft: return "concat_left";
    case PlanStep::Phase::PartitionLeft: return "partition_left";
    case PlanStep::Phase::SizesLeft: return "sizes_left";
    case PlanStep::Phase::ShuffleLeft: return "shuffle_left";
    case PlanStep::Phase::Build: return "build";
    case PlanStep::Phase::ConcatRight: return "concat_right";
    case PlanStep::Phase::PartitionRight: return "partition_right";
    case PlanStep::Phase::SizesRight: return "sizes_right";
    case PlanStep::Phase::ShuffleRight: return "shuffle_right";
    case PlanStep::Phase::Probe: return "probe";
    case PlanStep::Phase::Drain: return "drain";
  }
  return "?";
}

SchedulePlan plan_blocking(const JoinSpec& spec) {
  spec.validate();
  SchedulePlan plan;
  plan.stream_count = 1;
  using P = PlanStep::Phase;
  plan.steps = {
      {P::ConcatLeft, 0, 0},  {P::PartitionLeft, 0, 0},  {P::SizesLeft, 0, 0},
      {P::ShuffleLeft, 0, 0}, {P::Build, 0, -1},         {P::ConcatRight, 0, 0},
      {P::PartitionRight, 0, 0}, {P::SizesRight, 0, 0},  {P::ShuffleRight, 0, 0},
      {P::Probe, 0, 0},       {P::Drain, 0, -1},
  };
  return plan;
}

SchedulePlan plan_chunking(const JoinSpec& spec, int left_waves, int right_waves) {
  spec.validate();
  SchedulePlan plan;
  const int k = spec.effective_stream_count();
  plan.stream_count = k;
  plan.left_waves = left_waves;
  plan.right_waves = right_waves;
  using P = PlanStep::Phase;
  for (int w = 0; w < left_waves; ++w) {
    const int s = w % k;
    plan.steps.push_back({P::PartitionLeft, s, w});
    plan.steps.push_back({P::SizesLeft, s, w});
    plan.steps.push_back({P::ShuffleLeft, s, w});
  }
  plan.steps.push_back({P::Build, k, -1});
  for (int w = 0; w < right_waves; ++w) {
    const int s = w % k;
    plan.steps.push_back({P::PartitionRight, s, w});
    plan.steps.push_back({P::SizesRight, s, w});
    plan.steps.push_back({P::ShuffleRight, s, w});
    plan.steps.push_back({P::Probe, s, w});
  }
  plan.steps.push_back({P::Drain, 0, -1});
  return plan;
}

SchedulePlan plan_deferred(const JoinSpec& spec, int left_waves, int right_waves) {
  spec.validate();
  SchedulePlan plan;
  const int k = spec.effective_stream_count();
  plan.stream_count = k;
  plan.left_waves = left_waves;
  plan.right_waves = right_waves;
  using P = PlanStep::Phase;
  for (int w = 0; w < left_waves; ++w) {
    const int s = w % k;
    plan.steps.push_back({P::PartitionLeft, s, w});
    plan.steps.push_back({P::SizesLeft, s, w});
    plan.steps.push_back({P::ShuffleLeft, s, w});
  }
  for (int w = 0; w < right_waves; ++w) {
    const int s = w % k;
    // The previous wave on this stream probes first, so its synchronizing
    // hash-table op lands after this wave's async shuffle was front-loaded.
    if (w >= k) plan.steps.push_back({P::Probe, (w - k) % k, w - k});
    plan.steps.push_back({P::PartitionRight, s, w});
    plan.steps.push_back({P::SizesRight, s, w});
    plan.steps.push_back({P::ShuffleRight, s, w});
    if (w == 0) plan.steps.push_back({P::Build, k, -1});
  }
  if (right_waves == 0) plan.steps.push_back({P::Build, k, -1});
  for (int w = std::max(0, right_waves - k); w < right_waves; ++w)
    plan.steps.push_back({P::Probe, w % k, w});
  plan.steps.push_back({P::Drain, 0, -1});
  return plan;
}

SchedulePlan make_plan(const JoinSpec& spec, int left_waves, int right_waves) {
  switch (spec.variant) {
    case JoinVariant::Blocking:
    case JoinVariant::BlockingOpt: return plan_blocking(spec);
    case JoinVariant::Chunking: return plan_chunking(spec, left_waves, right_waves);
    case JoinVariant::DeferredSync: return plan_deferred(spec, left_waves, right_waves);
  }
  throw InvalidInput("unknown variant");
}

double theoretical_shuffle_floor(std::uint64_t per_node_recv_bytes,
                                 double link_bandwidth_bytes_per_s) {
  if (link_bandwidth_bytes_per_s <= 0) throw InvalidInput("bandwidth must be positive");
  return static_cast<double>(per_node_recv_bytes) / link_bandwidth_bytes_per_s;
}

std::uint64_t expected_shuffle_recv_bytes(std::uint64_t total_table_bytes, int node_count) {
  if (node_count < 1) throw InvalidInput("node_count must be >= 1");
  const auto n = static_cast<std::uint64_t>(node_count);
  return total_table_bytes * (n - 1) / (n * n);
}

std::vector<ChunkBatch> chunk_rows_split(const ChunkBatch& batch, std::uint64_t chunk_rows,
                                         MemoryPool* pool) {
  if (chunk_rows < 1) throw InvalidInput("chunk_rows must be >= 1");
  std::vector<ChunkBatch> out;
  const std::size_t rows = batch.row_count();
  for (std::size_t lo = 0; lo < rows; lo += chunk_rows) {
    const std::size_t hi = std::min(rows, lo + chunk_rows);
    std::vector<Column> cols;
    for (std::size_t c = 0; c < batch.column_count(); ++c) {
      const auto raw = batch.column(c).raw();
      cols.emplace_back(batch.schema().fields[c].type,
                        std::vector<std::uint64_t>(raw.begin() + static_cast<std::ptrdiff_t>(lo),
                                                   raw.begin() + static_cast<std::ptrdiff_t>(hi)));
    }
    if (pool != nullptr)
      out.push_back(ChunkBatch::tracked(*pool, batch.schema(), std::move(cols), batch.source_tag()));
    else
      out.push_back(ChunkBatch(batch.schema(), std::move(cols), batch.source_tag()));
  }
  if (out.empty()) {
    std::vector<Column> cols;
    for (const auto& f : batch.schema().fields)
      cols.emplace_back(f.type, std::vector<std::uint64_t>{});
    out.push_back(ChunkBatch(batch.schema(), std::move(cols), batch.source_tag()));
  }
  return out;
}

namespace {

ChunkBatch empty_batch(const Schema& schema) {
  std::vector<Column> cols;
  for (const auto& f : schema.fields) cols.emplace_back(f.type, std::vector<std::uint64_t>{});
  return ChunkBatch(schema, std::move(cols));
}

OpResult to_result(const OpStats& st) {
  OpResult r;
  r.work_bytes = st.work_bytes;
  r.out_bytes = st.out_bytes;
  r.alloc_count = st.alloc_count;
  return r;
}

/// One node's join execution: holds side state and issues plan steps.
class JoinExecution {
 public:
  JoinExecution(const JoinSpec& spec, ExecEnv& env, Fabric& fabric, int node, Schema build_schema,
                std::vector<ChunkBatch> build_chunks, Schema probe_schema,
                std::vector<ChunkBatch> probe_chunks, const std::function<void(ChunkBatch)>& sink)
      : spec_(spec), env_(env), fabric_(fabric), node_(node), sink_(sink) {
    left_.schema = std::move(build_schema);
    left_.key = spec.build_key;
    left_.chunks = std::move(build_chunks);
    right_.schema = std::move(probe_schema);
    right_.key = spec.probe_key;
    right_.chunks = std::move(probe_chunks);
  }

  JoinStats run() {
    spec_.validate();
    stats_.start_ns = env_.rt.now_ns();

    int left_waves = static_cast<int>(left_.chunks.size());
    int right_waves = static_cast<int>(right_.chunks.size());
    const bool chunked =
        spec_.variant == JoinVariant::Chunking || spec_.variant == JoinVariant::DeferredSync;
    if (chunked && spec_.node_count > 1) {
      // Wave agreement: nodes may hold different chunk counts; every node
      // must issue the same collective sequence, so waves pad to the max.
      const std::uint64_t packed = (static_cast<std::uint64_t>(left_waves) << 24) |
                                   static_cast<std::uint64_t>(right_waves);
      auto counts = fabric_.all_to_all_sizes(
          node_, std::vector<std::uint64_t>(static_cast<std::size_t>(spec_.node_count), packed));
      for (auto c : counts) {
        left_waves = std::max(left_waves, static_cast<int>(c >> 24));
        right_waves = std::max(right_waves, static_cast<int>(c & 0xFFFFFF));
      }
    }
    if (chunked) {
      while (static_cast<int>(left_.chunks.size()) < left_waves)
        left_.chunks.push_back(empty_batch(left_.schema));
      while (static_cast<int>(right_.chunks.size()) < right_waves)
        right_.chunks.push_back(empty_batch(right_.schema));
    }

    const SchedulePlan plan = make_plan(spec_, left_waves, right_waves);
    left_.waves.resize(static_cast<std::size_t>(std::max(plan.left_waves, 1)));
    right_.waves.resize(static_cast<std::size_t>(std::max(plan.right_waves, 1)));

    StreamSet streams(env_, plan.stream_count + 1);  // + dedicated build stream
    for (const auto& step : plan.steps) dispatch(streams, step);
    streams.drain_all();
    streams.close_all();

    stats_.end_ns = env_.rt.now_ns();
    stats_.result_rows = result_rows_.load();
    stats_.bytes_received = bytes_received_.load();
    return stats_;
  }

 private:
  struct Wave {
    std::vector<ChunkBatch> partitions;
    std::vector<std::uint64_t> recv_rows;
    std::vector<ChunkBatch> received;
    TicketPtr shuffle_ticket;
  };
  struct Side {
    Schema schema;
    std::string key;
    std::vector<ChunkBatch> chunks;
    std::vector<Wave> waves;
  };

  void dispatch(StreamSet& streams, const PlanStep& step) {
    using P = PlanStep::Phase;
    switch (step.phase) {
      case P::ConcatLeft: return issue_concat(left_, streams.at(step.stream));
      case P::ConcatRight: return issue_concat(right_, streams.at(step.stream));
      case P::PartitionLeft: return issue_partition(left_, step.wave, streams.at(step.stream));
      case P::PartitionRight: return issue_partition(right_, step.wave, streams.at(step.stream));
      case P::SizesLeft: return issue_sizes(left_, step.wave, streams.at(step.stream));
      case P::SizesRight: return issue_sizes(right_, step.wave, streams.at(step.stream));
      case P::ShuffleLeft: return issue_shuffle(left_, step.wave, streams.at(step.stream));
      case P::ShuffleRight: return issue_shuffle(right_, step.wave, streams.at(step.stream));
      case P::Build: return issue_build(streams.at(step.stream));
      case P::Probe: return issue_probe(step.wave, streams.at(step.stream));
      case P::Drain: return;  // run() drains after the walk
    }
  }

  void issue_concat(Side& side, ExecStream& stream) {
    OpDesc op;
    op.kind = OpKind::Concat;
    op.label = &side == &left_ ? "concat_left" : "concat_right";
    op.data_dependent = true;
    op.body = [this, &side] {
      OpStats st;
      ChunkBatch whole = concat(side.schema, side.chunks, env_.pool, &st);
      side.chunks.clear();
      side.chunks.push_back(std::move(whole));
      return to_result(st);
    };
    stream.issue(std::move(op));
  }

  void issue_partition(Side& side, int wave, ExecStream& stream) {
    OpDesc op;
    op.kind = OpKind::Partition;
    op.label = (&side == &left_ ? "partition_left#" : "partition_right#") + std::to_string(wave);
    op.data_dependent = true;
    op.body = [this, &side, wave] {
      OpStats st;
      side.waves[static_cast<std::size_t>(wave)].partitions =
          partition(side.chunks[static_cast<std::size_t>(wave)], side.key,
                    static_cast<std::uint32_t>(spec_.node_count), spec_.hash, env_.pool, &st);
      side.chunks[static_cast<std::size_t>(wave)] = ChunkBatch{};
      return to_result(st);
    };
    stream.issue(std::move(op));
  }

  void issue_sizes(Side& side, int wave, ExecStream& stream) {
    OpDesc op;
    op.kind = OpKind::SizeExchange;
    op.label = (&side == &left_ ? "sizes_left#" : "sizes_right#") + std::to_string(wave);
    op.data_dependent = true;
    op.resource = "collective";
    op.body = [this, &side, wave] {
      Wave& w = side.waves[static_cast<std::size_t>(wave)];
      std::vector<std::uint64_t> declared;
      declared.reserve(w.partitions.size());
      for (const auto& p : w.partitions) declared.push_back(p.row_count());
      const std::int64_t t0 = env_.rt.now_ns();
      w.recv_rows = fabric_.all_to_all_sizes(node_, declared);
      OpResult r;
      r.out_bytes = kValueBytes * static_cast<std::uint64_t>(spec_.node_count);
      r.start_ns_override = t0;
      r.end_ns_override = env_.rt.now_ns();
      return r;
    };
    stream.issue(std::move(op));
  }

  void issue_shuffle(Side& side, int wave, ExecStream& stream) {
    OpDesc op;
    op.kind = OpKind::AllToAll;
    op.label = (&side == &left_ ? "shuffle_left#" : "shuffle_right#") + std::to_string(wave);
    op.resource = "collective";
    op.body = [this, &side, wave] {
      Wave& w = side.waves[static_cast<std::size_t>(wave)];
      const std::uint32_t ncols = static_cast<std::uint32_t>(side.schema.column_count());
      std::vector<A2AColumns> per_dest;
      per_dest.reserve(w.partitions.size());
      for (auto& p : w.partitions) {
        A2AColumns cols;
        for (std::size_t c = 0; c < p.column_count(); ++c) {
          const auto raw = p.column(c).raw();
          cols.emplace_back(raw.begin(), raw.end());
        }
        per_dest.push_back(std::move(cols));
      }
      w.partitions.clear();

      A2AResult res = fabric_.all_to_all(node_, std::move(per_dest), ncols);

      const std::uint64_t allocs =
          static_cast<std::uint64_t>(spec_.node_count) * std::max<std::uint64_t>(ncols, 1);
      w.received.reserve(res.per_source.size());
      for (std::size_t src = 0; src < res.per_source.size(); ++src) {
        std::vector<Column> cols;
        for (std::size_t c = 0; c < res.per_source[src].size(); ++c)
          cols.emplace_back(side.schema.fields[c].type, std::move(res.per_source[src][c]));
        ChunkBatch batch = ChunkBatch::tracked(env_.pool, side.schema, std::move(cols), "recv");
        if (!w.recv_rows.empty() && batch.row_count() != w.recv_rows[src])
          throw Error("shuffle delivered a row count that disagrees with the size exchange");
        w.received.push_back(std::move(batch));
      }
      bytes_received_ += res.bytes_received;

      OpResult r;
      r.out_bytes = res.bytes_received;
      r.alloc_count = allocs;
      r.start_ns_override = res.start_ns;
      r.end_ns_override = env_.rt.simulated()
                              ? res.end_ns + env_.pool.alloc_latency_ns(allocs)
                              : res.end_ns;
      return r;
    };
    side.waves[static_cast<std::size_t>(wave)].shuffle_ticket = stream.issue(std::move(op));
  }

  void issue_build(ExecStream& stream) {
    OpDesc op;
    op.kind = OpKind::Build;
    op.label = "build";
    op.data_dependent = true;
    for (auto& w : left_.waves)
      if (w.shuffle_ticket) op.deps.push_back(w.shuffle_ticket);
    op.body = [this] {
      std::vector<ChunkBatch> inputs;
      for (auto& w : left_.waves)
        for (auto& b : w.received) inputs.push_back(std::move(b));
      for (auto& w : left_.waves) w.received.clear();
      OpStats st;
      table_ = HashTable::build(inputs, left_.key, spec_.hash, env_.pool, &st);
      return to_result(st);
    };
    build_ticket_ = stream.issue(std::move(op));
  }

  void issue_probe(int wave, ExecStream& stream) {
    OpDesc op;
    op.kind = OpKind::Probe;
    op.label = "probe#" + std::to_string(wave);
    op.data_dependent = true;
    if (build_ticket_) op.deps.push_back(build_ticket_);
    op.body = [this, wave] {
      Wave& w = right_.waves[static_cast<std::size_t>(wave)];
      OpResult total;
      for (auto& batch : w.received) {
        OpStats st;
        ChunkBatch out = table_.probe(batch, right_.key, env_.pool, &st);
        total.work_bytes += st.work_bytes;
        total.out_bytes += st.out_bytes;
        total.alloc_count += st.alloc_count;
        result_rows_ += out.row_count();
        out.untrack();
        if (sink_) sink_(std::move(out));
      }
      w.received.clear();
      return total;
    };
    stream.issue(std::move(op));
  }

  JoinSpec spec_;
  ExecEnv& env_;
  Fabric& fabric_;
  int node_;
  const std::function<void(ChunkBatch)>& sink_;
  Side left_;
  Side right_;
  HashTable table_;
  TicketPtr build_ticket_;
  std::atomic<std::uint64_t> result_rows_{0};
  std::atomic<std::uint64_t> bytes_received_{0};
  JoinStats stats_;
};

}  // namespace

JoinStats run_join(const JoinSpec& spec, ExecEnv& env, Fabric& fabric, int node,
                   const Schema& build_schema, std::vector<ChunkBatch> build_chunks,
                   const Schema& probe_schema, std::vector<ChunkBatch> probe_chunks,
                   const std::function<void(ChunkBatch)>& sink) {
  JoinExecution exec(spec, env, fabric, node, build_schema, std::move(build_chunks), probe_schema,
                     std::move(probe_chunks), sink);
  return exec.run();
}

}  // namespace pystachio
