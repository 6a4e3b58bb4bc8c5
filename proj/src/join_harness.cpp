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

#include "pystachio/join_harness.hpp"

#include <algorithm>

#include "pystachio/sim_fabric.hpp"
#include "pystachio/sim_kernel.hpp"

namespace pystachio {

namespace {

std::vector<RawRow> rows_of_batch(const ChunkBatch& batch) {
  std::vector<RawRow> rows(batch.row_count(), RawRow(batch.column_count()));
  for (std::size_t c = 0; c < batch.column_count(); ++c) {
    const auto raw = batch.column(c).raw();
    for (std::size_t r = 0; r < raw.size(); ++r) rows[r][c] = raw[r];
  }
  return rows;
}

std::vector<ChunkBatch> node_chunks(const GeneratedTable& table, int node, int node_count,
                                    std::uint64_t chunk_rows) {
  GeneratedTable slice = slice_for_node(table, node, node_count);
  ChunkBatch whole = slice.to_batch();
  // Inputs model storage-resident data, so they stay outside the node pool.
  return chunk_rows_split(whole, chunk_rows, nullptr);
}

}  // namespace

SimJoinOutcome run_sim_join(const SimJoinOptions& opts) {
  opts.spec.validate();
  const int n = opts.spec.node_count;
  const GeneratedTable build = gen_build_table(opts.workload);
  const GeneratedTable probe = gen_probe_table(opts.workload);

  SimJoinOutcome outcome;
  outcome.per_node.resize(static_cast<std::size_t>(n));
  outcome.peak_bytes.resize(static_cast<std::size_t>(n));

  SimKernel kernel;
  SimRuntime rt(kernel);
  NetConfig net = opts.net.value_or(opts.spec.net_preset());

  std::vector<std::unique_ptr<MemoryPool>> pools;
  std::vector<std::unique_ptr<NodeExecState>> states;
  std::vector<NodeExecState*> state_ptrs;
  for (int i = 0; i < n; ++i) {
    pools.push_back(std::make_unique<MemoryPool>(opts.memory_budget, opts.spec.pool_mode()));
    states.push_back(std::make_unique<NodeExecState>());
    state_ptrs.push_back(states.back().get());
  }
  SimFabric fabric(rt, n, net, *outcome.trace, state_ptrs);

  for (int node = 0; node < n; ++node) {
    kernel.spawn("join_node" + std::to_string(node), [&, node] {
      ExecEnv env{rt, *outcome.trace, node, *pools[static_cast<std::size_t>(node)], opts.cost,
                  StallFaultConfig{}, *states[static_cast<std::size_t>(node)]};
      auto build_in = node_chunks(build, node, n, opts.spec.chunk_rows);
      auto probe_in = node_chunks(probe, node, n, opts.spec.chunk_rows);
      std::function<void(ChunkBatch)> sink;
      if (opts.collect_rows) {
        sink = [&outcome](ChunkBatch batch) {
          auto rows = rows_of_batch(batch);
          outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
        };
      }
      outcome.per_node[static_cast<std::size_t>(node)] =
          run_join(opts.spec, env, fabric, node, build.schema, std::move(build_in), probe.schema,
                   std::move(probe_in), sink);
      outcome.peak_bytes[static_cast<std::size_t>(node)] =
          pools[static_cast<std::size_t>(node)]->peak_bytes();
    });
  }
  kernel.run();

  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = 0;
  for (const auto& st : outcome.per_node) {
    lo = std::min(lo, st.start_ns);
    hi = std::max(hi, st.end_ns);
  }
  outcome.runtime_ns = hi - lo;
  return outcome;
}

SocketJoinOutcome run_socket_join(const JoinSpec& spec, const SyntheticJoinSpec& workload,
                                  const ClusterConfig& cluster, int node, Trace* trace) {
  spec.validate();
  const int n = spec.node_count;
  if (static_cast<int>(cluster.nodes.size()) != n)
    throw InvalidInput("cluster size does not match spec node count");

  const GeneratedTable build = gen_build_table(workload);
  const GeneratedTable probe = gen_probe_table(workload);

  RealRuntime rt;
  Trace local_trace;
  Trace& tr = trace != nullptr ? *trace : local_trace;
  MemoryPool pool(std::numeric_limits<std::uint64_t>::max(), spec.pool_mode());
  NodeExecState state;
  SimCostConfig cost;
  ExecEnv env{rt, tr, node, pool, cost, StallFaultConfig{}, state};

  SocketFabric fabric(cluster, node, &tr);

  SocketJoinOutcome outcome;
  std::mutex sink_mu;
  auto sink = [&](ChunkBatch batch) {
    auto rows = rows_of_batch(batch);
    std::lock_guard lock(sink_mu);
    outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
  };
  outcome.stats = run_join(spec, env, fabric, node, build.schema,
                           node_chunks(build, node, n, spec.chunk_rows), probe.schema,
                           node_chunks(probe, node, n, spec.chunk_rows), sink);
  return outcome;
}

}  // namespace pystachio
