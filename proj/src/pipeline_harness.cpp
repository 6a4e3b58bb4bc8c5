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

#include "pystachio/pipeline_harness.hpp"

#include <filesystem>
#include <limits>

#include "pystachio/sim_fabric.hpp"
#include "pystachio/sim_kernel.hpp"

namespace pystachio {

SimPipelineOutcome run_sim_pipeline(const SimPipelineOptions& opts) {
  SimPipelineOutcome outcome;
  outcome.per_node.resize(static_cast<std::size_t>(opts.nodes));

  SimKernel kernel;
  SimRuntime rt(kernel);

  std::vector<std::unique_ptr<MemoryPool>> pools;
  std::vector<std::unique_ptr<NodeExecState>> states;
  std::vector<NodeExecState*> state_ptrs;
  std::vector<std::unique_ptr<DeviceManager>> devices;
  std::vector<std::unique_ptr<MetadataCache>> caches;
  for (int i = 0; i < opts.nodes; ++i) {
    pools.push_back(std::make_unique<MemoryPool>(
        opts.memory_budget == 0 ? std::numeric_limits<std::uint64_t>::max() : opts.memory_budget,
        opts.mode == ExecMode::FullyBlocking ? PoolMode::PerAllocation : PoolMode::Pooled));
    states.push_back(std::make_unique<NodeExecState>());
    state_ptrs.push_back(states.back().get());
    // Each node has its own rate-limited devices over the shared directories.
    auto mgr = std::make_unique<DeviceManager>();
    for (int d = 0; d < 16; ++d) {
      const std::string dir = opts.data_root + "/dev" + std::to_string(d);
      if (std::filesystem::exists(dir))
        mgr->add(dir, DeviceConfig{"dev" + std::to_string(d), opts.device_bandwidth_bytes_per_s,
                                   opts.device_latency_ns});
    }
    devices.push_back(std::move(mgr));
    caches.push_back(std::make_unique<MetadataCache>(rt));
  }

  NetConfig net = opts.net;
  if (opts.mode == ExecMode::FullyBlocking) net = NetConfig::untuned();
  SimFabric fabric(rt, opts.nodes, net, *outcome.trace, state_ptrs);

  for (int node = 0; node < opts.nodes; ++node) {
    kernel.spawn("pipeline_node" + std::to_string(node), [&, node] {
      QueryPlan plan = QueryPlan::from_json_text(opts.plan_json, opts.data_root, node, opts.nodes);
      ExecEnv env{rt, *outcome.trace, node, *pools[static_cast<std::size_t>(node)], opts.cost,
                  opts.stall, *states[static_cast<std::size_t>(node)]};
      outcome.per_node[static_cast<std::size_t>(node)] =
          execute_plan(plan, opts.mode, env, fabric, node, *devices[static_cast<std::size_t>(node)],
                       *caches[static_cast<std::size_t>(node)], outcome.queue_trace.get());
      outcome.per_node[static_cast<std::size_t>(node)].peak_bytes =
          pools[static_cast<std::size_t>(node)]->peak_bytes();
    });
  }
  kernel.run();

  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = 0;
  for (const auto& r : outcome.per_node) {
    lo = std::min(lo, r.start_ns);
    hi = std::max(hi, r.end_ns);
  }
  outcome.runtime_ns = hi - lo;
  return outcome;
}

PipelineResult run_socket_pipeline(const std::string& plan_json, const std::string& data_root,
                                   const ClusterConfig& cluster, int node, ExecMode mode,
                                   Trace* trace, QueueTrace* queue_trace) {
  RealRuntime rt;
  Trace local_trace;
  Trace& tr = trace != nullptr ? *trace : local_trace;
  MemoryPool pool(std::numeric_limits<std::uint64_t>::max(),
                  mode == ExecMode::FullyBlocking ? PoolMode::PerAllocation : PoolMode::Pooled);
  NodeExecState state;
  SimCostConfig cost;
  ExecEnv env{rt, tr, node, pool, cost, StallFaultConfig{}, state};

  DeviceManager devices;
  for (int d = 0; d < 16; ++d) {
    const std::string dir = data_root + "/dev" + std::to_string(d);
    if (std::filesystem::exists(dir)) {
      DeviceConfig cfg{"dev" + std::to_string(d), 0, 0, DeviceBacking::RealFile};
      devices.add(dir, cfg);
    }
  }
  MetadataCache cache(rt);
  SocketFabric fabric(cluster, node, &tr);
  QueryPlan plan = QueryPlan::from_json_text(plan_json, data_root, node,
                                             static_cast<int>(cluster.nodes.size()));
  PipelineResult result =
      execute_plan(plan, mode, env, fabric, node, devices, cache, queue_trace);
  result.peak_bytes = pool.peak_bytes();
  return result;
}

}  // namespace pystachio
