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

#include <memory>
#include <string>
#include <vector>

#include "pystachio/pipeline.hpp"
#include "pystachio/socket_fabric.hpp"

namespace pystachio {

struct SimPipelineOptions {
  std::string plan_json;  // plan text; {data} and {node} resolved per node
  std::string data_root;
  int nodes = 2;
  ExecMode mode = ExecMode::Overlapped;
  SimCostConfig cost;
  NetConfig net;
  double device_bandwidth_bytes_per_s = 512.0 * 1024 * 1024;
  std::int64_t device_latency_ns = 100'000;
  std::uint64_t memory_budget = 0;  // per-node pool cap; 0 = unlimited
  StallFaultConfig stall;
};

struct SimPipelineOutcome {
  std::vector<PipelineResult> per_node;
  std::shared_ptr<Trace> trace = std::make_shared<Trace>();
  std::shared_ptr<QueueTrace> queue_trace = std::make_shared<QueueTrace>();
  std::int64_t runtime_ns = 0;
};

/// Runs every node of a plan inside the deterministic simulation. Each node
/// owns its device models over the workload's device directories.
SimPipelineOutcome run_sim_pipeline(const SimPipelineOptions& opts);

/// Runs one node of a plan over real sockets and real file I/O.
PipelineResult run_socket_pipeline(const std::string& plan_json, const std::string& data_root,
                                   const ClusterConfig& cluster, int node, ExecMode mode,
                                   Trace* trace = nullptr, QueueTrace* queue_trace = nullptr);

}  // namespace pystachio
