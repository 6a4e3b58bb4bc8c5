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
#include <limits>
#include <optional>
#include <vector>

#include "pystachio/join.hpp"
#include "pystachio/socket_fabric.hpp"
#include "pystachio/trace.hpp"
#include "pystachio/workload.hpp"

namespace pystachio {

using RawRow = std::vector<std::uint64_t>;

struct SimJoinOptions {
  JoinSpec spec;
  SyntheticJoinSpec workload;
  SimCostConfig cost;
  std::optional<NetConfig> net;  // defaults to the variant's preset
  std::uint64_t memory_budget = std::numeric_limits<std::uint64_t>::max();
  bool collect_rows = true;
};

struct SimJoinOutcome {
  std::vector<RawRow> rows;  // concatenated across nodes when collected
  std::vector<JoinStats> per_node;
  std::vector<std::uint64_t> peak_bytes;
  std::int64_t runtime_ns = 0;  // max end - min start over nodes
  std::shared_ptr<Trace> trace = std::make_shared<Trace>();
};

/// Runs all nodes of one distributed join inside the deterministic
/// simulation. Throws the first node failure (e.g. MemoryExceeded).
SimJoinOutcome run_sim_join(const SimJoinOptions& opts);

/// Runs one node of a distributed join over real sockets. Inputs are the
/// node's deterministic slice of the same synthetic workload.
struct SocketJoinOutcome {
  std::vector<RawRow> rows;
  JoinStats stats;
};
SocketJoinOutcome run_socket_join(const JoinSpec& spec, const SyntheticJoinSpec& workload,
                                  const ClusterConfig& cluster, int node, Trace* trace = nullptr);

}  // namespace pystachio
