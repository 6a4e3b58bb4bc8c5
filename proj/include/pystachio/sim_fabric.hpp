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

#include <map>
#include <memory>

#include "pystachio/exec.hpp"
#include "pystachio/net.hpp"
#include "pystachio/runtime.hpp"

namespace pystachio {

/// Deterministic in-process collective fabric. Each collective is a
/// rendezvous in virtual time: the last node to arrive computes all link
/// schedules, deposits outputs, and wakes the others with their modeled
/// completion times.
class SimFabric : public Fabric {
 public:
  SimFabric(Runtime& rt, int nodes, NetConfig config, Trace& trace,
            std::vector<NodeExecState*> node_states);

  int node_count() const override { return nodes_; }
  std::vector<std::uint64_t> all_to_all_sizes(int node,
                                              const std::vector<std::uint64_t>& sizes) override;
  A2AResult all_to_all(int node, std::vector<A2AColumns> per_dest, std::uint32_t columns) override;

  const std::vector<CollectiveLedger>& ledgers() const { return ledgers_; }

 private:
  struct Slot {
    CollectiveDescriptor descriptor;
    int arrived = 0;
    bool done = false;
    std::vector<std::int64_t> arrival_ns;
    std::vector<std::int64_t> completion_ns;
    // sizes collective
    std::vector<std::vector<std::uint64_t>> declared;
    std::vector<std::vector<std::uint64_t>> received_sizes;
    // payload collective
    std::vector<std::vector<A2AColumns>> payload;      // [src][dest]
    std::vector<std::vector<A2AColumns>> delivered;    // [dst][src]
    std::vector<std::uint64_t> bytes_received;
  };

  Slot& arrive(int node, CollectiveDescriptor desc);
  void finish_sizes(Slot& slot);
  void finish_payload(Slot& slot, std::uint32_t columns);
  std::int64_t schedule_pair(Slot& slot, int src, int dst, std::uint64_t bytes);

  Runtime& rt_;
  int nodes_;
  NetConfig config_;
  Trace& trace_;
  std::vector<NodeExecState*> node_states_;
  std::shared_ptr<Monitor> mon_;
  std::map<std::uint64_t, Slot> slots_;
  std::vector<CollectiveLedger> ledgers_;
  std::vector<std::vector<LinkState>> links_;  // [src][dst]
};

}  // namespace pystachio
