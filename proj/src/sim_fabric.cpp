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

#include "pystachio/sim_fabric.hpp"

#include <algorithm>

namespace pystachio {

SimFabric::SimFabric(Runtime& rt, int nodes, NetConfig config, Trace& trace,
                     std::vector<NodeExecState*> node_states)
    : rt_(rt),
      nodes_(nodes),
      config_(std::move(config)),
      trace_(trace),
      node_states_(std::move(node_states)),
      mon_(rt.make_monitor()),
      ledgers_(static_cast<std::size_t>(nodes)),
      links_(static_cast<std::size_t>(nodes), std::vector<LinkState>(static_cast<std::size_t>(nodes))) {
  config_.validate();
}

SimFabric::Slot& SimFabric::arrive(int node, CollectiveDescriptor desc) {
  // Caller holds mon_. Ledger append fixes this node's issue order; the slot
  // checks that every node's k-th collective describes the same operation.
  auto& slot = slots_[desc.seq];
  if (slot.arrived == 0 && slot.arrival_ns.empty()) {
    slot.descriptor = desc;
    slot.arrival_ns.assign(static_cast<std::size_t>(nodes_), 0);
    slot.completion_ns.assign(static_cast<std::size_t>(nodes_), 0);
    slot.declared.resize(static_cast<std::size_t>(nodes_));
    slot.received_sizes.resize(static_cast<std::size_t>(nodes_));
    slot.payload.resize(static_cast<std::size_t>(nodes_));
    slot.delivered.resize(static_cast<std::size_t>(nodes_));
    slot.bytes_received.assign(static_cast<std::size_t>(nodes_), 0);
  } else if (!(slot.descriptor == desc)) {
    throw CollectiveOrderViolation(
        "node " + std::to_string(node) + " issued " + desc.kind + "#" + std::to_string(desc.seq) +
        " but the collective at that position is " + slot.descriptor.kind + "#" +
        std::to_string(slot.descriptor.seq));
  }
  slot.arrival_ns[static_cast<std::size_t>(node)] = rt_.now_ns();
  ++slot.arrived;
  return slot;
}

std::int64_t SimFabric::schedule_pair(Slot& slot, int src, int dst, std::uint64_t bytes) {
  const std::int64_t pair_start =
      std::max(slot.arrival_ns[static_cast<std::size_t>(src)],
               slot.arrival_ns[static_cast<std::size_t>(dst)]);
  if (bytes == 0) return pair_start;
  // Collectives slow down while they share the node with compute work.
  double scale = 1.0;
  if (node_states_[static_cast<std::size_t>(src)]->compute_busy(pair_start) ||
      node_states_[static_cast<std::size_t>(dst)]->compute_busy(pair_start))
    scale = config_.contention_factor;
  auto messages =
      links_[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)].schedule(
          bytes, pair_start, config_, scale);
  std::int64_t last = pair_start;
  for (const auto& m : messages) {
    trace_.record(TraceEvent{dst, -1, "xfer", m.start_ns, m.delivery_ns, m.bytes,
                             "net:" + std::to_string(src) + "->" + std::to_string(dst)});
    last = std::max(last, m.delivery_ns);
  }
  return last;
}

void SimFabric::finish_sizes(Slot& slot) {
  for (int dst = 0; dst < nodes_; ++dst)
    slot.received_sizes[static_cast<std::size_t>(dst)].assign(static_cast<std::size_t>(nodes_), 0);
  std::vector<std::int64_t> last_in(static_cast<std::size_t>(nodes_), 0);
  std::vector<std::int64_t> last_out(static_cast<std::size_t>(nodes_), 0);
  for (int src = 0; src < nodes_; ++src) {
    for (int dst = 0; dst < nodes_; ++dst) {
      slot.received_sizes[static_cast<std::size_t>(dst)][static_cast<std::size_t>(src)] =
          slot.declared[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)];
      if (src == dst) continue;
      const std::int64_t done = schedule_pair(slot, src, dst, sizeof(std::uint64_t));
      last_out[static_cast<std::size_t>(src)] = std::max(last_out[static_cast<std::size_t>(src)], done);
      last_in[static_cast<std::size_t>(dst)] = std::max(last_in[static_cast<std::size_t>(dst)], done);
      slot.bytes_received[static_cast<std::size_t>(dst)] += sizeof(std::uint64_t);
    }
  }
  for (int n = 0; n < nodes_; ++n)
    slot.completion_ns[static_cast<std::size_t>(n)] =
        std::max({slot.arrival_ns[static_cast<std::size_t>(n)], last_in[static_cast<std::size_t>(n)],
                  last_out[static_cast<std::size_t>(n)]});
}

void SimFabric::finish_payload(Slot& slot, std::uint32_t) {
  std::vector<std::int64_t> last_in(static_cast<std::size_t>(nodes_), 0);
  std::vector<std::int64_t> last_out(static_cast<std::size_t>(nodes_), 0);
  for (int dst = 0; dst < nodes_; ++dst)
    slot.delivered[static_cast<std::size_t>(dst)].resize(static_cast<std::size_t>(nodes_));
  for (int src = 0; src < nodes_; ++src) {
    for (int dst = 0; dst < nodes_; ++dst) {
      auto& cols = slot.payload[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)];
      std::uint64_t bytes = 0;
      for (const auto& c : cols) bytes += c.size() * kValueBytes;
      if (src != dst) {
        const std::int64_t done = schedule_pair(slot, src, dst, bytes);
        last_out[static_cast<std::size_t>(src)] =
            std::max(last_out[static_cast<std::size_t>(src)], done);
        last_in[static_cast<std::size_t>(dst)] = std::max(last_in[static_cast<std::size_t>(dst)], done);
        slot.bytes_received[static_cast<std::size_t>(dst)] += bytes;
      }
      slot.delivered[static_cast<std::size_t>(dst)][static_cast<std::size_t>(src)] =
          std::move(cols);
    }
  }
  for (int n = 0; n < nodes_; ++n)
    slot.completion_ns[static_cast<std::size_t>(n)] =
        std::max({slot.arrival_ns[static_cast<std::size_t>(n)], last_in[static_cast<std::size_t>(n)],
                  last_out[static_cast<std::size_t>(n)]});
}

std::vector<std::uint64_t> SimFabric::all_to_all_sizes(int node,
                                                       const std::vector<std::uint64_t>& sizes) {
  if (static_cast<int>(sizes.size()) != nodes_)
    throw InvalidInput("sizes vector length must equal node count");
  std::int64_t completion;
  std::vector<std::uint64_t> result;
  {
    MonitorLock lock(*mon_);
    CollectiveDescriptor desc{ledgers_[static_cast<std::size_t>(node)].next_seq(), "sizes", 1};
    ledgers_[static_cast<std::size_t>(node)].append(desc.kind, desc.columns);
    Slot& slot = arrive(node, desc);
    slot.declared[static_cast<std::size_t>(node)] = sizes;
    if (slot.arrived == nodes_) {
      finish_sizes(slot);
      slot.done = true;
      mon_->notify_all();
    } else {
      while (!slot.done) mon_->wait();
    }
    completion = slot.completion_ns[static_cast<std::size_t>(node)];
    result = slot.received_sizes[static_cast<std::size_t>(node)];
  }
  if (rt_.simulated()) rt_.sleep_until_ns(completion);
  return result;
}

A2AResult SimFabric::all_to_all(int node, std::vector<A2AColumns> per_dest,
                                std::uint32_t columns) {
  if (static_cast<int>(per_dest.size()) != nodes_)
    throw InvalidInput("payload vector length must equal node count");
  A2AResult res;
  std::int64_t start = rt_.now_ns();
  {
    MonitorLock lock(*mon_);
    CollectiveDescriptor desc{ledgers_[static_cast<std::size_t>(node)].next_seq(), "payload",
                              columns};
    ledgers_[static_cast<std::size_t>(node)].append(desc.kind, desc.columns);
    Slot& slot = arrive(node, desc);
    slot.payload[static_cast<std::size_t>(node)] = std::move(per_dest);
    if (slot.arrived == nodes_) {
      finish_payload(slot, columns);
      slot.done = true;
      mon_->notify_all();
    } else {
      while (!slot.done) mon_->wait();
    }
    res.per_source = std::move(slot.delivered[static_cast<std::size_t>(node)]);
    res.bytes_received = slot.bytes_received[static_cast<std::size_t>(node)];
    res.start_ns = start;
    res.end_ns = slot.completion_ns[static_cast<std::size_t>(node)];
  }
  if (rt_.simulated()) rt_.sleep_until_ns(res.end_ns);
  return res;
}

}  // namespace pystachio
