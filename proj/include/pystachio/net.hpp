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
#include <deque>
#include <string>
#include <vector>

#include "pystachio/errors.hpp"
#include "pystachio/trace.hpp"
#include "pystachio/types.hpp"

namespace pystachio {

struct NetConfig {
  std::uint64_t message_size_bytes = 512 * 1024;
  std::uint32_t channels = 32;
  double link_bandwidth_bytes_per_s = 1.0 * 1024 * 1024 * 1024;  // per directed link, simulated
  std::int64_t per_message_latency_ns = 20'000;
  double contention_factor = 0.85;  // collective slowdown while compute overlaps

  void validate() const {
    if (message_size_bytes < 4 * 1024) throw InvalidInput("message size must be >= 4 KiB");
    if (channels < 1) throw InvalidInput("channels must be >= 1");
  }

  /// Untuned preset: small messages, one channel. Sustains well under half
  /// of the link in the model, like a collective layer left at defaults.
  static NetConfig untuned() {
    NetConfig c;
    c.message_size_bytes = 16 * 1024;
    c.channels = 1;
    return c;
  }
};

/// Per-directed-link pacing state: transfers serialize on the link's
/// bandwidth and at most `channels` messages are in flight at once.
struct LinkState {
  std::int64_t busy_until_ns = 0;
  std::deque<std::int64_t> inflight_deliveries;

  struct Message {
    std::int64_t start_ns;
    std::int64_t delivery_ns;
    std::uint64_t bytes;
  };

  /// Schedules `bytes` starting no earlier than `earliest`; returns the
  /// per-message windows. Deterministic pure arithmetic.
  std::vector<Message> schedule(std::uint64_t bytes, std::int64_t earliest, const NetConfig& cfg,
                                double bandwidth_scale);
};

/// One node's ordered log of issued collectives. All nodes' logs must be
/// identical prefixes of one another; divergence is a protocol error.
struct CollectiveDescriptor {
  std::uint64_t seq = 0;
  std::string kind;          // "sizes" | "payload"
  std::uint32_t columns = 0;

  std::uint64_t digest() const;
  bool operator==(const CollectiveDescriptor&) const = default;
};

class CollectiveLedger {
 public:
  std::uint64_t append(const std::string& kind, std::uint32_t columns) {
    CollectiveDescriptor d{next_seq_++, kind, columns};
    log_.push_back(d);
    return d.seq;
  }
  const std::vector<CollectiveDescriptor>& log() const { return log_; }
  std::uint64_t next_seq() const { return next_seq_; }

 private:
  std::vector<CollectiveDescriptor> log_;
  std::uint64_t next_seq_ = 0;
};

/// Column payload for one destination: raw words per column.
using A2AColumns = std::vector<std::vector<std::uint64_t>>;

struct A2AResult {
  std::vector<A2AColumns> per_source;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  std::uint64_t bytes_received = 0;
};

/// Collective transport: deterministic in-process simulation or real
/// byte-stream sockets between node processes. Collectives must be issued
/// in identical order on every node (ledger-checked).
class Fabric {
 public:
  virtual ~Fabric() = default;
  virtual int node_count() const = 0;

  /// Size exchange: node i receives exactly the value node j declared for
  /// destination i.
  virtual std::vector<std::uint64_t> all_to_all_sizes(int node,
                                                      const std::vector<std::uint64_t>& sizes) = 0;

  /// Payload exchange; received partitions are byte-identical to sent ones.
  virtual A2AResult all_to_all(int node, std::vector<A2AColumns> per_dest,
                               std::uint32_t columns) = 0;
};

/// Bytes received by `node` divided by its end-to-end runtime in the trace.
double effective_bus_bandwidth(const std::vector<TraceEvent>& trace, int node);

}  // namespace pystachio
