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

#include "pystachio/net.hpp"

#include <algorithm>
#include <limits>

#include "pystachio/hashing.hpp"

namespace pystachio {

std::vector<LinkState::Message> LinkState::schedule(std::uint64_t bytes, std::int64_t earliest,
                                                    const NetConfig& cfg, double bandwidth_scale) {
  std::vector<Message> out;
  if (bytes == 0) return out;
  const double bw = cfg.link_bandwidth_bytes_per_s * bandwidth_scale;
  std::uint64_t remaining = bytes;
  while (remaining > 0) {
    const std::uint64_t size = std::min<std::uint64_t>(remaining, cfg.message_size_bytes);
    remaining -= size;
    std::int64_t t0 = std::max(earliest, busy_until_ns);
    // Channel window: at most `channels` messages in flight per link.
    while (inflight_deliveries.size() >= cfg.channels) {
      t0 = std::max(t0, inflight_deliveries.front());
      inflight_deliveries.pop_front();
    }
    const auto xfer =
        static_cast<std::int64_t>(static_cast<double>(size) / bw * 1e9 + 0.5);
    const std::int64_t delivery = t0 + xfer + cfg.per_message_latency_ns;
    busy_until_ns = t0 + xfer;
    inflight_deliveries.push_back(delivery);
    out.push_back(Message{t0, delivery, size});
  }
  return out;
}

std::uint64_t CollectiveDescriptor::digest() const {
  std::uint64_t h = fnv1a64(kind.data(), kind.size());
  h ^= multiply_shift(seq + 1);
  h ^= multiply_shift((static_cast<std::uint64_t>(columns) << 32) | 0x9e37u);
  return h;
}

double effective_bus_bandwidth(const std::vector<TraceEvent>& trace, int node) {
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  std::uint64_t received = 0;
  bool any = false;
  for (const auto& ev : trace) {
    if (ev.node != node) continue;
    any = true;
    lo = std::min(lo, ev.start_ns);
    hi = std::max(hi, ev.end_ns);
    if (ev.resource.rfind("net:", 0) == 0) received += ev.bytes;
  }
  if (!any) throw EmptyTrace();
  if (received == 0) return 0.0;
  const double seconds = static_cast<double>(hi - lo) / 1e9;
  return seconds > 0 ? static_cast<double>(received) / seconds : 0.0;
}

}  // namespace pystachio
