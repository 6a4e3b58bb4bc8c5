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

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pystachio/net.hpp"

namespace pystachio {

struct ClusterNodeConfig {
  int id = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

struct ClusterConfig {
  std::vector<ClusterNodeConfig> nodes;
  NetConfig net;

  static ClusterConfig from_json_file(const std::string& path);
  static ClusterConfig loopback(int nodes, std::uint16_t base_port);
  void to_json_file(const std::string& path) const;
};

/// Real byte-stream transport: one socket per peer pair with length-prefixed
/// envelopes, wire format
///   [u32 magic][u64 seq][u32 src][u32 dst][u32 column_index][u64 byte_len]
///   [payload][u64 checksum].
/// `channels` bounds the in-flight envelope window per socket. Collectives
/// must be issued from one networking control thread per node.
class SocketFabric : public Fabric {
 public:
  static constexpr std::uint32_t kWireMagic = 0x50594f31;

  SocketFabric(const ClusterConfig& config, int my_node, Trace* trace = nullptr);
  ~SocketFabric() override;
  SocketFabric(const SocketFabric&) = delete;
  SocketFabric& operator=(const SocketFabric&) = delete;

  int node_count() const override { return static_cast<int>(config_.nodes.size()); }
  std::vector<std::uint64_t> all_to_all_sizes(int node,
                                              const std::vector<std::uint64_t>& sizes) override;
  A2AResult all_to_all(int node, std::vector<A2AColumns> per_dest, std::uint32_t columns) override;

  const CollectiveLedger& ledger() const { return ledger_; }

 private:
  struct Envelope {
    std::uint64_t seq = 0;
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t column_index = 0;
    std::vector<std::uint8_t> payload;
  };

  struct PeerInbox {
    bool have_sizes = false;
    std::uint64_t sizes_value = 0;
    std::uint64_t sizes_digest = 0;
    bool have_header = false;
    std::uint64_t header_digest = 0;
    std::vector<std::uint64_t> expected_bytes;
    std::vector<std::vector<std::uint8_t>> columns;
    bool complete(std::uint32_t ncols) const;
  };

  struct Peer {
    int id = -1;
    int fd = -1;
    std::thread reader;
    std::thread sender;
    std::mutex send_mu;
    std::condition_variable send_cv;
    std::deque<std::vector<std::uint8_t>> send_queue;  // encoded envelopes
    bool send_closed = false;
    bool disconnected = false;
  };

  void connect_mesh();
  void reader_loop(Peer& peer);
  void sender_loop(Peer& peer);
  void enqueue_envelope(Peer& peer, const Envelope& env);
  void handle_envelope(Peer& peer, Envelope env);
  PeerInbox& inbox_for(std::uint64_t seq, int src);

  ClusterConfig config_;
  int me_;
  Trace* trace_;
  std::int64_t epoch_ns_;
  int listen_fd_ = -1;
  std::vector<std::unique_ptr<Peer>> peers_;  // indexed by node id; peers_[me_] unused
  CollectiveLedger ledger_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, std::map<int, PeerInbox>> inboxes_;
  std::uint64_t consumed_watermark_ = 0;
  std::string fatal_;
};

}  // namespace pystachio
