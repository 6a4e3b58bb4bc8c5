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

#include "pystachio/socket_fabric.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pystachio/hashing.hpp"

namespace pystachio {

namespace {

constexpr std::uint32_t kSizesColumn = 0xFFFFFFFF;
constexpr std::uint32_t kHeaderColumn = 0xFFFFFFFE;

std::int64_t wall_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void write_all(int fd, const void* data, std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::size_t done = 0;
  while (done < len) {
    const ssize_t n = ::send(fd, p + done, len - done, MSG_NOSIGNAL);
    if (n <= 0) throw PeerDisconnected("send failed");
    done += static_cast<std::size_t>(n);
  }
}

bool read_all(int fd, void* data, std::size_t len) {
  auto* p = static_cast<std::uint8_t*>(data);
  std::size_t done = 0;
  while (done < len) {
    const ssize_t n = ::recv(fd, p + done, len - done, 0);
    if (n <= 0) return false;
    done += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

ClusterConfig ClusterConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open cluster config: " + path);
  nlohmann::json j;
  in >> j;
  ClusterConfig cfg;
  for (const auto& n : j.at("nodes")) {
    ClusterNodeConfig node;
    node.id = n.at("id").get<int>();
    node.host = n.value("host", std::string("127.0.0.1"));
    node.port = n.at("port").get<std::uint16_t>();
    cfg.nodes.push_back(node);
  }
  if (j.contains("net")) {
    const auto& n = j["net"];
    cfg.net.message_size_bytes = n.value("message_size_bytes", cfg.net.message_size_bytes);
    cfg.net.channels = n.value("channels", cfg.net.channels);
    cfg.net.link_bandwidth_bytes_per_s =
        n.value("link_bandwidth_bytes_per_s", cfg.net.link_bandwidth_bytes_per_s);
    cfg.net.per_message_latency_ns = n.value("per_message_latency_ns", cfg.net.per_message_latency_ns);
    cfg.net.contention_factor = n.value("contention_factor", cfg.net.contention_factor);
  }
  cfg.net.validate();
  return cfg;
}

void ClusterConfig::to_json_file(const std::string& path) const {
  nlohmann::json j;
  for (const auto& n : nodes) j["nodes"].push_back({{"id", n.id}, {"host", n.host}, {"port", n.port}});
  j["net"] = {{"message_size_bytes", net.message_size_bytes},
              {"channels", net.channels},
              {"link_bandwidth_bytes_per_s", net.link_bandwidth_bytes_per_s},
              {"per_message_latency_ns", net.per_message_latency_ns},
              {"contention_factor", net.contention_factor}};
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write cluster config: " + path);
  out << j.dump(2) << '\n';
}

ClusterConfig ClusterConfig::loopback(int nodes, std::uint16_t base_port) {
  ClusterConfig cfg;
  for (int i = 0; i < nodes; ++i)
    cfg.nodes.push_back(ClusterNodeConfig{i, "127.0.0.1", static_cast<std::uint16_t>(base_port + i)});
  return cfg;
}

bool SocketFabric::PeerInbox::complete(std::uint32_t ncols) const {
  if (!have_header || columns.size() != ncols || expected_bytes.size() != ncols) return false;
  for (std::uint32_t c = 0; c < ncols; ++c)
    if (columns[c].size() != expected_bytes[c]) return false;
  return true;
}

SocketFabric::SocketFabric(const ClusterConfig& config, int my_node, Trace* trace)
    : config_(config), me_(my_node), trace_(trace), epoch_ns_(wall_ns()) {
  config_.net.validate();
  peers_.resize(config_.nodes.size());
  for (std::size_t i = 0; i < config_.nodes.size(); ++i) peers_[i] = std::make_unique<Peer>();
  connect_mesh();
}

void SocketFabric::connect_mesh() {
  const int n = node_count();
  // Everyone listens; for each pair the higher id dials the lower.
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw IoFailure("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(config_.nodes[static_cast<std::size_t>(me_)].port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw IoFailure("bind failed on port " +
                    std::to_string(config_.nodes[static_cast<std::size_t>(me_)].port));
  if (::listen(listen_fd_, n) != 0) throw IoFailure("listen failed");

  const int expected_accepts = n - 1 - me_;
  int accepted = 0;
  // Dial lower ids.
  for (int j = 0; j < me_; ++j) {
    const auto& peer_cfg = config_.nodes[static_cast<std::size_t>(j)];
    int fd = -1;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
    while (true) {
      fd = ::socket(AF_INET, SOCK_STREAM, 0);
      sockaddr_in peer_addr{};
      peer_addr.sin_family = AF_INET;
      peer_addr.sin_port = htons(peer_cfg.port);
      ::inet_pton(AF_INET, peer_cfg.host.c_str(), &peer_addr.sin_addr);
      if (::connect(fd, reinterpret_cast<sockaddr*>(&peer_addr), sizeof(peer_addr)) == 0) break;
      ::close(fd);
      fd = -1;
      if (std::chrono::steady_clock::now() > deadline)
        throw PeerDisconnected("cannot reach node " + std::to_string(j));
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    const std::uint32_t magic = kWireMagic;
    const std::uint32_t my_id = static_cast<std::uint32_t>(me_);
    write_all(fd, &magic, 4);
    write_all(fd, &my_id, 4);
    peers_[static_cast<std::size_t>(j)]->id = j;
    peers_[static_cast<std::size_t>(j)]->fd = fd;
  }
  // Accept higher ids.
  while (accepted < expected_accepts) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) throw IoFailure("accept failed");
    std::uint32_t magic = 0, peer_id = 0;
    if (!read_all(fd, &magic, 4) || !read_all(fd, &peer_id, 4) || magic != kWireMagic ||
        peer_id >= peers_.size()) {
      ::close(fd);
      throw PeerDisconnected("bad handshake");
    }
    peers_[peer_id]->id = static_cast<int>(peer_id);
    peers_[peer_id]->fd = fd;
    ++accepted;
  }
  for (int j = 0; j < n; ++j) {
    if (j == me_) continue;
    Peer& p = *peers_[static_cast<std::size_t>(j)];
    int one2 = 1;
    ::setsockopt(p.fd, IPPROTO_TCP, TCP_NODELAY, &one2, sizeof(one2));
    p.reader = std::thread([this, &p] { reader_loop(p); });
    p.sender = std::thread([this, &p] { sender_loop(p); });
  }
}

SocketFabric::~SocketFabric() {
  for (auto& p : peers_) {
    if (!p || p->fd < 0) continue;
    {
      std::lock_guard lock(p->send_mu);
      p->send_closed = true;
      p->send_cv.notify_all();
    }
  }
  for (auto& p : peers_) {
    if (!p || p->fd < 0) continue;
    if (p->sender.joinable()) p->sender.join();
    ::shutdown(p->fd, SHUT_RDWR);
    if (p->reader.joinable()) p->reader.join();
    ::close(p->fd);
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void SocketFabric::enqueue_envelope(Peer& peer, const Envelope& env) {
  // Encode: header + payload + checksum.
  std::vector<std::uint8_t> buf(32 + env.payload.size() + 8);
  std::uint8_t* p = buf.data();
  const std::uint32_t magic = kWireMagic;
  std::memcpy(p, &magic, 4);
  std::memcpy(p + 4, &env.seq, 8);
  std::memcpy(p + 12, &env.src, 4);
  std::memcpy(p + 16, &env.dst, 4);
  std::memcpy(p + 20, &env.column_index, 4);
  const std::uint64_t len = env.payload.size();
  std::memcpy(p + 24, &len, 8);
  if (!env.payload.empty()) std::memcpy(p + 32, env.payload.data(), env.payload.size());
  const std::uint64_t checksum = fnv1a64(env.payload.data(), env.payload.size());
  std::memcpy(p + 32 + env.payload.size(), &checksum, 8);

  std::unique_lock lock(peer.send_mu);
  // The in-flight envelope window per socket.
  peer.send_cv.wait(lock, [&] {
    return peer.send_queue.size() < config_.net.channels || peer.send_closed;
  });
  if (peer.send_closed) throw PeerDisconnected("fabric shut down");
  peer.send_queue.push_back(std::move(buf));
  peer.send_cv.notify_all();
}

void SocketFabric::sender_loop(Peer& peer) {
  while (true) {
    std::vector<std::uint8_t> buf;
    {
      std::unique_lock lock(peer.send_mu);
      peer.send_cv.wait(lock, [&] { return !peer.send_queue.empty() || peer.send_closed; });
      if (peer.send_queue.empty()) return;
      buf = std::move(peer.send_queue.front());
      peer.send_queue.pop_front();
      peer.send_cv.notify_all();
    }
    try {
      write_all(peer.fd, buf.data(), buf.size());
    } catch (const PeerDisconnected&) {
      std::lock_guard lock(mu_);
      peer.disconnected = true;
      cv_.notify_all();
      return;
    }
  }
}

void SocketFabric::reader_loop(Peer& peer) {
  while (true) {
    std::uint8_t header[32];
    if (!read_all(peer.fd, header, 32)) break;
    std::uint32_t magic;
    std::memcpy(&magic, header, 4);
    Envelope env;
    std::memcpy(&env.seq, header + 4, 8);
    std::memcpy(&env.src, header + 12, 4);
    std::memcpy(&env.dst, header + 16, 4);
    std::memcpy(&env.column_index, header + 20, 4);
    std::uint64_t len;
    std::memcpy(&len, header + 24, 8);
    if (magic != kWireMagic || len > (std::uint64_t{1} << 34)) {
      std::lock_guard lock(mu_);
      fatal_ = "malformed envelope from node " + std::to_string(peer.id);
      cv_.notify_all();
      break;
    }
    env.payload.resize(len);
    if (!read_all(peer.fd, env.payload.data(), len)) break;
    std::uint64_t checksum;
    if (!read_all(peer.fd, &checksum, 8)) break;
    if (checksum != fnv1a64(env.payload.data(), env.payload.size())) {
      std::lock_guard lock(mu_);
      fatal_ = "checksum mismatch from node " + std::to_string(peer.id);
      cv_.notify_all();
      break;
    }
    handle_envelope(peer, std::move(env));
  }
  std::lock_guard lock(mu_);
  peer.disconnected = true;
  cv_.notify_all();
}

SocketFabric::PeerInbox& SocketFabric::inbox_for(std::uint64_t seq, int src) {
  return inboxes_[seq][src];
}

void SocketFabric::handle_envelope(Peer& peer, Envelope env) {
  std::lock_guard lock(mu_);
  if (env.seq < consumed_watermark_) {
    fatal_ = "collective regression: node " + std::to_string(peer.id) + " sent seq " +
             std::to_string(env.seq) + " below watermark " + std::to_string(consumed_watermark_);
    cv_.notify_all();
    return;
  }
  PeerInbox& box = inbox_for(env.seq, peer.id);
  if (env.column_index == kSizesColumn) {
    if (env.payload.size() != 16) {
      fatal_ = "bad sizes payload";
    } else {
      std::memcpy(&box.sizes_value, env.payload.data(), 8);
      std::memcpy(&box.sizes_digest, env.payload.data() + 8, 8);
      box.have_sizes = true;
    }
  } else if (env.column_index == kHeaderColumn) {
    if (env.payload.size() < 16) {
      fatal_ = "bad payload header";
    } else {
      std::memcpy(&box.header_digest, env.payload.data(), 8);
      std::uint64_t ncols;
      std::memcpy(&ncols, env.payload.data() + 8, 8);
      if (env.payload.size() != 16 + ncols * 8) {
        fatal_ = "bad payload header length";
      } else {
        box.expected_bytes.resize(ncols);
        std::memcpy(box.expected_bytes.data(), env.payload.data() + 16, ncols * 8);
        box.columns.resize(ncols);
        box.have_header = true;
      }
    }
  } else {
    if (!box.have_header || env.column_index >= box.columns.size()) {
      fatal_ = "column segment before header";
    } else {
      auto& col = box.columns[env.column_index];
      col.insert(col.end(), env.payload.begin(), env.payload.end());
      if (col.size() > box.expected_bytes[env.column_index]) fatal_ = "column overflow";
    }
  }
  cv_.notify_all();
}

std::vector<std::uint64_t> SocketFabric::all_to_all_sizes(int node,
                                                          const std::vector<std::uint64_t>& sizes) {
  if (node != me_) throw InvalidInput("fabric bound to node " + std::to_string(me_));
  if (static_cast<int>(sizes.size()) != node_count())
    throw InvalidInput("sizes vector length must equal node count");
  const std::int64_t start = wall_ns() - epoch_ns_;
  CollectiveDescriptor desc{ledger_.next_seq(), "sizes", 1};
  ledger_.append(desc.kind, desc.columns);
  const std::uint64_t digest = desc.digest();

  for (int j = 0; j < node_count(); ++j) {
    if (j == me_) continue;
    Envelope env;
    env.seq = desc.seq;
    env.src = static_cast<std::uint32_t>(me_);
    env.dst = static_cast<std::uint32_t>(j);
    env.column_index = kSizesColumn;
    env.payload.resize(16);
    std::memcpy(env.payload.data(), &sizes[static_cast<std::size_t>(j)], 8);
    std::memcpy(env.payload.data() + 8, &digest, 8);
    enqueue_envelope(*peers_[static_cast<std::size_t>(j)], env);
  }

  std::vector<std::uint64_t> result(static_cast<std::size_t>(node_count()), 0);
  result[static_cast<std::size_t>(me_)] = sizes[static_cast<std::size_t>(me_)];
  {
    std::unique_lock lock(mu_);
    for (int j = 0; j < node_count(); ++j) {
      if (j == me_) continue;
      cv_.wait(lock, [&] {
        const PeerInbox& box = inbox_for(desc.seq, j);
        return box.have_sizes || box.have_header ||
               peers_[static_cast<std::size_t>(j)]->disconnected || !fatal_.empty();
      });
      if (!fatal_.empty()) {
        if (fatal_.find("checksum") != std::string::npos) throw ChecksumMismatch(fatal_);
        throw CollectiveOrderViolation(fatal_);
      }
      PeerInbox& box = inbox_for(desc.seq, j);
      // A header at this position means the peer issued a payload collective
      // where this node issued a size exchange.
      if (box.have_header || (box.have_sizes && box.sizes_digest != digest))
        throw CollectiveOrderViolation("node " + std::to_string(j) +
                                       " issued a different collective at seq " +
                                       std::to_string(desc.seq));
      if (!box.have_sizes) throw PeerDisconnected("node " + std::to_string(j) + " left");
      result[static_cast<std::size_t>(j)] = box.sizes_value;
      box.have_sizes = false;
    }
    inboxes_.erase(desc.seq);
    consumed_watermark_ = desc.seq + 1;
  }
  if (trace_ != nullptr)
    trace_->record(TraceEvent{me_, -1, "size_exchange", start, wall_ns() - epoch_ns_,
                              8 * static_cast<std::uint64_t>(node_count() - 1), "net"});
  return result;
}

A2AResult SocketFabric::all_to_all(int node, std::vector<A2AColumns> per_dest,
                                   std::uint32_t columns) {
  if (node != me_) throw InvalidInput("fabric bound to node " + std::to_string(me_));
  if (static_cast<int>(per_dest.size()) != node_count())
    throw InvalidInput("payload vector length must equal node count");
  const std::int64_t start = wall_ns() - epoch_ns_;
  CollectiveDescriptor desc{ledger_.next_seq(), "payload", columns};
  ledger_.append(desc.kind, desc.columns);
  const std::uint64_t digest = desc.digest();

  for (int j = 0; j < node_count(); ++j) {
    if (j == me_) continue;
    const auto& cols = per_dest[static_cast<std::size_t>(j)];
    Peer& peer = *peers_[static_cast<std::size_t>(j)];
    Envelope header;
    header.seq = desc.seq;
    header.src = static_cast<std::uint32_t>(me_);
    header.dst = static_cast<std::uint32_t>(j);
    header.column_index = kHeaderColumn;
    header.payload.resize(16 + cols.size() * 8);
    std::memcpy(header.payload.data(), &digest, 8);
    const std::uint64_t ncols = cols.size();
    std::memcpy(header.payload.data() + 8, &ncols, 8);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::uint64_t bytes = cols[c].size() * kValueBytes;
      std::memcpy(header.payload.data() + 16 + c * 8, &bytes, 8);
    }
    enqueue_envelope(peer, header);

    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto* bytes = reinterpret_cast<const std::uint8_t*>(cols[c].data());
      std::uint64_t total = cols[c].size() * kValueBytes;
      std::uint64_t off = 0;
      while (off < total) {
        Envelope seg;
        seg.seq = desc.seq;
        seg.src = static_cast<std::uint32_t>(me_);
        seg.dst = static_cast<std::uint32_t>(j);
        seg.column_index = static_cast<std::uint32_t>(c);
        const std::uint64_t n = std::min<std::uint64_t>(config_.net.message_size_bytes, total - off);
        seg.payload.assign(bytes + off, bytes + off + n);
        off += n;
        enqueue_envelope(peer, seg);
      }
      // Zero-length columns still need their header accounting only.
    }
  }

  A2AResult res;
  res.per_source.resize(static_cast<std::size_t>(node_count()));
  res.per_source[static_cast<std::size_t>(me_)] =
      std::move(per_dest[static_cast<std::size_t>(me_)]);
  {
    std::unique_lock lock(mu_);
    for (int j = 0; j < node_count(); ++j) {
      if (j == me_) continue;
      cv_.wait(lock, [&] {
        const PeerInbox& box = inbox_for(desc.seq, j);
        return box.complete(columns) || box.have_sizes ||
               (box.have_header && box.header_digest != digest) ||
               peers_[static_cast<std::size_t>(j)]->disconnected || !fatal_.empty();
      });
      if (!fatal_.empty()) {
        if (fatal_.find("checksum") != std::string::npos) throw ChecksumMismatch(fatal_);
        throw CollectiveOrderViolation(fatal_);
      }
      PeerInbox& box = inbox_for(desc.seq, j);
      if (box.have_sizes || (box.have_header && box.header_digest != digest))
        throw CollectiveOrderViolation("node " + std::to_string(j) +
                                       " issued a different collective at seq " +
                                       std::to_string(desc.seq));
      if (!box.complete(columns)) throw PeerDisconnected("node " + std::to_string(j) + " left");
      A2AColumns cols(columns);
      for (std::uint32_t c = 0; c < columns; ++c) {
        cols[c].resize(box.columns[c].size() / kValueBytes);
        std::memcpy(cols[c].data(), box.columns[c].data(), box.columns[c].size());
        res.bytes_received += box.columns[c].size();
      }
      res.per_source[static_cast<std::size_t>(j)] = std::move(cols);
    }
    inboxes_.erase(desc.seq);
    consumed_watermark_ = desc.seq + 1;
  }
  res.start_ns = start;
  res.end_ns = wall_ns() - epoch_ns_;
  if (trace_ != nullptr)
    trace_->record(
        TraceEvent{me_, -1, "all_to_all", res.start_ns, res.end_ns, res.bytes_received, "net"});
  return res;
}

}  // namespace pystachio
