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
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pystachio/memory_pool.hpp"
#include "pystachio/runtime.hpp"
#include "pystachio/trace.hpp"

namespace pystachio {

/// Modeled cost parameters for the simulated backend. All rates are free
/// model parameters; defaults target desk-scale runs where bandwidth terms
/// dominate fixed overheads.
struct SimCostConfig {
  double compute_bytes_per_s = 2.0 * 1024 * 1024 * 1024;
  double decode_block_bytes_per_s = 1.0 * 1024 * 1024 * 1024;
  double decode_identity_bytes_per_s = 8.0 * 1024 * 1024 * 1024;
  std::int64_t op_overhead_ns = 2'000;
  std::int64_t control_transfer_bytes = 8;  // size of a data-dependent result header
};

/// A small pageable control transfer below threshold_bytes stalls every
/// stream on the node until the triggering stream drains.
struct StallFaultConfig {
  bool enabled = false;
  std::uint64_t threshold_bytes = 512;
};

/// Node-wide modeled scheduling state (simulated backend only; all access is
/// serialized by the virtual-time kernel).
class NodeExecState {
 public:
  /// Earliest admissible start for an op ready now. Triggering ops must also
  /// wait for node quiescence (mis-sync analog: the transfer synchronizes
  /// the whole device).
  std::int64_t earliest_start(std::int64_t now, bool trigger) const {
    std::int64_t t = std::max(now, stall_until_);
    if (trigger && !inflight_ends_.empty()) t = std::max(t, *inflight_ends_.rbegin());
    return t;
  }
  void claim_stall() { stall_until_ = kFarFuture; }
  void commit(std::int64_t end, bool trigger, bool compute) {
    inflight_ends_.insert(end);
    if (compute) compute_ends_.insert(end);
    if (trigger) stall_until_ = end;
  }
  void complete(std::int64_t end, bool compute) {
    if (auto it = inflight_ends_.find(end); it != inflight_ends_.end()) inflight_ends_.erase(it);
    if (compute)
      if (auto it = compute_ends_.find(end); it != compute_ends_.end()) compute_ends_.erase(it);
  }
  bool compute_busy(std::int64_t at) const {
    return !compute_ends_.empty() && *compute_ends_.rbegin() > at;
  }

 private:
  static constexpr std::int64_t kFarFuture = std::int64_t{1} << 62;
  std::int64_t stall_until_ = 0;
  std::multiset<std::int64_t> inflight_ends_;
  std::multiset<std::int64_t> compute_ends_;
};

/// Everything an executing stream needs from its node.
struct ExecEnv {
  Runtime& rt;
  Trace& trace;
  std::int32_t node_id = 0;
  MemoryPool& pool;
  SimCostConfig cost;
  StallFaultConfig stall;
  NodeExecState& node_state;
};

enum class OpKind { Filter, Partition, Concat, Build, Probe, Decode, SizeExchange, AllToAll, Drain, Custom };

const char* to_string(OpKind k);

/// Accounting returned by an op body after it has done its real work.
struct OpResult {
  std::uint64_t work_bytes = 0;   // drives the modeled duration at the op's rate
  std::uint64_t out_bytes = 0;    // reported in the trace
  std::uint64_t alloc_count = 0;  // allocator stalls in PerAllocation mode
  std::int64_t fixed_ns = 0;      // additional fixed modeled cost
  // Collectives determine their own modeled window.
  std::optional<std::int64_t> start_ns_override;
  std::optional<std::int64_t> end_ns_override;
};

struct OpDesc {
  std::string label;
  OpKind kind = OpKind::Custom;
  std::function<OpResult()> body;
  /// Output size is data-dependent: issuing blocks the control thread until
  /// the stream drains through this op, and the op performs a small control
  /// transfer (the stall-fault trigger).
  bool data_dependent = false;
  std::vector<std::shared_ptr<class Ticket>> deps;
  double rate_bytes_per_s = 0;  // 0 selects the compute rate
  std::string resource = "compute";
};

/// Completion flag for one issued op.
class Ticket {
 public:
  explicit Ticket(Runtime& rt) : mon_(rt.make_monitor()) {}
  void wait() {
    MonitorLock lock(*mon_);
    while (!done_) mon_->wait();
    if (failure_) std::rethrow_exception(failure_);
  }
  bool done() const {
    MonitorLock lock(*mon_);
    return done_;
  }
  std::int64_t end_ns() const {
    MonitorLock lock(*mon_);
    return end_ns_;
  }
  void complete(std::int64_t end_ns, std::exception_ptr failure = nullptr) {
    MonitorLock lock(*mon_);
    done_ = true;
    end_ns_ = end_ns;
    failure_ = failure;
    mon_->notify_all();
  }

 private:
  mutable std::shared_ptr<Monitor> mon_;
  bool done_ = false;
  std::int64_t end_ns_ = 0;
  std::exception_ptr failure_;
};

using TicketPtr = std::shared_ptr<Ticket>;

/// Ordered asynchronous operation queue. Ops within a stream complete in
/// issue order; ops on distinct streams may overlap in modeled time.
class ExecStream {
 public:
  ExecStream(std::int32_t stream_id, ExecEnv& env);
  ~ExecStream();
  ExecStream(const ExecStream&) = delete;
  ExecStream& operator=(const ExecStream&) = delete;

  /// Enqueues the op. For data-dependent ops this blocks the caller until
  /// the stream has drained through the op and rethrows its failure, which
  /// is exactly the synchronizing-operation contract.
  TicketPtr issue(OpDesc op);

  /// ExplicitDrain: blocks until everything issued so far has completed.
  void drain();

  /// No further ops; the worker exits once the queue empties.
  void close();

  std::int32_t id() const { return id_; }

 private:
  void worker();
  void run_one(OpDesc& op, const TicketPtr& ticket);

  std::int32_t id_;
  ExecEnv& env_;
  std::shared_ptr<Monitor> mon_;
  std::deque<std::pair<OpDesc, TicketPtr>> queue_;
  TicketPtr last_ticket_;
  bool closed_ = false;
  std::shared_ptr<TaskHandle> worker_handle_;
};

/// Owning set of streams for one node; closes and joins them on scope exit.
class StreamSet {
 public:
  StreamSet(ExecEnv& env, std::int32_t count, std::int32_t first_id = 0);
  ~StreamSet();
  ExecStream& at(std::size_t i) { return *streams_[i]; }
  std::size_t size() const { return streams_.size(); }
  void close_all();
  void drain_all();

 private:
  std::vector<std::unique_ptr<ExecStream>> streams_;
};

}  // namespace pystachio
