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

#include "pystachio/exec.hpp"

#include <cmath>

#include "pystachio/errors.hpp"

namespace pystachio {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Filter: return "filter";
    case OpKind::Partition: return "partition";
    case OpKind::Concat: return "concat";
    case OpKind::Build: return "build";
    case OpKind::Probe: return "probe";
    case OpKind::Decode: return "decode";
    case OpKind::SizeExchange: return "size_exchange";
    case OpKind::AllToAll: return "all_to_all";
    case OpKind::Drain: return "drain";
    case OpKind::Custom: return "custom";
  }
  return "?";
}

ExecStream::ExecStream(std::int32_t stream_id, ExecEnv& env)
    : id_(stream_id), env_(env), mon_(env.rt.make_monitor()) {
  worker_handle_ = env_.rt.spawn(
      "node" + std::to_string(env_.node_id) + "/stream" + std::to_string(id_), [this] { worker(); });
}

ExecStream::~ExecStream() {
  close();
  if (worker_handle_) {
    try {
      worker_handle_->join();
    } catch (...) {
      // Failures already propagate through tickets.
    }
  }
}

TicketPtr ExecStream::issue(OpDesc op) {
  auto ticket = std::make_shared<Ticket>(env_.rt);
  const bool sync = op.data_dependent;
  {
    MonitorLock lock(*mon_);
    if (closed_) throw StreamClosed();
    queue_.emplace_back(std::move(op), ticket);
    last_ticket_ = ticket;
    mon_->notify_all();
  }
  if (sync) ticket->wait();
  return ticket;
}

void ExecStream::drain() {
  TicketPtr last;
  {
    MonitorLock lock(*mon_);
    last = last_ticket_;
  }
  if (last) last->wait();
}

void ExecStream::close() {
  MonitorLock lock(*mon_);
  closed_ = true;
  mon_->notify_all();
}

void ExecStream::worker() {
  while (true) {
    OpDesc op;
    TicketPtr ticket;
    {
      MonitorLock lock(*mon_);
      while (queue_.empty() && !closed_) mon_->wait();
      if (queue_.empty()) return;
      op = std::move(queue_.front().first);
      ticket = queue_.front().second;
      queue_.pop_front();
    }
    run_one(op, ticket);
  }
}

void ExecStream::run_one(OpDesc& op, const TicketPtr& ticket) {
  // Wait for cross-stream dependencies first; a failed dependency fails this
  // op without running its body.
  for (const auto& dep : op.deps) {
    try {
      dep->wait();
    } catch (...) {
      ticket->complete(env_.rt.now_ns(), std::current_exception());
      return;
    }
  }

  Runtime& rt = env_.rt;
  const bool trigger = env_.stall.enabled && op.data_dependent &&
                       static_cast<std::uint64_t>(env_.cost.control_transfer_bytes) <
                           env_.stall.threshold_bytes;
  std::int64_t start = rt.now_ns();
  std::int64_t end = start;
  OpResult res;
  std::exception_ptr failure;

  if (rt.simulated()) {
    // Admission loop: starts are pushed back by active stalls, and a
    // triggering op additionally waits for node quiescence.
    while (true) {
      const std::int64_t t = env_.node_state.earliest_start(rt.now_ns(), trigger);
      if (t <= rt.now_ns()) break;
      rt.sleep_until_ns(t);
    }
    if (trigger) env_.node_state.claim_stall();
    start = rt.now_ns();
    try {
      res = op.body ? op.body() : OpResult{};
    } catch (...) {
      failure = std::current_exception();
    }
    if (failure) {
      env_.node_state.commit(start, trigger, false);
      env_.node_state.complete(start, false);
      ticket->complete(start, failure);
      return;
    }
    const double rate =
        op.rate_bytes_per_s > 0 ? op.rate_bytes_per_s : env_.cost.compute_bytes_per_s;
    std::int64_t dur = env_.cost.op_overhead_ns + res.fixed_ns +
                       env_.pool.alloc_latency_ns(res.alloc_count);
    dur += static_cast<std::int64_t>(std::llround(static_cast<double>(res.work_bytes) / rate * 1e9));
    end = res.end_ns_override.value_or(start + dur);
    if (res.start_ns_override) start = *res.start_ns_override;
    const bool compute = op.resource == "compute";
    env_.node_state.commit(end, trigger, compute);
    rt.sleep_until_ns(end);
    env_.node_state.complete(end, compute);
  } else {
    start = rt.now_ns();
    try {
      res = op.body ? op.body() : OpResult{};
    } catch (...) {
      failure = std::current_exception();
    }
    if (failure) {
      ticket->complete(rt.now_ns(), failure);
      return;
    }
    end = res.end_ns_override.value_or(rt.now_ns());
    if (res.start_ns_override) start = *res.start_ns_override;
  }

  env_.trace.record(TraceEvent{env_.node_id, id_, op.label.empty() ? to_string(op.kind) : op.label,
                               start, end, res.out_bytes, op.resource});
  ticket->complete(end);
}

StreamSet::StreamSet(ExecEnv& env, std::int32_t count, std::int32_t first_id) {
  streams_.reserve(static_cast<std::size_t>(count));
  for (std::int32_t i = 0; i < count; ++i)
    streams_.push_back(std::make_unique<ExecStream>(first_id + i, env));
}

StreamSet::~StreamSet() { close_all(); }

void StreamSet::close_all() {
  for (auto& s : streams_) s->close();
}

void StreamSet::drain_all() {
  for (auto& s : streams_) s->drain();
}

}  // namespace pystachio
