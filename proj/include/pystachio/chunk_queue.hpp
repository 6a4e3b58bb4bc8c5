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

#include <deque>
#include <functional>
#include <optional>
#include <string>

#include "pystachio/runtime.hpp"
#include "pystachio/trace.hpp"
#include "pystachio/types.hpp"

namespace pystachio {

/// Bounded multi-producer/single-consumer buffer connecting the storage and
/// networking control paths. Enqueue on a full queue blocks the producer
/// (backpressure); it never drops or errors. End-of-stream is signaled
/// in-band by one sentinel per producer; sentinels do not consume capacity.
class ChunkQueue {
 public:
  ChunkQueue(Runtime& rt, std::string table_tag, std::size_t capacity_chunks,
             std::size_t producer_count, QueueTrace* qtrace = nullptr)
      : mon_(rt.make_monitor()),
        rt_(rt),
        tag_(std::move(table_tag)),
        capacity_(capacity_chunks),
        producers_remaining_(producer_count),
        qtrace_(qtrace) {
    if (capacity_chunks < 1) throw InvalidInput("queue capacity must be >= 1");
  }

  void enqueue(ChunkBatch batch) {
    MonitorLock lock(*mon_);
    while (depth_ + reserved_ >= capacity_) mon_->wait();
    push_locked(std::move(batch));
  }

  /// Admission gate for pool workers: claims one slot without blocking.
  /// A successful reservation guarantees enqueue_reserved() cannot block.
  bool try_reserve() {
    MonitorLock lock(*mon_);
    if (depth_ + reserved_ >= capacity_) return false;
    ++reserved_;
    return true;
  }

  void enqueue_reserved(ChunkBatch batch) {
    MonitorLock lock(*mon_);
    --reserved_;
    push_locked(std::move(batch));
  }

  void cancel_reservation() {
    std::function<void()> cb;
    {
      MonitorLock lock(*mon_);
      --reserved_;
      mon_->notify_all();
      cb = on_space_;
    }
    if (cb) cb();
  }

  /// Callback fired whenever a slot frees (used by shared io pools to wake
  /// workers parked on full queues).
  void set_space_callback(std::function<void()> cb) {
    MonitorLock lock(*mon_);
    on_space_ = std::move(cb);
  }

  /// One producer is finished; pushes its in-band sentinel.
  void producer_done() {
    MonitorLock lock(*mon_);
    items_.push_back(std::nullopt);
    mon_->notify_all();
  }

  /// Next batch, or nullopt once every producer has finished and the queue
  /// is empty. Single consumer by contract.
  std::optional<ChunkBatch> dequeue() {
    std::optional<ChunkBatch> item;
    std::function<void()> cb;
    {
      MonitorLock lock(*mon_);
      while (true) {
        while (items_.empty()) {
          if (producers_remaining_ == 0) return std::nullopt;
          mon_->wait();
        }
        auto front = std::move(items_.front());
        items_.pop_front();
        if (!front.has_value()) {
          --producers_remaining_;
          continue;
        }
        item = std::move(front);
        --depth_;
        sample("dequeue");
        mon_->notify_all();
        cb = on_space_;
        break;
      }
    }
    if (cb) cb();
    return item;
  }

  const std::string& tag() const { return tag_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t high_water() const {
    MonitorLock lock(*mon_);
    return high_water_;
  }
  std::uint64_t enqueued_count() const {
    MonitorLock lock(*mon_);
    return enqueued_;
  }

 private:
  void push_locked(ChunkBatch batch) {
    items_.push_back(std::move(batch));
    ++depth_;
    high_water_ = std::max(high_water_, depth_);
    ++enqueued_;
    sample("enqueue");
    mon_->notify_all();
  }

  void sample(const char* what) {
    if (qtrace_ != nullptr)
      qtrace_->record(QueueDepthEvent{rt_.now_ns(), tag_, static_cast<std::int64_t>(depth_),
                                      static_cast<std::int64_t>(capacity_), what});
  }

  mutable std::shared_ptr<Monitor> mon_;
  Runtime& rt_;
  std::string tag_;
  std::size_t capacity_;
  std::size_t depth_ = 0;
  std::size_t reserved_ = 0;
  std::size_t high_water_ = 0;
  std::uint64_t enqueued_ = 0;
  std::size_t producers_remaining_;
  std::deque<std::optional<ChunkBatch>> items_;
  QueueTrace* qtrace_;
  std::function<void()> on_space_;
};

}  // namespace pystachio
