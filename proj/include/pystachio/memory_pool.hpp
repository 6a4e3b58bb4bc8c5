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

#include <atomic>
#include <cstdint>
#include <limits>
#include <utility>

#include "pystachio/errors.hpp"

namespace pystachio {

enum class PoolMode { PerAllocation, Pooled };

/// Budgeted accounting pool. Buffers live on the ordinary heap; the pool
/// tracks live bytes against a capacity and models the allocator cost:
/// PerAllocation charges a modeled latency per allocation, Pooled charges
/// none after pool creation.
class MemoryPool {
 public:
  explicit MemoryPool(std::uint64_t capacity_bytes = std::numeric_limits<std::uint64_t>::max(),
                      PoolMode mode = PoolMode::Pooled, std::int64_t per_alloc_latency_ns = 20'000)
      : capacity_(capacity_bytes), mode_(mode), per_alloc_latency_ns_(per_alloc_latency_ns) {}

  MemoryPool(const MemoryPool&) = delete;
  MemoryPool& operator=(const MemoryPool&) = delete;

  /// RAII share of the budget. Movable; releases its bytes on destruction.
  class Lease {
   public:
    Lease() = default;
    Lease(MemoryPool* pool, std::uint64_t bytes) : pool_(pool), bytes_(bytes) {}
    Lease(Lease&& o) noexcept : pool_(o.pool_), bytes_(o.bytes_) { o.pool_ = nullptr; o.bytes_ = 0; }
    Lease& operator=(Lease&& o) noexcept {
      if (this != &o) {
        release();
        pool_ = o.pool_;
        bytes_ = o.bytes_;
        o.pool_ = nullptr;
        o.bytes_ = 0;
      }
      return *this;
    }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease() { release(); }

    void release() {
      if (pool_ != nullptr && bytes_ > 0) pool_->free_bytes(bytes_);
      pool_ = nullptr;
      bytes_ = 0;
    }
    std::uint64_t bytes() const { return bytes_; }

   private:
    MemoryPool* pool_ = nullptr;
    std::uint64_t bytes_ = 0;
  };

  /// Reserves `bytes` against the budget. Throws MemoryExceeded when the
  /// reservation would push live bytes past capacity.
  Lease acquire(std::uint64_t bytes) {
    std::uint64_t cur = allocated_.load(std::memory_order_relaxed);
    while (true) {
      if (bytes > capacity_ || cur > capacity_ - bytes) throw MemoryExceeded(bytes, cur, capacity_);
      if (allocated_.compare_exchange_weak(cur, cur + bytes, std::memory_order_acq_rel)) break;
    }
    bump_peak(cur + bytes);
    return Lease(this, bytes);
  }

  std::uint64_t allocated_bytes() const { return allocated_.load(std::memory_order_acquire); }
  std::uint64_t peak_bytes() const { return peak_.load(std::memory_order_acquire); }
  std::uint64_t capacity_bytes() const { return capacity_; }
  PoolMode mode() const { return mode_; }

  /// Modeled allocator stall for `count` allocations under the current mode.
  std::int64_t alloc_latency_ns(std::uint64_t count) const {
    return mode_ == PoolMode::PerAllocation ? per_alloc_latency_ns_ * static_cast<std::int64_t>(count)
                                            : 0;
  }

 private:
  friend class Lease;
  void free_bytes(std::uint64_t bytes) { allocated_.fetch_sub(bytes, std::memory_order_acq_rel); }
  void bump_peak(std::uint64_t v) {
    std::uint64_t cur = peak_.load(std::memory_order_relaxed);
    while (cur < v && !peak_.compare_exchange_weak(cur, v, std::memory_order_acq_rel)) {
    }
  }

  std::uint64_t capacity_;
  PoolMode mode_;
  std::int64_t per_alloc_latency_ns_;
  std::atomic<std::uint64_t> allocated_{0};
  std::atomic<std::uint64_t> peak_{0};
};

using PoolLease = MemoryPool::Lease;

}  // namespace pystachio
