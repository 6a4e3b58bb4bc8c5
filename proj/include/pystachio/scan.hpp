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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pystachio/chunk_queue.hpp"
#include "pystachio/device.hpp"
#include "pystachio/exec.hpp"
#include "pystachio/metadata_cache.hpp"
#include "pystachio/psto.hpp"

namespace pystachio {

struct ScanOptions {
  std::vector<std::string> columns;  // projection; empty selects all
  Predicate predicate;
  /// Optional per-chunk operator applied on the worker's compute stream
  /// after the filter (e.g. replicated-build join pushdown).
  std::function<ChunkBatch(ChunkBatch, ExecStream&)> transform;
  /// When false, every row-group job re-fetches and re-parses the footer
  /// (the naive reader's per-read metadata cost).
  bool use_metadata_cache = true;
  std::int64_t metadata_parse_ns = 100'000;
  double decode_rate_override = 0;  // bytes/s; 0 selects the cost-config rate
};

/// Shared pool of storage I/O workers, each owning a compute stream for
/// decode work. Multiple scans submit into one pool (reader combining);
/// workers pick jobs round-robin across scan lanes so concurrent scans
/// interleave their read requests instead of draining one file at a time.
///
/// A job may carry an admission gate (the scan's output queue): the worker
/// claims a slot via try_reserve() before starting it, and skips to another
/// lane when the queue is full. Workers therefore never block on a full
/// queue; backpressure parks the job, not the worker.
class IoPool {
 public:
  IoPool(ExecEnv& env, int workers, std::int32_t first_stream_id = 100);
  ~IoPool();
  IoPool(const IoPool&) = delete;
  IoPool& operator=(const IoPool&) = delete;

  /// `gate` may be null for ungated jobs. Gated jobs receive a claimed slot
  /// and must finish with enqueue_reserved() or cancel_reservation().
  void submit(const std::string& lane, ChunkQueue* gate, std::function<void(ExecStream&)> job);
  /// No more jobs; blocks until queued jobs finish and workers exit.
  void close_and_join();
  int worker_count() const { return workers_; }
  /// Queues must wake the pool when slots free; scans register theirs here.
  void watch_queue(ChunkQueue& queue);

 private:
  struct Job {
    ChunkQueue* gate = nullptr;
    std::function<void(ExecStream&)> run;
  };
  void worker_loop(std::size_t index);

  ExecEnv& env_;
  int workers_;
  std::shared_ptr<Monitor> mon_;
  std::vector<std::string> lane_order_;
  std::map<std::string, std::deque<Job>> lanes_;
  std::size_t cursor_ = 0;
  std::size_t queued_ = 0;
  bool closed_ = false;
  std::vector<std::unique_ptr<ExecStream>> streams_;
  std::vector<std::shared_ptr<TaskHandle>> handles_;
};

/// Metadata fetch with modeled charges: trailer read + footer read on the
/// device, parse charged to compute.
TableMeta fetch_metadata(ExecEnv& env, DeviceModel& device, const std::string& path,
                         std::int64_t parse_ns, std::int32_t stream_id = 0);

/// Overlapped chunked scan: one job per surviving row group; each job reads
/// that group's column chunks (device-charged), decodes them on the worker's
/// compute stream, applies the predicate, and enqueues the filtered batch.
/// Returns a completion ticket; `out` receives one producer_done when the
/// scan finishes.
TicketPtr scan_chunks(ExecEnv& env, const std::string& path, DeviceModel& device,
                      MetadataCache& cache, ScanOptions opts, IoPool& pool, ChunkQueue& out);

/// Baseline blocking reader: metadata parse, full I/O phase, then decode,
/// strictly in sequence, materializing one batch. The whole uncompressed
/// selection is charged against the pool up front.
ChunkBatch read_blocking(ExecEnv& env, const std::string& path, DeviceModel& device,
                         const ScanOptions& opts);

}  // namespace pystachio
