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
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

namespace pystachio {

/// One executed operation. Times are modeled nanoseconds on the simulated
/// backend and wall-clock nanoseconds since run start on the real backend.
struct TraceEvent {
  std::int32_t node = 0;
  std::int32_t stream = 0;
  std::string op;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  std::uint64_t bytes = 0;
  std::string resource;
};

/// Append-only event log shared by every component of a run.
class Trace {
 public:
  void record(TraceEvent ev);
  std::vector<TraceEvent> events() const;
  std::size_t size() const;
  void clear();

  /// CSV with the fixed header node,stream,op,start_us,end_us,bytes,resource.
  void write_csv(std::ostream& out) const;
  void write_csv_file(const std::string& path) const;
  static std::vector<TraceEvent> read_csv(std::istream& in);
  static std::vector<TraceEvent> read_csv_file(const std::string& path);

 private:
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
};

/// Queue depth sample stream (separate file from the op trace; the op trace
/// header is fixed and has no depth column).
struct QueueDepthEvent {
  std::int64_t time_ns = 0;
  std::string queue;
  std::int64_t depth = 0;
  std::int64_t capacity = 0;
  std::string event;  // enqueue | dequeue
};

class QueueTrace {
 public:
  void record(QueueDepthEvent ev);
  std::vector<QueueDepthEvent> events() const;
  void write_csv(std::ostream& out) const;
  void write_csv_file(const std::string& path) const;

 private:
  mutable std::mutex mu_;
  std::vector<QueueDepthEvent> events_;
};

}  // namespace pystachio
