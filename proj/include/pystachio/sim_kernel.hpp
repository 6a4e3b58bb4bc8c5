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
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pystachio/errors.hpp"
#include "pystachio/runtime.hpp"

namespace pystachio {

/// Thrown by run() when every live task is blocked and none can make
/// progress: a genuine scheduling deadlock in the modeled system.
class SimDeadlock : public Error {
 public:
  explicit SimDeadlock(const std::string& msg) : Error("simulation deadlock: " + msg) {}
};

/// Cooperative virtual-time kernel. Tasks run on OS threads but exactly one
/// executes at a time; control transfers happen only inside kernel
/// primitives, which makes every run bit-for-bit deterministic. The clock
/// advances to the earliest pending wakeup whenever no task is runnable at
/// the current instant.
class SimKernel {
 public:
  SimKernel();
  ~SimKernel();
  SimKernel(const SimKernel&) = delete;
  SimKernel& operator=(const SimKernel&) = delete;

  std::shared_ptr<TaskHandle> spawn(std::string name, std::function<void()> fn);

  /// Drives the simulation until every task finishes. Rethrows the first
  /// task failure; throws SimDeadlock when blocked tasks cannot progress.
  void run();

  std::int64_t now_ns() const { return clock_ns_.load(std::memory_order_acquire); }
  void sleep_until(std::int64_t t_ns);

  class SimMonitorImpl;
  class SimTask;

 private:
  friend class SimMonitorImpl;
  friend class SimTask;

  struct KernelAbort {};  // unwinds task stacks during abort; never escapes

  struct Task {
    std::uint64_t id = 0;
    std::string name;
    enum class State { Ready, Running, Blocked, Done } state = State::Ready;
    std::int64_t ready_at = 0;
    std::uint64_t ready_seq = 0;
    bool go = false;
    std::condition_variable cv;
    std::thread thread;
    std::exception_ptr failure;
    bool aborted = false;
    std::vector<Task*> joiners;
  };

  // All private helpers below require mu_ held.
  void make_ready(Task* t, std::int64_t at, std::unique_lock<std::mutex>&);
  void yield_from_task(Task* t, std::unique_lock<std::mutex>& lock);
  void block_current(std::unique_lock<std::mutex>& lock);
  void check_abort(Task* t);
  Task* current_task();

  std::mutex mu_;
  std::condition_variable host_cv_;
  bool control_returned_ = false;
  bool running_ = false;
  bool aborting_ = false;
  std::atomic<std::int64_t> clock_ns_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_id_ = 0;
  std::vector<std::unique_ptr<Task>> tasks_;
  Task* current_ = nullptr;
  std::exception_ptr first_failure_;
};

/// Runtime facade over a SimKernel.
class SimRuntime : public Runtime {
 public:
  explicit SimRuntime(SimKernel& kernel) : kernel_(kernel) {}
  bool simulated() const override { return true; }
  std::int64_t now_ns() override { return kernel_.now_ns(); }
  void sleep_until_ns(std::int64_t t) override { kernel_.sleep_until(t); }
  std::shared_ptr<TaskHandle> spawn(std::string name, std::function<void()> fn) override {
    return kernel_.spawn(std::move(name), std::move(fn));
  }
  std::shared_ptr<Monitor> make_monitor() override;

  SimKernel& kernel() { return kernel_; }

 private:
  SimKernel& kernel_;
};

}  // namespace pystachio
