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
#include <functional>
#include <memory>
#include <string>

namespace pystachio {

/// Fused mutex + condition. Engine code that must block correctly under both
/// the virtual-time kernel and real threads synchronizes through this.
class Monitor {
 public:
  virtual ~Monitor() = default;
  virtual void lock() = 0;
  virtual void unlock() = 0;
  /// Atomically releases the lock, blocks, and re-acquires on wakeup.
  /// May wake spuriously; callers loop on their predicate.
  virtual void wait() = 0;
  virtual void notify_all() = 0;
};

class MonitorLock {
 public:
  explicit MonitorLock(Monitor& m) : m_(m) { m_.lock(); }
  ~MonitorLock() { m_.unlock(); }
  MonitorLock(const MonitorLock&) = delete;
  MonitorLock& operator=(const MonitorLock&) = delete;

 private:
  Monitor& m_;
};

class TaskHandle {
 public:
  virtual ~TaskHandle() = default;
  /// Blocks until the task completes; rethrows the task's exception if any.
  virtual void join() = 0;
};

/// Execution substrate: either the deterministic virtual-time kernel or
/// plain OS threads with the wall clock. Time is nanoseconds from run start.
class Runtime {
 public:
  virtual ~Runtime() = default;
  virtual bool simulated() const = 0;
  virtual std::int64_t now_ns() = 0;
  virtual void sleep_until_ns(std::int64_t t) = 0;
  void sleep_ns(std::int64_t d) { sleep_until_ns(now_ns() + d); }
  /// Charges modeled time: advances the calling task's clock when simulated,
  /// does nothing on the real backend (the work itself took the time).
  void charge_ns(std::int64_t d) {
    if (simulated() && d > 0) sleep_ns(d);
  }
  virtual std::shared_ptr<TaskHandle> spawn(std::string name, std::function<void()> fn) = 0;
  virtual std::shared_ptr<Monitor> make_monitor() = 0;
};

/// OS-thread runtime used by the socket backend and by plain in-process use.
class RealRuntime : public Runtime {
 public:
  RealRuntime();
  bool simulated() const override { return false; }
  std::int64_t now_ns() override;
  void sleep_until_ns(std::int64_t t) override;
  std::shared_ptr<TaskHandle> spawn(std::string name, std::function<void()> fn) override;
  std::shared_ptr<Monitor> make_monitor() override;

 private:
  std::int64_t epoch_ns_;
};

}  // namespace pystachio
