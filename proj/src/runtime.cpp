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

#include "pystachio/runtime.hpp"

#include <chrono>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>

namespace pystachio {

namespace {

std::int64_t steady_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

class RealMonitor : public Monitor {
 public:
  void lock() override { mu_.lock(); }
  void unlock() override { mu_.unlock(); }
  void wait() override {
    std::unique_lock<std::mutex> lock(mu_, std::adopt_lock);
    cv_.wait(lock);
    lock.release();
  }
  void notify_all() override { cv_.notify_all(); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
};

class RealTaskHandle : public TaskHandle {
 public:
  explicit RealTaskHandle(std::function<void()> fn) {
    thread_ = std::thread([this, fn = std::move(fn)] {
      try {
        fn();
      } catch (...) {
        failure_ = std::current_exception();
      }
    });
  }
  ~RealTaskHandle() override {
    if (thread_.joinable()) thread_.join();
  }
  void join() override {
    if (thread_.joinable()) thread_.join();
    if (failure_) std::rethrow_exception(failure_);
  }

 private:
  std::thread thread_;
  std::exception_ptr failure_;
};

}  // namespace

RealRuntime::RealRuntime() : epoch_ns_(steady_now_ns()) {}

std::int64_t RealRuntime::now_ns() { return steady_now_ns() - epoch_ns_; }

void RealRuntime::sleep_until_ns(std::int64_t t) {
  const std::int64_t d = t - now_ns();
  if (d > 0) std::this_thread::sleep_for(std::chrono::nanoseconds(d));
}

std::shared_ptr<TaskHandle> RealRuntime::spawn(std::string, std::function<void()> fn) {
  return std::make_shared<RealTaskHandle>(std::move(fn));
}

std::shared_ptr<Monitor> RealRuntime::make_monitor() { return std::make_shared<RealMonitor>(); }

}  // namespace pystachio
