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

#include "pystachio/sim_kernel.hpp"

#include <algorithm>
#include <sstream>

namespace pystachio {

/// Per-task handle used for joining and failure propagation.
class SimKernel::SimTask : public TaskHandle {
 public:
  SimTask(SimKernel* kernel, Task* task) : kernel_(kernel), task_(task) {}

  void join() override {
    std::unique_lock lock(kernel_->mu_);
    Task* me = kernel_->current_;
    if (task_->state != Task::State::Done) {
      if (me == nullptr)
        throw Error("host-side join before run() completed: " + task_->name);
      task_->joiners.push_back(me);
      kernel_->block_current(lock);
    }
    if (task_->failure) std::rethrow_exception(task_->failure);
  }

  SimKernel* kernel_;
  Task* task_;
};

SimKernel::SimKernel() = default;

SimKernel::~SimKernel() {
  {
    std::unique_lock lock(mu_);
    bool live = false;
    for (auto& t : tasks_)
      if (t->state != Task::State::Done) live = true;
    if (live && !running_) {
      // run() was never (fully) driven; unwind tasks one at a time.
      aborting_ = true;
      for (auto& t : tasks_) {
        if (t->state == Task::State::Blocked) make_ready(t.get(), clock_ns_.load(), lock);
      }
      while (true) {
        Task* pick = nullptr;
        for (auto& t : tasks_) {
          if (t->state != Task::State::Ready) continue;
          if (pick == nullptr || t->ready_seq < pick->ready_seq) pick = t.get();
        }
        if (pick == nullptr) break;
        pick->state = Task::State::Running;
        current_ = pick;
        control_returned_ = false;
        pick->go = true;
        pick->cv.notify_one();
        host_cv_.wait(lock, [&] { return control_returned_; });
        current_ = nullptr;
      }
    }
  }
  for (auto& t : tasks_)
    if (t->thread.joinable()) t->thread.join();
}

SimKernel::Task* SimKernel::current_task() { return current_; }

std::shared_ptr<TaskHandle> SimKernel::spawn(std::string name, std::function<void()> fn) {
  std::unique_lock lock(mu_);
  auto task = std::make_unique<Task>();
  Task* t = task.get();
  t->id = next_id_++;
  t->name = std::move(name);
  t->state = Task::State::Ready;
  t->ready_at = clock_ns_.load(std::memory_order_relaxed);
  t->ready_seq = next_seq_++;
  tasks_.push_back(std::move(task));

  t->thread = std::thread([this, t, fn = std::move(fn)] {
    bool skip;
    {
      std::unique_lock tl(mu_);
      t->cv.wait(tl, [&] { return t->go; });
      t->go = false;
      skip = aborting_;
    }
    if (!skip) {
      try {
        fn();
      } catch (const KernelAbort&) {
        t->aborted = true;
      } catch (...) {
        std::unique_lock tl(mu_);
        t->failure = std::current_exception();
        if (!first_failure_) first_failure_ = t->failure;
      }
    } else {
      t->aborted = true;
    }
    std::unique_lock tl(mu_);
    t->state = Task::State::Done;
    for (Task* j : t->joiners)
      if (j->state == Task::State::Blocked) make_ready(j, clock_ns_.load(), tl);
    t->joiners.clear();
    control_returned_ = true;
    host_cv_.notify_one();
  });
  return std::make_shared<SimTask>(this, t);
}

void SimKernel::make_ready(Task* t, std::int64_t at, std::unique_lock<std::mutex>&) {
  t->state = Task::State::Ready;
  t->ready_at = std::max(at, clock_ns_.load(std::memory_order_relaxed));
  t->ready_seq = next_seq_++;
}

void SimKernel::yield_from_task(Task* t, std::unique_lock<std::mutex>& lock) {
  control_returned_ = true;
  host_cv_.notify_one();
  t->cv.wait(lock, [&] { return t->go; });
  t->go = false;
  current_ = t;  // restored for observers; host set it before granting
}

void SimKernel::check_abort(Task* t) {
  if (aborting_) {
    t->aborted = true;
    throw KernelAbort{};
  }
}

void SimKernel::block_current(std::unique_lock<std::mutex>& lock) {
  Task* t = current_;
  t->state = Task::State::Blocked;
  yield_from_task(t, lock);
  check_abort(t);
}

void SimKernel::sleep_until(std::int64_t t_ns) {
  std::unique_lock lock(mu_);
  Task* t = current_;
  if (t == nullptr) throw Error("sleep_until outside of a simulation task");
  make_ready(t, t_ns, lock);
  yield_from_task(t, lock);
  check_abort(t);
}

void SimKernel::run() {
  std::unique_lock lock(mu_);
  if (running_) throw Error("run() reentered");
  running_ = true;
  std::string deadlock_msg;

  while (true) {
    bool all_done = true;
    Task* pick = nullptr;
    for (auto& t : tasks_) {
      if (t->state != Task::State::Done) all_done = false;
      if (t->state != Task::State::Ready) continue;
      if (pick == nullptr || t->ready_at < pick->ready_at ||
          (t->ready_at == pick->ready_at && t->ready_seq < pick->ready_seq))
        pick = t.get();
    }
    if (all_done) break;
    if (pick == nullptr) {
      // Every live task is blocked: deadlock. Abort and unwind them.
      if (!aborting_) {
        std::ostringstream msg;
        msg << "blocked tasks:";
        for (auto& t : tasks_)
          if (t->state == Task::State::Blocked) msg << ' ' << t->name;
        deadlock_msg = msg.str();
        aborting_ = true;
        for (auto& t : tasks_)
          if (t->state == Task::State::Blocked)
            make_ready(t.get(), clock_ns_.load(std::memory_order_relaxed), lock);
        continue;
      }
      throw Error("simulation wedged during abort");
    }
    if (pick->ready_at > clock_ns_.load(std::memory_order_relaxed))
      clock_ns_.store(pick->ready_at, std::memory_order_release);
    pick->state = Task::State::Running;
    current_ = pick;
    control_returned_ = false;
    pick->go = true;
    pick->cv.notify_one();
    host_cv_.wait(lock, [&] { return control_returned_; });
    current_ = nullptr;
  }

  running_ = false;
  lock.unlock();
  for (auto& t : tasks_)
    if (t->thread.joinable()) t->thread.join();
  if (first_failure_) std::rethrow_exception(first_failure_);
  if (!deadlock_msg.empty()) throw SimDeadlock(deadlock_msg);
}

/// Monitor over kernel parking. FIFO lock handoff keeps wake order
/// deterministic.
class SimKernel::SimMonitorImpl : public Monitor {
 public:
  explicit SimMonitorImpl(SimKernel& k) : k_(k) {}

  void lock() override {
    std::unique_lock lock(k_.mu_);
    lock_locked(lock);
  }

  void unlock() override {
    std::unique_lock lock(k_.mu_);
    owner_ = nullptr;
    wake_next_lock_waiter(lock);
  }

  void wait() override {
    std::unique_lock lock(k_.mu_);
    Task* me = k_.current_;
    owner_ = nullptr;
    wake_next_lock_waiter(lock);
    cond_waiters_.push_back(me);
    try {
      k_.block_current(lock);
      lock_locked(lock);
    } catch (const KernelAbort&) {
      owner_ = me;  // keep lock/unlock pairing sane while unwinding
      throw;
    }
  }

  void notify_all() override {
    std::unique_lock lock(k_.mu_);
    for (Task* t : cond_waiters_)
      if (t->state == Task::State::Blocked)
        k_.make_ready(t, k_.clock_ns_.load(std::memory_order_relaxed), lock);
    cond_waiters_.clear();
  }

 private:
  void lock_locked(std::unique_lock<std::mutex>& lock) {
    Task* me = k_.current_;
    while (owner_ != nullptr) {
      lock_waiters_.push_back(me);
      k_.block_current(lock);
    }
    owner_ = me;
  }

  void wake_next_lock_waiter(std::unique_lock<std::mutex>& lock) {
    while (!lock_waiters_.empty()) {
      Task* t = lock_waiters_.front();
      lock_waiters_.pop_front();
      if (t->state == Task::State::Blocked) {
        k_.make_ready(t, k_.clock_ns_.load(std::memory_order_relaxed), lock);
        break;
      }
    }
  }

  SimKernel& k_;
  Task* owner_ = nullptr;
  std::deque<Task*> lock_waiters_;
  std::deque<Task*> cond_waiters_;
};

std::shared_ptr<Monitor> SimRuntime::make_monitor() {
  return std::make_shared<SimKernel::SimMonitorImpl>(kernel_);
}

}  // namespace pystachio
