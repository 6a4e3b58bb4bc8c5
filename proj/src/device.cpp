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

#include "pystachio/device.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "pystachio/errors.hpp"

namespace pystachio {

DeviceModel::~DeviceModel() {
  for (auto& [path, fd] : fds_)
    if (fd >= 0) ::close(fd);
}

int DeviceModel::fd_for(const std::string& path) {
  auto it = fds_.find(path);
  if (it != fds_.end()) return it->second;
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw IoFailure("open " + path + ": " + std::strerror(errno));
  fds_[path] = fd;
  return fd;
}

std::uint64_t DeviceModel::file_size(const std::string& path) {
  const int fd = fd_for(path);
  const off_t size = ::lseek(fd, 0, SEEK_END);
  if (size < 0) throw IoFailure("lseek " + path);
  return static_cast<std::uint64_t>(size);
}

std::vector<std::uint8_t> DeviceModel::read(ExecEnv& env, std::int32_t stream_id,
                                            const std::string& path, std::uint64_t offset,
                                            std::uint64_t len, const char* op_label) {
  Runtime& rt = env.rt;
  std::int64_t start_ns;
  std::int64_t end_ns;

  if (rt.simulated() && config_.backing == DeviceBacking::SimulatedRateLimited) {
    // A node-wide stall also gates new storage requests.
    while (true) {
      const std::int64_t t = env.node_state.earliest_start(rt.now_ns(), false);
      if (t <= rt.now_ns()) break;
      rt.sleep_until_ns(t);
    }
    const std::int64_t arrival = rt.now_ns();
    // Request latency overlaps across requesters; transfers serialize on the
    // bucket. ceil keeps delivered bytes <= bandwidth * window exact.
    const auto xfer_ns = static_cast<std::int64_t>(
        (static_cast<__int128>(len) * 1'000'000'000 + static_cast<std::int64_t>(config_.bandwidth_bytes_per_s) - 1) /
        static_cast<std::int64_t>(config_.bandwidth_bytes_per_s));
    start_ns = std::max(arrival + config_.per_request_latency_ns, busy_until_ns_);
    end_ns = start_ns + xfer_ns;
    busy_until_ns_ = end_ns;
    env.node_state.commit(end_ns, false, false);
    rt.sleep_until_ns(end_ns);
    env.node_state.complete(end_ns, false);
  } else {
    start_ns = rt.now_ns();
    end_ns = start_ns;  // patched after the read below
  }

  ++requests_;
  std::vector<std::uint8_t> buf(len);
  const int fd = fd_for(path);
  std::uint64_t done = 0;
  while (done < len) {
    const ssize_t n = ::pread(fd, buf.data() + done, len - done,
                              static_cast<off_t>(offset + done));
    if (n < 0) throw IoFailure("pread " + path + ": " + std::strerror(errno));
    if (n == 0) throw IoFailure("short read past EOF: " + path);
    done += static_cast<std::uint64_t>(n);
  }
  if (!(rt.simulated() && config_.backing == DeviceBacking::SimulatedRateLimited))
    end_ns = rt.now_ns();

  env.trace.record(TraceEvent{env.node_id, stream_id, op_label, start_ns, end_ns, len,
                              "storage:" + config_.device_id});
  return buf;
}

DeviceModel& DeviceManager::add(const std::string& path_prefix, DeviceConfig config) {
  auto [it, inserted] = by_prefix_.emplace(path_prefix, std::make_unique<DeviceModel>(config));
  if (!inserted) throw InvalidInput("device prefix registered twice: " + path_prefix);
  return *it->second;
}

DeviceModel& DeviceManager::resolve(const std::string& path) {
  DeviceModel* best = nullptr;
  std::size_t best_len = 0;
  for (auto& [prefix, dev] : by_prefix_) {
    if (path.rfind(prefix, 0) == 0 && prefix.size() >= best_len) {
      best = dev.get();
      best_len = prefix.size();
    }
  }
  if (best == nullptr) throw InvalidInput("no device registered for path: " + path);
  return *best;
}

std::vector<DeviceModel*> DeviceManager::devices() {
  std::vector<DeviceModel*> out;
  for (auto& [prefix, dev] : by_prefix_) out.push_back(dev.get());
  return out;
}

}  // namespace pystachio
