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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pystachio/exec.hpp"

namespace pystachio {

enum class DeviceBacking { RealFile, SimulatedRateLimited };

struct DeviceConfig {
  std::string device_id = "dev0";
  double bandwidth_bytes_per_s = 6.4 * 1024 * 1024 * 1024;
  std::int64_t per_request_latency_ns = 100'000;
  DeviceBacking backing = DeviceBacking::SimulatedRateLimited;
};

/// One storage device. Data always comes from real files; in simulated mode
/// the transfer additionally charges a token-bucket in modeled time, so
/// delivered bytes over any window never exceed bandwidth x window.
class DeviceModel {
 public:
  explicit DeviceModel(DeviceConfig config) : config_(std::move(config)) {}
  ~DeviceModel();
  DeviceModel(const DeviceModel&) = delete;
  DeviceModel& operator=(const DeviceModel&) = delete;

  /// Reads [offset, offset+len) of `path`, charging the device in simulated
  /// mode. Trace records one storage event per request.
  std::vector<std::uint8_t> read(ExecEnv& env, std::int32_t stream_id, const std::string& path,
                                 std::uint64_t offset, std::uint64_t len,
                                 const char* op_label = "read");

  std::uint64_t file_size(const std::string& path);

  const DeviceConfig& config() const { return config_; }
  std::uint64_t request_count() const { return requests_; }

 private:
  int fd_for(const std::string& path);

  DeviceConfig config_;
  std::int64_t busy_until_ns_ = 0;  // simulated-mode token serialization
  std::uint64_t requests_ = 0;
  std::map<std::string, int> fds_;
};

/// Maps file paths to devices by longest registered prefix.
class DeviceManager {
 public:
  DeviceModel& add(const std::string& path_prefix, DeviceConfig config);
  DeviceModel& resolve(const std::string& path);
  std::vector<DeviceModel*> devices();

 private:
  std::map<std::string, std::unique_ptr<DeviceModel>> by_prefix_;
};

}  // namespace pystachio
