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

#include <map>
#include <memory>
#include <string>

#include "pystachio/psto.hpp"
#include "pystachio/runtime.hpp"

namespace pystachio {

/// File identity -> parsed footer. Once warm, chunk reads perform zero
/// metadata I/O; the miss counter stays stable.
class MetadataCache {
 public:
  explicit MetadataCache(Runtime& rt) : mon_(rt.make_monitor()) {}

  std::shared_ptr<const TableMeta> lookup(const std::string& file_id) {
    MonitorLock lock(*mon_);
    auto it = map_.find(file_id);
    if (it == map_.end()) {
      ++misses_;
      return nullptr;
    }
    ++hits_;
    return it->second;
  }

  void insert(const std::string& file_id, TableMeta meta) {
    MonitorLock lock(*mon_);
    map_[file_id] = std::make_shared<const TableMeta>(std::move(meta));
  }

  std::uint64_t hits() const {
    MonitorLock lock(*mon_);
    return hits_;
  }
  std::uint64_t misses() const {
    MonitorLock lock(*mon_);
    return misses_;
  }

 private:
  mutable std::shared_ptr<Monitor> mon_;
  std::map<std::string, std::shared_ptr<const TableMeta>> map_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

}  // namespace pystachio
