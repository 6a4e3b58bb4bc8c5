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
#include <string>
#include <vector>

#include "pystachio/trace.hpp"
#include "pystachio/workload.hpp"

namespace pystachio {

/// Inputs of the theoretical-minimum runtime bound.
struct TminInputs {
  std::uint64_t ssd_read_size_agg = 0;   // compressed input total, bytes
  double ssd_read_bw_agg = 0;            // aggregate storage bandwidth, bytes/s
  std::uint64_t net_recv_size_node = 0;  // per-node received bytes
  double net_bw = 0;                     // network bandwidth, bytes/s

  void validate() const;
};

/// max(storage read time, per-node network receive time), in seconds.
double t_min(const TminInputs& in);

/// Workload generation: deterministic table files spread across device
/// directories, described by a JSON manifest.
enum class WorkloadKind { SyntheticJoin, TpchAnalog };

struct GenWorkloadSpec {
  WorkloadKind kind = WorkloadKind::TpchAnalog;
  std::string out_dir;
  int devices = 2;
  int nodes = 2;
  std::uint64_t seed = 42;
  double scale = 0.01;            // TpchAnalog
  SyntheticJoinSpec synthetic;    // SyntheticJoin
  std::uint64_t row_group_bytes = 1024 * 1024;
  Codec codec = Codec::GeneralPurposeBlock;
};

/// Writes the files and returns the manifest path.
std::string gen_workload(const GenWorkloadSpec& spec);

/// Trace analytics: bucketed throughput per resource class, idle gaps,
/// overlap ratio, and per-node effective bus bandwidth.
struct UtilizationReport {
  std::int64_t bucket_ns = 10'000'000;
  std::int64_t window_start_ns = 0;
  std::int64_t window_end_ns = 0;
  // Per resource class ("storage", "net", "compute"), bytes delivered per
  // bucket. Integrated bytes equal the class totals exactly.
  std::map<std::string, std::vector<std::uint64_t>> bytes_per_bucket;
  std::map<std::string, std::uint64_t> total_bytes;
  struct IdleGap {
    std::string resource_class;
    std::int64_t start_ns;
    std::int64_t end_ns;
  };
  std::vector<IdleGap> idle_gaps;
  double overlap_ratio = 0;  // fraction of the window with >= 2 classes active
  std::map<int, double> effective_bus_bandwidth_per_node;

  void write_csv(std::ostream& out) const;
};

UtilizationReport analyze_trace(const std::vector<TraceEvent>& events,
                                std::int64_t bucket_ns = 10'000'000);

}  // namespace pystachio
