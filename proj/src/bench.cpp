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

#include "pystachio/bench.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "pystachio/errors.hpp"
#include "pystachio/net.hpp"

namespace pystachio {

namespace fs = std::filesystem;

void TminInputs::validate() const {
  if (ssd_read_size_agg == 0) throw InvalidInput("ssd read size must be positive");
  if (ssd_read_bw_agg <= 0) throw InvalidInput("ssd bandwidth must be positive");
  if (net_bw <= 0) throw InvalidInput("network bandwidth must be positive");
}

double t_min(const TminInputs& in) {
  in.validate();
  const double storage_s = static_cast<double>(in.ssd_read_size_agg) / in.ssd_read_bw_agg;
  const double net_s = static_cast<double>(in.net_recv_size_node) / in.net_bw;
  return std::max(storage_s, net_s);
}

namespace {

std::string device_dir(const GenWorkloadSpec& spec, int index) {
  return (fs::path(spec.out_dir) / ("dev" + std::to_string(index % spec.devices))).string();
}

nlohmann::json write_sharded(const GenWorkloadSpec& spec, const GeneratedTable& table,
                             const std::string& name, int file_index) {
  nlohmann::json entry;
  entry["replicated"] = false;
  entry["rows"] = table.row_count();
  auto paths = nlohmann::json::array();
  for (int node = 0; node < spec.nodes; ++node) {
    GeneratedTable slice = slice_for_node(table, node, spec.nodes);
    const std::string dir = device_dir(spec, file_index + node);
    fs::create_directories(dir);
    const std::string path = dir + "/" + name + ".node" + std::to_string(node) + ".psto";
    write_table_file(slice, path,
                     TableWriter::rows_for_group_bytes(slice.schema, spec.row_group_bytes),
                     spec.codec);
    paths.push_back(path);
  }
  entry["paths_per_node"] = paths;
  return entry;
}

nlohmann::json write_replicated(const GenWorkloadSpec& spec, const GeneratedTable& table,
                                const std::string& name, int file_index) {
  nlohmann::json entry;
  entry["replicated"] = true;
  entry["rows"] = table.row_count();
  const std::string dir = device_dir(spec, file_index);
  fs::create_directories(dir);
  const std::string path = dir + "/" + name + ".psto";
  write_table_file(table, path,
                   TableWriter::rows_for_group_bytes(table.schema, spec.row_group_bytes),
                   spec.codec);
  entry["path"] = path;
  return entry;
}

}  // namespace

std::string gen_workload(const GenWorkloadSpec& spec) {
  if (spec.devices < 1 || spec.nodes < 1) throw InvalidInput("devices and nodes must be >= 1");
  fs::create_directories(spec.out_dir);
  nlohmann::json manifest;
  manifest["nodes"] = spec.nodes;
  manifest["devices"] = spec.devices;
  manifest["seed"] = spec.seed;

  if (spec.kind == WorkloadKind::SyntheticJoin) {
    manifest["kind"] = "synthetic-join";
    SyntheticJoinSpec syn = spec.synthetic;
    syn.seed = spec.seed;
    manifest["hit_ratio"] = syn.hit_ratio;
    manifest["tables"]["build"] = write_sharded(spec, gen_build_table(syn), "build", 0);
    manifest["tables"]["probe"] = write_sharded(spec, gen_probe_table(syn), "probe", 1);
  } else {
    manifest["kind"] = "tpch-analog";
    manifest["scale"] = spec.scale;
    TpchAnalogSpec t{spec.scale, spec.seed};
    manifest["tables"]["customer"] = write_replicated(spec, gen_customer(t), "customer", 0);
    manifest["tables"]["orders"] = write_sharded(spec, gen_orders(t), "orders", 0);
    manifest["tables"]["lineitem"] = write_sharded(spec, gen_lineitem(t), "lineitem", 1);
  }

  const std::string manifest_path = (fs::path(spec.out_dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  if (!out) throw IoFailure("cannot write manifest: " + manifest_path);
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

namespace {

std::string resource_class(const std::string& resource) {
  const auto colon = resource.find(':');
  return colon == std::string::npos ? resource : resource.substr(0, colon);
}

}  // namespace

UtilizationReport analyze_trace(const std::vector<TraceEvent>& events, std::int64_t bucket_ns) {
  if (bucket_ns <= 0) throw MalformedTrace("bucket size must be positive");
  UtilizationReport report;
  report.bucket_ns = bucket_ns;
  if (events.empty()) return report;

  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& ev : events) {
    if (ev.end_ns < ev.start_ns) throw MalformedTrace("event ends before it starts: " + ev.op);
    lo = std::min(lo, ev.start_ns);
    hi = std::max(hi, ev.end_ns);
  }
  report.window_start_ns = lo;
  report.window_end_ns = hi;
  const std::size_t buckets =
      static_cast<std::size_t>((hi - lo + bucket_ns - 1) / bucket_ns) + (hi == lo ? 1 : 0);

  // Busy interval lists per class for idle gaps and the overlap sweep.
  std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> busy;

  for (const auto& ev : events) {
    const std::string cls = resource_class(ev.resource);
    auto& series = report.bytes_per_bucket[cls];
    series.resize(buckets, 0);
    report.total_bytes[cls] += ev.bytes;
    busy[cls].push_back({ev.start_ns, ev.end_ns});

    // Distribute bytes across buckets with integer proportions so the
    // integral equals the byte total exactly.
    const std::int64_t dur = ev.end_ns - ev.start_ns;
    if (ev.bytes == 0) continue;
    if (dur == 0) {
      series[static_cast<std::size_t>((ev.start_ns - lo) / bucket_ns)] += ev.bytes;
      continue;
    }
    const std::size_t first = static_cast<std::size_t>((ev.start_ns - lo) / bucket_ns);
    const std::size_t last = static_cast<std::size_t>((ev.end_ns - 1 - lo) / bucket_ns);
    std::uint64_t assigned = 0;
    for (std::size_t b = first; b <= last; ++b) {
      const std::int64_t bucket_end = lo + static_cast<std::int64_t>(b + 1) * bucket_ns;
      const std::int64_t covered = std::min(ev.end_ns, bucket_end) - ev.start_ns;
      const std::uint64_t cum = static_cast<std::uint64_t>(
          (static_cast<__int128>(ev.bytes) * covered) / dur);
      series[b] += cum - assigned;
      assigned = cum;
    }
  }

  // Idle gaps per class between merged busy intervals.
  for (auto& [cls, intervals] : busy) {
    std::sort(intervals.begin(), intervals.end());
    std::int64_t cover_end = intervals.front().second;
    for (const auto& [s, e] : intervals) {
      if (s > cover_end) report.idle_gaps.push_back({cls, cover_end, s});
      cover_end = std::max(cover_end, e);
    }
  }

  // Overlap ratio: sweep over class activity edges.
  std::vector<std::pair<std::int64_t, int>> edges;  // (time, +1/-1 per class interval)
  for (auto& [cls, intervals] : busy) {
    // Merge intervals per class first so a class counts once.
    std::vector<std::pair<std::int64_t, std::int64_t>> merged;
    for (const auto& iv : intervals) {
      if (!merged.empty() && iv.first <= merged.back().second)
        merged.back().second = std::max(merged.back().second, iv.second);
      else
        merged.push_back(iv);
    }
    for (const auto& [s, e] : merged) {
      edges.push_back({s, +1});
      edges.push_back({e, -1});
    }
  }
  std::sort(edges.begin(), edges.end());
  std::int64_t overlap_ns = 0;
  int active = 0;
  std::int64_t prev = lo;
  for (const auto& [t, d] : edges) {
    if (active >= 2) overlap_ns += t - prev;
    prev = t;
    active += d;
  }
  report.overlap_ratio = hi > lo ? static_cast<double>(overlap_ns) / static_cast<double>(hi - lo) : 0;

  // Effective bus bandwidth per node present in the trace.
  std::map<int, bool> nodes;
  for (const auto& ev : events) nodes[ev.node] = true;
  for (const auto& [node, _] : nodes)
    report.effective_bus_bandwidth_per_node[node] = effective_bus_bandwidth(events, node);

  return report;
}

void UtilizationReport::write_csv(std::ostream& out) const {
  out << "bucket_start_us,resource_class,bytes\n";
  for (const auto& [cls, series] : bytes_per_bucket) {
    for (std::size_t b = 0; b < series.size(); ++b) {
      const std::int64_t start = window_start_ns + static_cast<std::int64_t>(b) * bucket_ns;
      out << start / 1000 << '.' << (start % 1000000) % 1000 << ',' << cls << ',' << series[b]
          << '\n';
    }
  }
}

}  // namespace pystachio
