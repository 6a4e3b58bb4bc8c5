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
//
// Benchmark harness: workload generation, trace analytics, the theoretical
// minimum-runtime calculator, and manifest-driven experiment runs.

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pystachio/bench.hpp"
#include "pystachio/join_harness.hpp"
#include "pystachio/pipeline_harness.hpp"

using namespace pystachio;

namespace {

int cmd_tmin(double ssd_gib, double ssd_bw_gibs, double net_gib, double net_bw_gibs) {
  const double gib = 1024.0 * 1024.0 * 1024.0;
  TminInputs in;
  in.ssd_read_size_agg = static_cast<std::uint64_t>(ssd_gib * gib);
  in.ssd_read_bw_agg = ssd_bw_gibs * gib;
  in.net_recv_size_node = static_cast<std::uint64_t>(net_gib * gib);
  in.net_bw = net_bw_gibs * gib;
  std::printf("t_min_seconds=%.6f\n", t_min(in));
  return 0;
}

int cmd_gen(const std::string& kind, const std::string& out, int devices, int nodes,
            std::uint64_t seed, double scale, std::uint64_t build_rows, std::uint64_t probe_rows,
            double hit_ratio, const std::string& codec) {
  GenWorkloadSpec spec;
  spec.kind = kind == "synthetic" ? WorkloadKind::SyntheticJoin : WorkloadKind::TpchAnalog;
  spec.out_dir = out;
  spec.devices = devices;
  spec.nodes = nodes;
  spec.seed = seed;
  spec.scale = scale;
  spec.synthetic = SyntheticJoinSpec{build_rows, probe_rows, 3, hit_ratio, seed};
  spec.codec = codec_from_string(codec);
  const std::string manifest = gen_workload(spec);
  std::printf("manifest: %s\n", manifest.c_str());
  return 0;
}

int cmd_analyze(const std::string& trace_path, const std::string& out_csv,
                std::int64_t bucket_us) {
  auto events = Trace::read_csv_file(trace_path);
  auto report = analyze_trace(events, bucket_us * 1000);
  std::printf("window_ms=%.3f overlap_ratio=%.3f\n",
              (report.window_end_ns - report.window_start_ns) / 1e6, report.overlap_ratio);
  for (const auto& [cls, bytes] : report.total_bytes)
    std::printf("class=%s total_bytes=%" PRIu64 "\n", cls.c_str(), bytes);
  for (const auto& [node, bw] : report.effective_bus_bandwidth_per_node)
    std::printf("node=%d effective_bus_bandwidth_mbps=%.2f\n", node, bw / 1e6);
  std::printf("idle_gaps=%zu\n", report.idle_gaps.size());
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    report.write_csv(out);
    std::printf("series written to %s\n", out_csv.c_str());
  }
  return 0;
}

/// Experiment manifest: {"experiments":[{name, kind: join|pipeline, ...}]}.
/// Join entries take variant/nodes/rows; pipeline entries take plan/data/
/// mode/nodes. Results append one CSV row per (experiment, seed).
int cmd_run(const std::string& manifest_path, const std::string& results_csv) {
  std::ifstream in(manifest_path);
  if (!in) throw IoFailure("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  in >> manifest;
  std::ofstream out(results_csv);
  out << "experiment,kind,seed,runtime_ms,result_rows,effective_bw_node0_mbps\n";
  for (const auto& exp : manifest.at("experiments")) {
    const std::string name = exp.at("name").get<std::string>();
    const std::string kind = exp.value("kind", std::string("join"));
    std::vector<std::uint64_t> seeds;
    if (exp.contains("seeds"))
      for (const auto& s : exp["seeds"]) seeds.push_back(s.get<std::uint64_t>());
    else
      seeds.push_back(exp.value("seed", 42));
    for (const std::uint64_t seed : seeds) {
      if (kind == "join") {
        SimJoinOptions opts;
        opts.spec.variant = join_variant_from_string(exp.value("variant", std::string("deferred")));
        opts.spec.node_count = exp.value("nodes", 2);
        opts.spec.chunk_rows = exp.value("chunk_rows", 32768);
        opts.spec.build_key = "bk";
        opts.spec.probe_key = "pk";
        opts.workload = SyntheticJoinSpec{exp.value("build_rows", 120000ull),
                                          exp.value("probe_rows", 320000ull),
                                          exp.value("cols", 4) - 1, exp.value("hit_ratio", 0.5),
                                          seed};
        opts.collect_rows = false;
        auto r = run_sim_join(opts);
        std::uint64_t rows = 0;
        for (const auto& st : r.per_node) rows += st.result_rows;
        out << name << ",join," << seed << ',' << r.runtime_ns / 1e6 << ',' << rows << ','
            << effective_bus_bandwidth(r.trace->events(), 0) / 1e6 << '\n';
      } else if (kind == "pipeline") {
        SimPipelineOptions opts;
        std::ifstream plan(exp.at("plan").get<std::string>());
        if (!plan) throw IoFailure("cannot open plan");
        opts.plan_json = {std::istreambuf_iterator<char>(plan), std::istreambuf_iterator<char>()};
        opts.data_root = exp.at("data").get<std::string>();
        opts.nodes = exp.value("nodes", 2);
        opts.mode = exec_mode_from_string(exp.value("mode", std::string("overlapped")));
        auto r = run_sim_pipeline(opts);
        std::size_t rows = 0;
        for (const auto& n : r.per_node) rows += n.rows.size();
        out << name << ",pipeline," << seed << ',' << r.runtime_ns / 1e6 << ',' << rows << ','
            << effective_bus_bandwidth(r.trace->events(), 0) / 1e6 << '\n';
      } else {
        throw InvalidInput("unknown experiment kind: " + kind);
      }
    }
  }
  std::printf("results written to %s\n", results_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pystachio benchmark harness"};
  app.require_subcommand(1);

  auto* tmin = app.add_subcommand("tmin", "theoretical minimum runtime");
  double ssd_gib = 12.8, ssd_bw = 12.8, net_gib = 0, net_bw = 22.3;
  tmin->add_option("--ssd-gib", ssd_gib, "compressed input total, GiB");
  tmin->add_option("--ssd-bw-gibs", ssd_bw, "aggregate SSD bandwidth, GiB/s");
  tmin->add_option("--net-gib", net_gib, "per-node received volume, GiB");
  tmin->add_option("--net-bw-gibs", net_bw, "network bandwidth, GiB/s");

  auto* gen = app.add_subcommand("gen", "generate workload files");
  std::string kind = "tpch", out_dir = "data", codec = "block";
  int devices = 2, nodes = 2;
  std::uint64_t seed = 42, build_rows = 120000, probe_rows = 320000;
  double scale = 0.01, hit_ratio = 0.5;
  gen->add_option("--kind", kind, "tpch|synthetic");
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--devices", devices, "device directories");
  gen->add_option("--nodes", nodes, "node shards");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--scale", scale, "tpch scale fraction");
  gen->add_option("--build-rows", build_rows, "synthetic build rows");
  gen->add_option("--probe-rows", probe_rows, "synthetic probe rows");
  gen->add_option("--hit-ratio", hit_ratio, "synthetic hit ratio");
  gen->add_option("--codec", codec, "identity|block");

  auto* analyze = app.add_subcommand("analyze", "utilization report from a trace CSV");
  std::string trace_path, series_csv;
  std::int64_t bucket_us = 10'000;
  analyze->add_option("trace", trace_path, "trace CSV")->required();
  analyze->add_option("--series-out", series_csv, "bucketed throughput CSV");
  analyze->add_option("--bucket-us", bucket_us, "bucket width, microseconds");

  auto* runex = app.add_subcommand("run", "run experiments from a manifest");
  std::string manifest_path, results_csv = "results.csv";
  runex->add_option("manifest", manifest_path, "experiment manifest JSON")->required();
  runex->add_option("--out", results_csv, "results CSV");

  CLI11_PARSE(app, argc, argv);
  try {
    if (tmin->parsed()) return cmd_tmin(ssd_gib, ssd_bw, net_gib, net_bw);
    if (gen->parsed())
      return cmd_gen(kind, out_dir, devices, nodes, seed, scale, build_rows, probe_rows, hit_ratio,
                     codec);
    if (analyze->parsed()) return cmd_analyze(trace_path, series_csv, bucket_us);
    return cmd_run(manifest_path, results_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
