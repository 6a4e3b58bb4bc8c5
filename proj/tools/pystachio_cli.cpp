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
// Query runner: executes a declarative plan over the simulated or socket
// backend in one of the four execution modes.

#include <sys/wait.h>
#include <unistd.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pystachio/pipeline_harness.hpp"

using namespace pystachio;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open plan: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void print_result(int node, const PipelineResult& r) {
  std::printf("node=%d rows=%zu runtime_ms=%.3f peak_mb=%.2f recv_mb=%.2f", node, r.rows.size(),
              r.runtime_ns() / 1e6, r.peak_bytes / 1048576.0, r.bytes_received / 1048576.0);
  for (const auto& [tag, hw] : r.queue_high_water) std::printf(" hw[%s]=%zu", tag.c_str(), hw);
  std::printf("\n");
}

int spawn_local(int argc, char** argv, int nodes, std::uint16_t base_port,
                const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string config_path = out_dir + "/cluster.json";
  ClusterConfig::loopback(nodes, base_port).to_json_file(config_path);
  std::vector<pid_t> pids;
  for (int node = 0; node < nodes; ++node) {
    const pid_t pid = ::fork();
    if (pid == 0) {
      std::vector<std::string> args;
      for (int i = 0; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--spawn-local") {
          ++i;  // skip its value too
          continue;
        }
        if (a.rfind("--spawn-local=", 0) == 0) continue;
        args.push_back(a);
      }
      args.push_back("--cluster");
      args.push_back(config_path);
      args.push_back("--node-id");
      args.push_back(std::to_string(node));
      std::vector<char*> cargs;
      for (auto& a : args) cargs.push_back(a.data());
      cargs.push_back(nullptr);
      ::execv("/proc/self/exe", cargs.data());
      _exit(127);
    }
    pids.push_back(pid);
  }
  int rc = 0;
  for (pid_t pid : pids) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) rc = 1;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pystachio query runner"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "execute a plan");

  std::string plan_path;
  std::string mode_name = "overlapped";
  std::string backend = "sim";
  std::string data_root = ".";
  int nodes = 2;
  std::uint64_t budget_mb = 0;
  std::string trace_path;
  std::string queue_trace_path;
  double device_bw = 512.0 * 1024 * 1024;
  double link_bw = 0;
  std::string cluster_path;
  int node_id = -1;
  int spawn_nodes = 0;
  std::uint16_t base_port = 7641;
  std::string out_dir = "pystachio-out";

  run->add_option("--plan", plan_path, "plan JSON file")->required();
  run->add_option("--mode", mode_name, "blocking|fastio|combined|overlapped");
  run->add_option("--backend", backend, "sim|sockets");
  run->add_option("--data", data_root, "data root directory ({data} in the plan)");
  run->add_option("--nodes", nodes, "node count (sim backend)");
  run->add_option("--budget-mb", budget_mb, "per-node memory budget, MiB (overrides the plan)");
  run->add_option("--trace", trace_path, "write the op trace CSV here");
  run->add_option("--queue-trace", queue_trace_path, "write the queue depth CSV here");
  run->add_option("--device-bw", device_bw, "simulated device bandwidth, bytes/s");
  run->add_option("--link-bw", link_bw, "simulated link bandwidth, bytes/s");
  run->add_option("--cluster", cluster_path, "cluster config JSON (sockets backend)");
  run->add_option("--node-id", node_id, "this node's id (sockets backend)");
  run->add_option("--spawn-local", spawn_nodes, "spawn N loopback node processes and wait");
  run->add_option("--base-port", base_port, "first loopback port for --spawn-local");
  run->add_option("--out-dir", out_dir, "artifacts directory for --spawn-local");
  CLI11_PARSE(app, argc, argv);

  try {
    std::string plan_json = read_file(plan_path);
    if (budget_mb > 0) {
      // Budget on the command line overrides the plan's.
      auto j = nlohmann::json::parse(plan_json);
      j["budget_mb"] = budget_mb;
      plan_json = j.dump();
    }
    const ExecMode mode = exec_mode_from_string(mode_name);

    if (backend == "sim") {
      SimPipelineOptions opts;
      opts.plan_json = plan_json;
      opts.data_root = data_root;
      opts.nodes = nodes;
      opts.mode = mode;
      opts.device_bandwidth_bytes_per_s = device_bw;
      if (link_bw > 0) opts.net.link_bandwidth_bytes_per_s = link_bw;
      auto outcome = run_sim_pipeline(opts);
      for (int n = 0; n < nodes; ++n) print_result(n, outcome.per_node[static_cast<std::size_t>(n)]);
      std::printf("end_to_end_runtime_ms=%.3f\n", outcome.runtime_ns / 1e6);
      if (!trace_path.empty()) outcome.trace->write_csv_file(trace_path);
      if (!queue_trace_path.empty()) outcome.queue_trace->write_csv_file(queue_trace_path);
      return 0;
    }
    if (backend != "sockets") throw InvalidInput("unknown backend: " + backend);
    if (spawn_nodes > 0) return spawn_local(argc, argv, spawn_nodes, base_port, out_dir);
    if (cluster_path.empty() || node_id < 0)
      throw InvalidInput("sockets backend needs --cluster and --node-id (or --spawn-local N)");
    ClusterConfig cluster = ClusterConfig::from_json_file(cluster_path);
    Trace trace;
    QueueTrace qtrace;
    auto result = run_socket_pipeline(plan_json, data_root, cluster, node_id, mode, &trace, &qtrace);
    print_result(node_id, result);
    if (!trace_path.empty()) trace.write_csv_file(trace_path);
    if (!queue_trace_path.empty()) qtrace.write_csv_file(queue_trace_path);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
