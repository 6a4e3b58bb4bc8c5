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
// Python bindings over the main engine operations: the minimum-runtime
// calculator, PSTO table writing/scanning, workload generation, simulated
// distributed joins, plan execution, and trace analytics.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "pystachio/bench.hpp"
#include "pystachio/join_harness.hpp"
#include "pystachio/pipeline_harness.hpp"

namespace py = pybind11;
using namespace pystachio;

namespace {

Schema schema_from_columns(const py::dict& columns) {
  Schema schema;
  for (const auto& item : columns) {
    const std::string name = py::cast<std::string>(item.first);
    const py::sequence seq = py::cast<py::sequence>(item.second);
    LogicalType type = LogicalType::Int64;
    if (py::len(seq) > 0 && py::isinstance<py::float_>(seq[0])) type = LogicalType::Float64;
    schema.fields.push_back(Field{name, type});
  }
  return schema;
}

ChunkBatch batch_from_dict(const py::dict& columns) {
  Schema schema = schema_from_columns(columns);
  std::vector<Column> cols;
  std::size_t i = 0;
  for (const auto& item : columns) {
    const py::sequence seq = py::cast<py::sequence>(item.second);
    if (schema.fields[i].type == LogicalType::Int64) {
      std::vector<std::int64_t> v;
      v.reserve(py::len(seq));
      for (const auto& x : seq) v.push_back(py::cast<std::int64_t>(x));
      cols.push_back(Column::of_int64(std::move(v)));
    } else {
      std::vector<double> v;
      v.reserve(py::len(seq));
      for (const auto& x : seq) v.push_back(py::cast<double>(x));
      cols.push_back(Column::of_float64(std::move(v)));
    }
    ++i;
  }
  return ChunkBatch(schema, std::move(cols));
}

py::dict batch_to_dict(const ChunkBatch& batch) {
  py::dict out;
  for (std::size_t c = 0; c < batch.column_count(); ++c) {
    py::list values;
    const Column& col = batch.column(c);
    if (col.type() == LogicalType::Int64) {
      for (auto v : col.int64_view()) values.append(v);
    } else {
      for (auto v : col.float64_view()) values.append(v);
    }
    out[py::str(batch.schema().fields[c].name)] = values;
  }
  return out;
}

Predicate predicate_from_list(const py::object& pred) {
  Predicate out;
  if (pred.is_none()) return out;
  for (const auto& atom : py::cast<py::sequence>(pred)) {
    const py::tuple t = py::cast<py::tuple>(atom);
    const std::string col = py::cast<std::string>(t[0]);
    const CompareOp op = compare_op_from_string(py::cast<std::string>(t[1]));
    if (py::isinstance<py::float_>(t[2]))
      out.and_atom(col, op, py::cast<double>(t[2]));
    else
      out.and_atom(col, op, py::cast<std::int64_t>(t[2]));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(pystachio, m) {
  m.doc() = "distributed out-of-core analytical query engine with an "
            "overlap-centric simulated backend";

  m.def(
      "tmin",
      [](std::uint64_t ssd_size, double ssd_bw, std::uint64_t net_recv, double net_bw) {
        return t_min(TminInputs{ssd_size, ssd_bw, net_recv, net_bw});
      },
      py::arg("ssd_read_size_agg"), py::arg("ssd_read_bw_agg"), py::arg("net_recv_size_node"),
      py::arg("net_bw"), "max(storage read time, per-node network receive time) in seconds");

  m.def(
      "write_table",
      [](const std::string& path, const py::dict& columns, std::uint64_t row_group_rows,
         const std::string& codec) {
        ChunkBatch batch = batch_from_dict(columns);
        TableWriter writer(path, batch.schema(), row_group_rows, codec_from_string(codec));
        writer.append(batch);
        auto meta = writer.finish();
        return meta.row_groups.size();
      },
      py::arg("path"), py::arg("columns"), py::arg("row_group_rows") = 65536,
      py::arg("codec") = "identity", "writes a PSTO table; returns the row-group count");

  m.def(
      "inspect",
      [](const std::string& path) {
        const TableMeta meta = parse_footer_file(path);
        py::dict out;
        out["rows"] = meta.total_rows();
        out["codec"] = to_string(meta.codec);
        out["row_groups"] = meta.row_groups.size();
        py::list schema;
        for (const auto& f : meta.schema.fields)
          schema.append(py::make_tuple(f.name, to_string(f.type)));
        out["schema"] = schema;
        return out;
      },
      py::arg("path"));

  m.def(
      "scan",
      [](const std::string& path, const py::object& predicate) {
        RealRuntime rt;
        Trace trace;
        MemoryPool pool;
        NodeExecState state;
        SimCostConfig cost;
        ExecEnv env{rt, trace, 0, pool, cost, StallFaultConfig{}, state};
        DeviceConfig cfg{"dev0", 0, 0, DeviceBacking::RealFile};
        DeviceModel dev(cfg);
        ScanOptions opts;
        opts.predicate = predicate_from_list(predicate);
        return batch_to_dict(read_blocking(env, path, dev, opts));
      },
      py::arg("path"), py::arg("predicate") = py::none(),
      "reads a PSTO table into a dict of column lists");

  m.def(
      "run_join_sim",
      [](std::uint64_t build_rows, std::uint64_t probe_rows, double hit_ratio, int nodes,
         const std::string& variant, std::uint64_t chunk_rows, std::uint64_t seed) {
        SimJoinOptions opts;
        opts.spec.variant = join_variant_from_string(variant);
        opts.spec.node_count = nodes;
        opts.spec.chunk_rows = chunk_rows;
        opts.spec.build_key = "bk";
        opts.spec.probe_key = "pk";
        opts.workload = SyntheticJoinSpec{build_rows, probe_rows, 2, hit_ratio, seed};
        auto outcome = run_sim_join(opts);
        py::dict out;
        out["result_rows"] = outcome.rows.size();
        out["runtime_us"] = outcome.runtime_ns / 1000.0;
        out["bytes_received_node0"] = outcome.per_node[0].bytes_received;
        return out;
      },
      py::arg("build_rows"), py::arg("probe_rows"), py::arg("hit_ratio") = 0.5,
      py::arg("nodes") = 2, py::arg("variant") = "deferred", py::arg("chunk_rows") = 32768,
      py::arg("seed") = 42, "runs a simulated distributed join; returns summary stats");

  m.def(
      "gen_workload",
      [](const std::string& kind, const std::string& out_dir, int devices, int nodes, double scale,
         std::uint64_t seed) {
        GenWorkloadSpec spec;
        spec.kind = kind == "synthetic" ? WorkloadKind::SyntheticJoin : WorkloadKind::TpchAnalog;
        spec.out_dir = out_dir;
        spec.devices = devices;
        spec.nodes = nodes;
        spec.scale = scale;
        spec.seed = seed;
        return gen_workload(spec);
      },
      py::arg("kind"), py::arg("out_dir"), py::arg("devices") = 2, py::arg("nodes") = 2,
      py::arg("scale") = 0.01, py::arg("seed") = 42, "writes workload files; returns the manifest path");

  m.def(
      "run_plan_sim",
      [](const std::string& plan_json, const std::string& data_root, int nodes,
         const std::string& mode) {
        SimPipelineOptions opts;
        opts.plan_json = plan_json;
        opts.data_root = data_root;
        opts.nodes = nodes;
        opts.mode = exec_mode_from_string(mode);
        auto outcome = run_sim_pipeline(opts);
        py::dict out;
        std::size_t rows = 0;
        for (const auto& r : outcome.per_node) rows += r.rows.size();
        out["result_rows"] = rows;
        out["runtime_us"] = outcome.runtime_ns / 1000.0;
        return out;
      },
      py::arg("plan_json"), py::arg("data_root"), py::arg("nodes") = 2,
      py::arg("mode") = "overlapped", "executes a plan on the simulated backend");

  m.def(
      "analyze_trace_csv",
      [](const std::string& path) {
        auto report = analyze_trace(Trace::read_csv_file(path));
        py::dict out;
        out["overlap_ratio"] = report.overlap_ratio;
        py::dict totals;
        for (const auto& [cls, bytes] : report.total_bytes) totals[py::str(cls)] = bytes;
        out["total_bytes"] = totals;
        py::dict bw;
        for (const auto& [node, v] : report.effective_bus_bandwidth_per_node)
          bw[py::int_(node)] = v;
        out["effective_bus_bandwidth"] = bw;
        return out;
      },
      py::arg("path"), "utilization summary of a trace CSV");
}
