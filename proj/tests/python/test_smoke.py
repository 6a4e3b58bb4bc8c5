# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import math

import pystachio


GIB = 1024**3


def test_tmin_worked_example():
    # 12.8 GiB of compressed data over 12.8 GiB/s of aggregate SSD bandwidth
    # is exactly one second when the network term is negligible.
    size = int(12.8 * GIB)
    assert pystachio.tmin(size, float(size), 0, 22.3 * GIB) == 1.0
    assert math.isclose(pystachio.tmin(size, 12.8 * GIB, 0, 22.3 * GIB), 1.0, rel_tol=1e-9)
    assert pystachio.tmin(GIB, 1.0 * GIB, 10 * GIB, 5.0 * GIB) == 2.0


def test_table_round_trip(tmp_path):
    path = str(tmp_path / "t.psto")
    cols = {"k": list(range(100)), "v": [float(i) / 7 for i in range(100)]}
    groups = pystachio.write_table(path, cols, row_group_rows=32, codec="block")
    assert groups == 4  # ceil(100 / 32)
    info = pystachio.inspect(path)
    assert info["rows"] == 100
    assert info["schema"] == [("k", "int64"), ("v", "float64")]
    back = pystachio.scan(path)
    assert back["k"] == cols["k"]
    assert all(math.isclose(a, b) for a, b in zip(back["v"], cols["v"]))
    filtered = pystachio.scan(path, [("k", "<", 10)])
    assert filtered["k"] == list(range(10))


def test_sim_join_matches_python_oracle():
    # Tiny deterministic workload cross-checked against the closed form:
    # hit_ratio=1.0 means every probe key matches exactly one build row.
    out = pystachio.run_join_sim(
        build_rows=500, probe_rows=1200, hit_ratio=1.0, nodes=2, variant="deferred",
        chunk_rows=128, seed=7,
    )
    assert out["result_rows"] == 1200
    assert out["runtime_us"] > 0


def test_plan_execution_modes_agree(tmp_path):
    data = str(tmp_path / "data")
    pystachio.gen_workload("tpch", data, devices=2, nodes=2, scale=0.002, seed=11)
    plan = {
        "buffer_target_bytes": 131072,
        "io_workers": 2,
        "scans": [
            {"table": "customer", "paths": ["{data}/dev*/customer.psto"], "replicated": True,
             "predicate": [{"col": "c_mktsegment", "op": "==", "value": 1}]},
            {"table": "orders", "paths": ["{data}/dev*/orders.node{node}.psto"],
             "predicate": [{"col": "o_orderdate", "op": "<", "value": 19960000}]},
            {"table": "lineitem", "paths": ["{data}/dev*/lineitem.node{node}.psto"],
             "predicate": [{"col": "l_shipdate", "op": ">", "value": 19930000}]},
        ],
        "joins": [
            {"id": "cust_orders", "build": "customer", "probe": "orders",
             "build_key": "c_custkey", "probe_key": "o_custkey", "mode": "replicated"},
            {"id": "result", "build": "cust_orders", "probe": "lineitem",
             "build_key": "o_orderkey", "probe_key": "l_orderkey", "mode": "shuffle"},
        ],
        "aggregate": {"group_by": "l_orderkey", "sums": ["l_extendedprice"]},
    }
    results = {
        mode: pystachio.run_plan_sim(json.dumps(plan), data, nodes=2, mode=mode)
        for mode in ("blocking", "fastio", "combined", "overlapped")
    }
    rows = {r["result_rows"] for r in results.values()}
    assert len(rows) == 1  # identical result cardinality across modes
    assert results["overlapped"]["runtime_us"] <= results["blocking"]["runtime_us"]
