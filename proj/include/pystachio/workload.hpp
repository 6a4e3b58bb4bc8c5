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
#include <string>
#include <vector>

#include "pystachio/psto.hpp"
#include "pystachio/types.hpp"

namespace pystachio {

/// Synthetic join workload: a build table with distinct keys and a probe
/// table whose keys hit the build side with probability `hit_ratio`.
/// Generation is deterministic per seed.
struct SyntheticJoinSpec {
  std::uint64_t build_rows = 120'000;
  std::uint64_t probe_rows = 320'000;
  int payload_cols = 3;  // int64 payload columns per side, besides the key
  double hit_ratio = 0.5;
  std::uint64_t seed = 42;
};

struct GeneratedTable {
  Schema schema;
  std::vector<Column> columns;

  ChunkBatch to_batch() const {
    return ChunkBatch(schema, columns, "generated");
  }
  std::uint64_t row_count() const { return columns.empty() ? 0 : columns[0].size(); }
};

GeneratedTable gen_build_table(const SyntheticJoinSpec& spec);
GeneratedTable gen_probe_table(const SyntheticJoinSpec& spec);

/// Round-robin row slice of a table for one node (non-co-partitioned spread).
GeneratedTable slice_for_node(const GeneratedTable& table, int node, int node_count);

/// Deterministic TPC-H-shaped analog tables with integer-encoded columns.
/// scale 1.0 corresponds to 150k customers / 1.5M orders / 6M lineitems.
struct TpchAnalogSpec {
  double scale = 0.01;
  std::uint64_t seed = 42;
};

GeneratedTable gen_customer(const TpchAnalogSpec& spec);
GeneratedTable gen_orders(const TpchAnalogSpec& spec);
GeneratedTable gen_lineitem(const TpchAnalogSpec& spec);

/// Writes a table's node slice as a PSTO file; returns total rows written.
std::uint64_t write_table_file(const GeneratedTable& table, const std::string& path,
                               std::uint64_t row_group_rows, Codec codec);

}  // namespace pystachio
