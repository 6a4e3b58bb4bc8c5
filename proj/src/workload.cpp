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

#include "pystachio/workload.hpp"

#include <algorithm>
#include <random>

namespace pystachio {

namespace {

Schema side_schema(const char* key, const char* payload_prefix, int payload_cols) {
  Schema s{{Field{key, LogicalType::Int64}}};
  for (int i = 0; i < payload_cols; ++i)
    s.fields.push_back(Field{payload_prefix + std::to_string(i), LogicalType::Int64});
  return s;
}

std::vector<Column> payload_columns(std::mt19937_64& rng, std::uint64_t rows, int cols) {
  std::vector<Column> out;
  for (int c = 0; c < cols; ++c) {
    std::vector<std::int64_t> v(rows);
    for (auto& x : v) x = static_cast<std::int64_t>(rng() % 1'000'000'000);
    out.push_back(Column::of_int64(std::move(v)));
  }
  return out;
}

}  // namespace

GeneratedTable gen_build_table(const SyntheticJoinSpec& spec) {
  std::mt19937_64 rng(spec.seed * 2654435761u + 1);
  GeneratedTable t;
  t.schema = side_schema("bk", "bp", spec.payload_cols);
  std::vector<std::int64_t> keys(spec.build_rows);
  for (std::uint64_t i = 0; i < spec.build_rows; ++i) keys[i] = static_cast<std::int64_t>(i);
  std::shuffle(keys.begin(), keys.end(), rng);
  t.columns.push_back(Column::of_int64(std::move(keys)));
  for (auto& c : payload_columns(rng, spec.build_rows, spec.payload_cols))
    t.columns.push_back(std::move(c));
  return t;
}

GeneratedTable gen_probe_table(const SyntheticJoinSpec& spec) {
  std::mt19937_64 rng(spec.seed * 2654435761u + 2);
  GeneratedTable t;
  t.schema = side_schema("pk", "pp", spec.payload_cols);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::int64_t> keys(spec.probe_rows);
  for (auto& k : keys) {
    if (spec.build_rows > 0 && coin(rng) < spec.hit_ratio) {
      k = static_cast<std::int64_t>(rng() % spec.build_rows);  // guaranteed present
    } else {
      k = static_cast<std::int64_t>(spec.build_rows + rng() % 1'000'000'000ull);  // miss range
    }
  }
  t.columns.push_back(Column::of_int64(std::move(keys)));
  for (auto& c : payload_columns(rng, spec.probe_rows, spec.payload_cols))
    t.columns.push_back(std::move(c));
  return t;
}

GeneratedTable slice_for_node(const GeneratedTable& table, int node, int node_count) {
  GeneratedTable out;
  out.schema = table.schema;
  const std::uint64_t rows = table.row_count();
  for (const auto& col : table.columns) {
    const auto raw = col.raw();
    std::vector<std::uint64_t> words;
    words.reserve(rows / static_cast<std::uint64_t>(node_count) + 1);
    for (std::uint64_t r = static_cast<std::uint64_t>(node); r < rows;
         r += static_cast<std::uint64_t>(node_count))
      words.push_back(raw[r]);
    out.columns.emplace_back(col.type(), std::move(words));
  }
  return out;
}

GeneratedTable gen_customer(const TpchAnalogSpec& spec) {
  const auto rows = static_cast<std::uint64_t>(150'000 * spec.scale);
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + 11);
  GeneratedTable t;
  t.schema = Schema{{Field{"c_custkey", LogicalType::Int64}, Field{"c_mktsegment", LogicalType::Int64}}};
  std::vector<std::int64_t> keys(rows), seg(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    keys[i] = static_cast<std::int64_t>(i);
    seg[i] = static_cast<std::int64_t>(rng() % 5);  // five market segments
  }
  t.columns.push_back(Column::of_int64(std::move(keys)));
  t.columns.push_back(Column::of_int64(std::move(seg)));
  return t;
}

GeneratedTable gen_orders(const TpchAnalogSpec& spec) {
  const auto customers = static_cast<std::uint64_t>(150'000 * spec.scale);
  const auto rows = static_cast<std::uint64_t>(1'500'000 * spec.scale);
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + 12);
  GeneratedTable t;
  t.schema = Schema{{Field{"o_orderkey", LogicalType::Int64},
                     Field{"o_custkey", LogicalType::Int64},
                     Field{"o_orderdate", LogicalType::Int64},
                     Field{"o_shippriority", LogicalType::Int64}}};
  std::vector<std::int64_t> key(rows), cust(rows), date(rows), prio(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    key[i] = static_cast<std::int64_t>(i);
    cust[i] = customers > 0 ? static_cast<std::int64_t>(rng() % customers) : 0;
    // Integer yyyymmdd spanning 1992-1998.
    date[i] = static_cast<std::int64_t>((1992 + rng() % 7) * 10000 + (1 + rng() % 12) * 100 +
                                        (1 + rng() % 28));
    prio[i] = static_cast<std::int64_t>(rng() % 5);
  }
  t.columns.push_back(Column::of_int64(std::move(key)));
  t.columns.push_back(Column::of_int64(std::move(cust)));
  t.columns.push_back(Column::of_int64(std::move(date)));
  t.columns.push_back(Column::of_int64(std::move(prio)));
  return t;
}

GeneratedTable gen_lineitem(const TpchAnalogSpec& spec) {
  const auto orders = static_cast<std::uint64_t>(1'500'000 * spec.scale);
  const auto rows = static_cast<std::uint64_t>(6'000'000 * spec.scale);
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + 13);
  GeneratedTable t;
  // Prices in cents and discounts in percent: integer-encoded like the rest
  // of the workload, so aggregates are exact under any addition order.
  t.schema = Schema{{Field{"l_orderkey", LogicalType::Int64},
                     Field{"l_extendedprice", LogicalType::Int64},
                     Field{"l_discount", LogicalType::Int64},
                     Field{"l_shipdate", LogicalType::Int64}}};
  std::vector<std::int64_t> key(rows), ship(rows), price(rows), disc(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    key[i] = orders > 0 ? static_cast<std::int64_t>(rng() % orders) : 0;
    price[i] = 90'000 + static_cast<std::int64_t>(rng() % 100'000);
    disc[i] = static_cast<std::int64_t>(rng() % 11);
    ship[i] = static_cast<std::int64_t>((1992 + rng() % 7) * 10000 + (1 + rng() % 12) * 100 +
                                        (1 + rng() % 28));
  }
  t.columns.push_back(Column::of_int64(std::move(key)));
  t.columns.push_back(Column::of_int64(std::move(price)));
  t.columns.push_back(Column::of_int64(std::move(disc)));
  t.columns.push_back(Column::of_int64(std::move(ship)));
  return t;
}

std::uint64_t write_table_file(const GeneratedTable& table, const std::string& path,
                               std::uint64_t row_group_rows, Codec codec) {
  TableWriter writer(path, table.schema, row_group_rows, codec);
  writer.append(table.to_batch());
  writer.finish();
  return table.row_count();
}

}  // namespace pystachio
