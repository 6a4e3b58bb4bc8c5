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

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pystachio/ops.hpp"

using namespace pystachio;
using namespace pystachio::testing;

namespace {

ChunkBatch int_batch(MemoryPool& pool, const std::string& name,
                     const std::vector<std::int64_t>& values) {
  Schema schema{{Field{name, LogicalType::Int64}}};
  return ChunkBatch::tracked(pool, schema, {Column::of_int64(values)});
}

ChunkBatch kv_batch(MemoryPool& pool, const std::vector<std::int64_t>& keys,
                    const std::vector<std::int64_t>& vals) {
  Schema schema{{Field{"k", LogicalType::Int64}, Field{"v", LogicalType::Int64}}};
  return ChunkBatch::tracked(pool, schema, {Column::of_int64(keys), Column::of_int64(vals)});
}

}  // namespace

TEST_CASE("filter keeps exactly the qualifying rows in order") {
  MemoryPool pool;
  auto batch = int_batch(pool, "k", {1, 2, 3});
  auto out = filter(batch, Predicate::atom("k", CompareOp::Lt, std::int64_t{3}), pool);
  REQUIRE(out.row_count() == 2);
  CHECK(out.column("k").int64_view()[0] == 1);
  CHECK(out.column("k").int64_view()[1] == 2);
}

TEST_CASE("filter of an empty batch yields an empty batch") {
  MemoryPool pool;
  auto batch = int_batch(pool, "k", {});
  auto out = filter(batch, Predicate::atom("k", CompareOp::Gt, std::int64_t{0}), pool);
  CHECK(out.row_count() == 0);
  CHECK(out.column_count() == 1);
}

TEST_CASE("filter on a missing column raises UnknownColumn") {
  MemoryPool pool;
  auto batch = int_batch(pool, "k", {1});
  CHECK_THROWS_AS(filter(batch, Predicate::atom("zzz", CompareOp::Lt, std::int64_t{1}), pool),
                  UnknownColumn);
}

TEST_CASE("filter selectivity lands within 3 sigma of the binomial and matches the scalar oracle") {
  MemoryPool pool;
  std::mt19937_64 rng(20250810);
  const std::size_t n = 10'000;
  const std::int64_t max = 1'000'000;
  const double p = 0.3;
  auto keys = random_keys(rng, n, 0, max - 1);
  auto batch = int_batch(pool, "k", keys);
  const auto pred =
      Predicate::atom("k", CompareOp::Lt, static_cast<std::int64_t>(p * static_cast<double>(max)));

  auto out = filter(batch, pred, pool);
  auto expected_rows = reference_filter_rows(batch, pred);
  REQUIRE(out.row_count() == expected_rows.size());
  for (std::size_t i = 0; i < expected_rows.size(); ++i)
    CHECK(out.column("k").int64_view()[i] == keys[expected_rows[i]]);

  const double sigma = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(static_cast<double>(out.row_count()) - p * n) <= 3 * sigma);
}

TEST_CASE("partition splits by identity hash mod node count") {
  MemoryPool pool;
  auto batch = int_batch(pool, "k", {3, 4, 7, 10});
  auto parts = partition(batch, "k", 2, HashKind::Identity, pool);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].column("k").int64_view()[0] == 4);
  CHECK(parts[0].column("k").int64_view()[1] == 10);
  CHECK(parts[1].column("k").int64_view()[0] == 3);
  CHECK(parts[1].column("k").int64_view()[1] == 7);
}

TEST_CASE("partition with one node is the identity") {
  MemoryPool pool;
  auto batch = int_batch(pool, "k", {5, 6, 7});
  auto parts = partition(batch, "k", 1, HashKind::MultiplyShift, pool);
  REQUIRE(parts.size() == 1);
  CHECK(multiset_equal(rows_of(parts[0]), rows_of(batch)));
}

TEST_CASE("partition of 50k random keys matches the scalar reference partitioner") {
  MemoryPool pool;
  std::mt19937_64 rng(7);
  auto keys = random_keys(rng, 50'000, -1'000'000, 1'000'000);
  auto batch = int_batch(pool, "k", keys);
  auto parts = partition(batch, "k", 4, HashKind::MultiplyShift, pool);
  auto expected = reference_partition(keys, 4, HashKind::MultiplyShift);
  REQUIRE(parts.size() == 4);
  std::size_t total = 0;
  for (std::size_t p = 0; p < 4; ++p) {
    const auto got = parts[p].column("k").int64_view();
    REQUIRE(got.size() == expected[p].size());
    // Order must be preserved within each partition, so exact compare.
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expected[p][i]);
    total += got.size();
  }
  CHECK(total == keys.size());
}

TEST_CASE("hash table lookup returns payload rows; duplicates retained") {
  MemoryPool pool;
  auto build = kv_batch(pool, {1, 2}, {10, 20});
  auto table = HashTable::build(batch_vec(std::move(build)), "k", HashKind::MultiplyShift, pool);
  auto rows = table.lookup(2);
  REQUIRE(rows.size() == 1);
  CHECK(table.payload_at(0, rows[0]) == 20);

  auto dup = kv_batch(pool, {5, 5}, {1, 2});
  auto dup_table = HashTable::build(batch_vec(std::move(dup)), "k", HashKind::MultiplyShift, pool);
  CHECK(dup_table.lookup(5).size() == 2);
}

TEST_CASE("hash table agrees with the associative-array oracle on 20k random rows") {
  MemoryPool pool;
  std::mt19937_64 rng(99);
  const std::size_t n = 20'000;
  auto keys = random_keys(rng, n, 0, 5'000);  // plenty of duplicates
  std::vector<std::int64_t> vals(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = static_cast<std::int64_t>(i);
  auto build = kv_batch(pool, keys, vals);
  auto table = HashTable::build(batch_vec(std::move(build)), "k", HashKind::MultiplyShift, pool);

  std::vector<Row> payload(n);
  for (std::size_t i = 0; i < n; ++i) payload[i] = {static_cast<std::uint64_t>(vals[i])};
  JoinOracle oracle(keys, payload);

  for (std::int64_t probe = 0; probe <= 5'000; probe += 13) {
    auto got = table.lookup(probe);
    auto want = oracle.lookup(probe);
    REQUIRE(got.size() == want.size());
    std::vector<Row> got_rows;
    for (auto r : got) got_rows.push_back({table.payload_at(0, r)});
    CHECK(multiset_equal(got_rows, want));
  }
}

TEST_CASE("probe emits build payload ++ probe columns per match") {
  MemoryPool pool;
  auto build = kv_batch(pool, {1, 2}, {100, 200});  // payload v: 100=A, 200=B
  auto table = HashTable::build(batch_vec(std::move(build)), "k", HashKind::MultiplyShift, pool);
  auto probe_batch = int_batch(pool, "pk", {2, 2, 3});
  auto out = table.probe(probe_batch, "pk", pool);
  REQUIRE(out.row_count() == 2);
  CHECK(out.column("v").int64_view()[0] == 200);
  CHECK(out.column("v").int64_view()[1] == 200);
  CHECK(out.column("pk").int64_view()[0] == 2);

  auto empty_probe = int_batch(pool, "pk", {});
  CHECK(table.probe(empty_probe, "pk", pool).row_count() == 0);

  auto no_match = int_batch(pool, "pk", {777});
  CHECK(table.probe(no_match, "pk", pool).row_count() == 0);
}

TEST_CASE("probe agrees with the nested-loop oracle on random data") {
  MemoryPool pool;
  std::mt19937_64 rng(1234);
  auto build_keys = random_keys(rng, 500, 0, 200);
  std::vector<std::int64_t> build_vals(build_keys.size());
  for (std::size_t i = 0; i < build_vals.size(); ++i) build_vals[i] = 1000 + (std::int64_t)i;
  auto probe_keys = random_keys(rng, 800, 0, 300);

  auto build = kv_batch(pool, build_keys, build_vals);
  auto table = HashTable::build(batch_vec(std::move(build)), "k", HashKind::MultiplyShift, pool);
  auto probe_batch = int_batch(pool, "pk", probe_keys);
  auto got = rows_of(table.probe(probe_batch, "pk", pool));

  std::vector<Row> build_payload(build_keys.size()), probe_rows(probe_keys.size());
  for (std::size_t i = 0; i < build_keys.size(); ++i)
    build_payload[i] = {static_cast<std::uint64_t>(build_vals[i])};
  for (std::size_t i = 0; i < probe_keys.size(); ++i)
    probe_rows[i] = {static_cast<std::uint64_t>(probe_keys[i])};
  auto want = nested_loop_join(build_keys, build_payload, probe_keys, probe_rows);
  CHECK(multiset_equal(got, want));

  // The two oracles agree with each other as well.
  auto want2 = sorted_join(build_keys, build_payload, probe_keys, probe_rows);
  CHECK(multiset_equal(want, want2));
}

TEST_CASE("pool accounting is exact across an operation sequence") {
  MemoryPool pool(1 << 20);
  CHECK(pool.allocated_bytes() == 0);
  {
    auto b1 = int_batch(pool, "k", {1, 2, 3, 4});
    CHECK(pool.allocated_bytes() == 32);
    {
      auto parts = partition(b1, "k", 2, HashKind::Identity, pool);
      std::uint64_t live = 32;
      for (const auto& p : parts) live += p.byte_size();
      CHECK(pool.allocated_bytes() == live);
    }
    CHECK(pool.allocated_bytes() == 32);
  }
  CHECK(pool.allocated_bytes() == 0);
  CHECK(pool.peak_bytes() == 64);
}

TEST_CASE("pool raises MemoryExceeded past capacity") {
  MemoryPool pool(100);
  auto lease = pool.acquire(60);
  CHECK_THROWS_AS((void)pool.acquire(41), MemoryExceeded);
  CHECK(pool.allocated_bytes() == 60);
}

TEST_CASE("per-allocation latency applies only in PerAllocation mode") {
  MemoryPool pooled(1 << 20, PoolMode::Pooled);
  CHECK(pooled.alloc_latency_ns(5) == 0);
  MemoryPool eager(1 << 20, PoolMode::PerAllocation, 20'000);
  CHECK(eager.alloc_latency_ns(5) == 100'000);
}
