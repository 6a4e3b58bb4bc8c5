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
// Reference implementations used as independent oracles. Everything here is
// deliberately the dumbest possible code path: scalar loops, associative
// arrays, and nested loops, sharing nothing with the engine internals.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pystachio/hashing.hpp"
#include "pystachio/predicate.hpp"
#include "pystachio/types.hpp"

namespace pystachio::testing {

using Row = std::vector<std::uint64_t>;

/// Batches are move-only (their pool lease is); helper for building vectors.
inline std::vector<ChunkBatch> batch_vec(ChunkBatch b) {
  std::vector<ChunkBatch> v;
  v.push_back(std::move(b));
  return v;
}

/// Flattens a batch into raw-word rows for multiset comparison.
inline std::vector<Row> rows_of(const ChunkBatch& batch) {
  std::vector<Row> rows(batch.row_count(), Row(batch.column_count()));
  for (std::size_t c = 0; c < batch.column_count(); ++c) {
    const auto raw = batch.column(c).raw();
    for (std::size_t r = 0; r < raw.size(); ++r) rows[r][c] = raw[r];
  }
  return rows;
}

inline std::vector<Row> rows_of_all(const std::vector<ChunkBatch>& batches) {
  std::vector<Row> rows;
  for (const auto& b : batches) {
    auto r = rows_of(b);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

inline bool multiset_equal(std::vector<Row> a, std::vector<Row> b) {
  if (a.size() != b.size()) return false;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

/// Scalar reference filter: evaluates every atom per row with no vector
/// plumbing shared with the engine.
inline std::vector<std::size_t> reference_filter_rows(const ChunkBatch& batch,
                                                      const Predicate& pred) {
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < batch.row_count(); ++r) {
    bool ok = true;
    for (const auto& atom : pred.atoms) {
      const std::size_t c = batch.schema().require(atom.column);
      if (batch.schema().fields[c].type == LogicalType::Int64) {
        if (!atom.matches_int(batch.column(c).int64_view()[r])) ok = false;
      } else {
        if (!atom.matches_float(batch.column(c).float64_view()[r])) ok = false;
      }
      if (!ok) break;
    }
    if (ok) keep.push_back(r);
  }
  return keep;
}

/// Scalar reference partitioner over explicit key vectors.
inline std::vector<std::vector<std::int64_t>> reference_partition(
    const std::vector<std::int64_t>& keys, std::uint32_t node_count, HashKind hash) {
  std::vector<std::vector<std::int64_t>> parts(node_count);
  for (auto k : keys) parts[partition_of(k, node_count, hash)].push_back(k);
  return parts;
}

/// Associative-array oracle: key -> payload rows, duplicates retained.
class JoinOracle {
 public:
  JoinOracle(const std::vector<std::int64_t>& keys, const std::vector<Row>& payload_rows) {
    for (std::size_t i = 0; i < keys.size(); ++i) map_.emplace(keys[i], payload_rows[i]);
  }

  std::vector<Row> lookup(std::int64_t key) const {
    std::vector<Row> out;
    auto [lo, hi] = map_.equal_range(key);
    for (auto it = lo; it != hi; ++it) out.push_back(it->second);
    return out;
  }

 private:
  std::multimap<std::int64_t, Row> map_;
};

/// Nested-loop inner join. Emits build payload words then probe row words,
/// which matches the engine's declared result layout.
inline std::vector<Row> nested_loop_join(const std::vector<std::int64_t>& build_keys,
                                         const std::vector<Row>& build_payload,
                                         const std::vector<std::int64_t>& probe_keys,
                                         const std::vector<Row>& probe_rows) {
  std::vector<Row> out;
  for (std::size_t p = 0; p < probe_keys.size(); ++p) {
    for (std::size_t b = 0; b < build_keys.size(); ++b) {
      if (build_keys[b] == probe_keys[p]) {
        Row row = build_payload[b];
        row.insert(row.end(), probe_rows[p].begin(), probe_rows[p].end());
        out.push_back(std::move(row));
      }
    }
  }
  return out;
}

/// Sort-merge oracle for instances where the nested loop would be too slow.
/// Cross-checked against nested_loop_join on small inputs in the tests.
inline std::vector<Row> sorted_join(const std::vector<std::int64_t>& build_keys,
                                    const std::vector<Row>& build_payload,
                                    const std::vector<std::int64_t>& probe_keys,
                                    const std::vector<Row>& probe_rows) {
  std::multimap<std::int64_t, const Row*> index;
  for (std::size_t b = 0; b < build_keys.size(); ++b)
    index.emplace(build_keys[b], &build_payload[b]);
  std::vector<Row> out;
  for (std::size_t p = 0; p < probe_keys.size(); ++p) {
    auto [lo, hi] = index.equal_range(probe_keys[p]);
    for (auto it = lo; it != hi; ++it) {
      Row row = *it->second;
      row.insert(row.end(), probe_rows[p].begin(), probe_rows[p].end());
      out.push_back(std::move(row));
    }
  }
  return out;
}

inline std::vector<std::int64_t> random_keys(std::mt19937_64& rng, std::size_t n,
                                             std::int64_t lo, std::int64_t hi) {
  std::uniform_int_distribution<std::int64_t> dist(lo, hi);
  std::vector<std::int64_t> keys(n);
  for (auto& k : keys) k = dist(rng);
  return keys;
}

}  // namespace pystachio::testing
