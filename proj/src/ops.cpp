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

#include "pystachio/ops.hpp"

#include <algorithm>
#include <bit>

namespace pystachio {

namespace {

void fill_stats(OpStats* stats, std::uint64_t work, std::uint64_t out, std::uint64_t allocs) {
  if (stats == nullptr) return;
  stats->work_bytes = work;
  stats->out_bytes = out;
  stats->alloc_count = allocs;
}

ChunkBatch gather(const ChunkBatch& batch, const std::vector<std::uint32_t>& rows, MemoryPool& pool,
                  const std::string& tag) {
  std::vector<Column> cols;
  cols.reserve(batch.column_count());
  for (std::size_t c = 0; c < batch.column_count(); ++c) {
    const auto src = batch.column(c).raw();
    std::vector<std::uint64_t> raw;
    raw.reserve(rows.size());
    for (std::uint32_t r : rows) raw.push_back(src[r]);
    cols.emplace_back(batch.schema().fields[c].type, std::move(raw));
  }
  return ChunkBatch::tracked(pool, batch.schema(), std::move(cols), tag);
}

}  // namespace

ChunkBatch filter(const ChunkBatch& batch, const Predicate& pred, MemoryPool& pool, OpStats* stats) {
  BoundPredicate bound(pred, batch.schema());
  std::vector<std::uint32_t> keep;
  keep.reserve(batch.row_count());
  for (std::size_t r = 0; r < batch.row_count(); ++r)
    if (bound.matches(batch, r)) keep.push_back(static_cast<std::uint32_t>(r));
  ChunkBatch out = gather(batch, keep, pool, batch.source_tag());
  fill_stats(stats, batch.byte_size() + out.byte_size(), out.byte_size(), batch.column_count());
  return out;
}

std::vector<ChunkBatch> partition(const ChunkBatch& batch, const std::string& key_column,
                                  std::uint32_t node_count, HashKind hash, MemoryPool& pool,
                                  OpStats* stats) {
  const std::size_t key_idx = batch.schema().require(key_column);
  if (batch.schema().fields[key_idx].type != LogicalType::Int64)
    throw InvalidInput("partition key must be int64: " + key_column);
  const auto keys = batch.column(key_idx).int64_view();

  std::vector<std::vector<std::uint32_t>> rows_per_part(node_count);
  for (std::size_t r = 0; r < keys.size(); ++r)
    rows_per_part[partition_of(keys[r], node_count, hash)].push_back(static_cast<std::uint32_t>(r));

  std::vector<ChunkBatch> parts;
  parts.reserve(node_count);
  std::uint64_t out_bytes = 0;
  for (std::uint32_t p = 0; p < node_count; ++p) {
    parts.push_back(gather(batch, rows_per_part[p], pool, batch.source_tag()));
    out_bytes += parts.back().byte_size();
  }
  fill_stats(stats, batch.byte_size() + out_bytes, out_bytes,
             static_cast<std::uint64_t>(node_count) * batch.column_count());
  return parts;
}

ChunkBatch concat(const Schema& schema, const std::vector<ChunkBatch>& batches, MemoryPool& pool,
                  OpStats* stats) {
  std::size_t total_rows = 0;
  for (const auto& b : batches) total_rows += b.row_count();
  std::vector<Column> cols;
  cols.reserve(schema.column_count());
  for (std::size_t c = 0; c < schema.column_count(); ++c) {
    std::vector<std::uint64_t> raw;
    raw.reserve(total_rows);
    for (const auto& b : batches) {
      const auto src = b.column(c).raw();
      raw.insert(raw.end(), src.begin(), src.end());
    }
    cols.emplace_back(schema.fields[c].type, std::move(raw));
  }
  ChunkBatch out = ChunkBatch::tracked(pool, schema, std::move(cols), "concat");
  fill_stats(stats, out.byte_size(), out.byte_size(), schema.column_count());
  return out;
}

std::uint64_t HashTable::estimate_bytes(std::uint64_t rows, std::uint64_t payload_columns) {
  const std::uint64_t buckets = std::bit_ceil(std::max<std::uint64_t>(2 * rows, 16));
  return rows * (1 + payload_columns + 1) * kValueBytes + buckets * kValueBytes;
}

HashTable HashTable::build(const std::vector<ChunkBatch>& batches, const std::string& key_column,
                           HashKind hash, MemoryPool& pool, OpStats* stats) {
  HashTable table;
  table.hash_ = hash;

  Schema schema;
  for (const auto& b : batches) {
    if (b.column_count() > 0) {
      schema = b.schema();
      break;
    }
  }
  std::size_t key_idx = schema.fields.empty() ? 0 : schema.require(key_column);
  for (std::size_t c = 0; c < schema.fields.size(); ++c)
    if (c != key_idx) table.payload_schema_.fields.push_back(schema.fields[c]);

  std::size_t total_rows = 0;
  std::uint64_t in_bytes = 0;
  for (const auto& b : batches) {
    total_rows += b.row_count();
    in_bytes += b.byte_size();
  }

  const std::uint64_t table_bytes = estimate_bytes(total_rows, table.payload_schema_.fields.size());
  table.lease_ = pool.acquire(table_bytes);

  table.keys_.reserve(total_rows);
  table.payload_.resize(table.payload_schema_.fields.size());
  for (auto& col : table.payload_) col.reserve(total_rows);
  for (const auto& b : batches) {
    if (b.row_count() == 0) continue;
    const auto keys = b.column(key_idx).int64_view();
    table.keys_.insert(table.keys_.end(), keys.begin(), keys.end());
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < b.column_count(); ++c) {
      if (c == key_idx) continue;
      const auto src = b.column(c).raw();
      table.payload_[out_c].insert(table.payload_[out_c].end(), src.begin(), src.end());
      ++out_c;
    }
  }

  const std::uint64_t buckets = std::bit_ceil(std::max<std::uint64_t>(2 * total_rows, 16));
  table.bucket_mask_ = buckets - 1;
  table.bucket_heads_.assign(buckets, -1);
  table.next_.assign(total_rows, -1);
  for (std::size_t r = 0; r < total_rows; ++r) {
    const std::uint64_t b = hash_key(table.keys_[r], hash) & table.bucket_mask_;
    table.next_[r] = table.bucket_heads_[b];
    table.bucket_heads_[b] = static_cast<std::int64_t>(r);
  }

  fill_stats(stats, in_bytes + table_bytes, table_bytes, 3 + table.payload_.size());
  return table;
}

std::vector<std::size_t> HashTable::lookup(std::int64_t key) const {
  std::vector<std::size_t> rows;
  if (bucket_heads_.empty()) return rows;
  for (std::int64_t r = bucket_heads_[hash_key(key, hash_) & bucket_mask_]; r >= 0; r = next_[r])
    if (keys_[r] == key) rows.push_back(static_cast<std::size_t>(r));
  // Chains prepend, so reverse for build-side insertion order.
  std::reverse(rows.begin(), rows.end());
  return rows;
}

std::uint64_t HashTable::byte_size() const { return lease_.bytes(); }

ChunkBatch HashTable::probe(const ChunkBatch& probe_batch, const std::string& probe_key,
                            MemoryPool& pool, OpStats* stats) const {
  const std::size_t key_idx = probe_batch.schema().require(probe_key);
  if (probe_batch.schema().fields[key_idx].type != LogicalType::Int64)
    throw InvalidInput("probe key must be int64: " + probe_key);
  const auto keys = probe_batch.column(key_idx).int64_view();

  std::vector<std::size_t> build_rows;
  std::vector<std::uint32_t> probe_rows;
  for (std::size_t r = 0; r < keys.size(); ++r) {
    if (bucket_heads_.empty()) break;
    for (std::int64_t b = bucket_heads_[hash_key(keys[r], hash_) & bucket_mask_]; b >= 0;
         b = next_[b]) {
      if (keys_[b] == keys[r]) {
        build_rows.push_back(static_cast<std::size_t>(b));
        probe_rows.push_back(static_cast<std::uint32_t>(r));
      }
    }
  }

  // Result schema: build payload columns, then probe columns. Collisions get
  // a probe-side suffix.
  Schema out_schema = payload_schema_;
  for (const auto& f : probe_batch.schema().fields) {
    Field g = f;
    if (out_schema.index_of(g.name)) g.name += "_p";
    out_schema.fields.push_back(g);
  }

  std::vector<Column> cols;
  cols.reserve(out_schema.column_count());
  for (std::size_t c = 0; c < payload_.size(); ++c) {
    std::vector<std::uint64_t> raw;
    raw.reserve(build_rows.size());
    for (std::size_t r : build_rows) raw.push_back(payload_[c][r]);
    cols.emplace_back(payload_schema_.fields[c].type, std::move(raw));
  }
  for (std::size_t c = 0; c < probe_batch.column_count(); ++c) {
    const auto src = probe_batch.column(c).raw();
    std::vector<std::uint64_t> raw;
    raw.reserve(probe_rows.size());
    for (std::uint32_t r : probe_rows) raw.push_back(src[r]);
    cols.emplace_back(probe_batch.schema().fields[c].type, std::move(raw));
  }

  ChunkBatch out = ChunkBatch::tracked(pool, std::move(out_schema), std::move(cols), "probe");
  fill_stats(stats, probe_batch.byte_size() + out.byte_size(), out.byte_size(),
             out.column_count());
  return out;
}

}  // namespace pystachio
