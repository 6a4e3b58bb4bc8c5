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
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pystachio/errors.hpp"
#include "pystachio/memory_pool.hpp"

namespace pystachio {

/// Column element types. Both are fixed 8-byte values; strings are assumed
/// to be dictionary-encoded to integers upstream.
enum class LogicalType : std::uint8_t { Int64 = 0, Float64 = 1 };

constexpr std::size_t kValueBytes = 8;

inline const char* to_string(LogicalType t) { return t == LogicalType::Int64 ? "int64" : "float64"; }

struct Field {
  std::string name;
  LogicalType type = LogicalType::Int64;
  bool operator==(const Field&) const = default;
};

struct Schema {
  std::vector<Field> fields;

  std::size_t column_count() const { return fields.size(); }
  std::size_t row_bytes() const { return fields.size() * kValueBytes; }
  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (fields[i].name == name) return i;
    return std::nullopt;
  }
  std::size_t require(const std::string& name) const {
    auto idx = index_of(name);
    if (!idx) throw UnknownColumn(name);
    return *idx;
  }
  bool operator==(const Schema&) const = default;
};

/// One column of a chunk: a contiguous run of 8-byte values. Values are kept
/// as raw 64-bit words; typed access goes through the span views.
class Column {
 public:
  Column() = default;
  Column(LogicalType type, std::vector<std::uint64_t> raw) : type_(type), raw_(std::move(raw)) {}

  static Column of_int64(std::vector<std::int64_t> v) {
    std::vector<std::uint64_t> raw(v.size());
    std::memcpy(raw.data(), v.data(), v.size() * kValueBytes);
    return Column(LogicalType::Int64, std::move(raw));
  }
  static Column of_float64(std::vector<double> v) {
    std::vector<std::uint64_t> raw(v.size());
    std::memcpy(raw.data(), v.data(), v.size() * kValueBytes);
    return Column(LogicalType::Float64, std::move(raw));
  }

  LogicalType type() const { return type_; }
  std::size_t size() const { return raw_.size(); }
  std::uint64_t byte_size() const { return raw_.size() * kValueBytes; }

  std::span<const std::int64_t> int64_view() const {
    return {reinterpret_cast<const std::int64_t*>(raw_.data()), raw_.size()};
  }
  std::span<const double> float64_view() const {
    return {reinterpret_cast<const double*>(raw_.data()), raw_.size()};
  }
  std::span<const std::uint64_t> raw() const { return raw_; }
  std::uint64_t raw_at(std::size_t i) const { return raw_[i]; }
  void push_raw(std::uint64_t word) { raw_.push_back(word); }
  void reserve(std::size_t n) { raw_.reserve(n); }

  const void* data() const { return raw_.data(); }

 private:
  LogicalType type_ = LogicalType::Int64;
  std::vector<std::uint64_t> raw_;
};

/// A horizontal slice of a table: the unit of all pipelining. Immutable once
/// built; a batch may carry a memory-pool lease covering its column bytes.
class ChunkBatch {
 public:
  ChunkBatch() = default;
  ChunkBatch(Schema schema, std::vector<Column> columns, std::string source_tag = {})
      : schema_(std::move(schema)), columns_(std::move(columns)), source_tag_(std::move(source_tag)) {
    validate();
  }

  /// Builds a batch whose bytes are charged against `pool`. Throws
  /// MemoryExceeded before taking ownership when the budget is blown.
  static ChunkBatch tracked(MemoryPool& pool, Schema schema, std::vector<Column> columns,
                            std::string source_tag = {}) {
    std::uint64_t bytes = 0;
    for (const auto& c : columns) bytes += c.byte_size();
    auto lease = pool.acquire(bytes);
    ChunkBatch b(std::move(schema), std::move(columns), std::move(source_tag));
    b.lease_ = std::move(lease);
    return b;
  }

  const Schema& schema() const { return schema_; }
  std::size_t row_count() const { return columns_.empty() ? 0 : columns_[0].size(); }
  std::size_t column_count() const { return columns_.size(); }
  const Column& column(std::size_t i) const { return columns_[i]; }
  const Column& column(const std::string& name) const { return columns_[schema_.require(name)]; }
  const std::string& source_tag() const { return source_tag_; }

  std::uint64_t byte_size() const {
    std::uint64_t n = 0;
    for (const auto& c : columns_) n += c.byte_size();
    return n;
  }

  bool empty() const { return row_count() == 0; }

  /// Drops the pool lease (bytes remain live on the heap but leave the
  /// budget), used when handing results out of the engine.
  void untrack() { lease_.release(); }

 private:
  void validate() const {
    const std::size_t rows = row_count();
    if (columns_.size() != schema_.fields.size())
      throw InvalidInput("batch column count does not match schema");
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].size() != rows) throw InvalidInput("ragged batch: column row counts differ");
      if (columns_[i].type() != schema_.fields[i].type)
        throw InvalidInput("column type does not match schema");
    }
  }

  Schema schema_;
  std::vector<Column> columns_;
  std::string source_tag_;
  PoolLease lease_;
};

}  // namespace pystachio
