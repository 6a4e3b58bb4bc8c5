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
// PSTO chunked columnar file format, little-endian:
//   [magic "PSTO"][row-group column chunks...][TableMeta footer][u64 footer_len]["PSTO"]
// Each row group stores one compressed chunk per column plus min/max zone
// stats. The footer is self-describing and locatable from the file tail.

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pystachio/predicate.hpp"
#include "pystachio/types.hpp"

namespace pystachio {

enum class Codec : std::uint8_t { Identity = 0, GeneralPurposeBlock = 1 };

const char* to_string(Codec c);
Codec codec_from_string(const std::string& s);

struct ColumnChunkMeta {
  std::uint64_t offset = 0;
  std::uint64_t compressed_size = 0;
  std::uint64_t uncompressed_size = 0;
  std::uint64_t min_raw = 0;  // typed via the schema (int64 value or double bits)
  std::uint64_t max_raw = 0;
};

struct RowGroupMeta {
  std::uint64_t row_count = 0;
  std::vector<ColumnChunkMeta> columns;
};

struct TableMeta {
  Schema schema;
  Codec codec = Codec::Identity;
  std::vector<RowGroupMeta> row_groups;

  std::uint64_t total_rows() const {
    std::uint64_t n = 0;
    for (const auto& g : row_groups) n += g.row_count;
    return n;
  }
  std::uint64_t footer_bytes = 0;  // set by the parser; size of the footer blob
};

/// Streaming writer: rows are appended batch-wise and flushed into row
/// groups of `row_group_rows`.
class TableWriter {
 public:
  TableWriter(const std::string& path, Schema schema, std::uint64_t row_group_rows,
              Codec codec = Codec::Identity);
  void append(const ChunkBatch& batch);
  TableMeta finish();

  /// Row-group size helper: groups sized to roughly `bytes` of uncompressed
  /// data for the given schema (the 1 MiB default layout knob).
  static std::uint64_t rows_for_group_bytes(const Schema& schema, std::uint64_t bytes);

 private:
  void flush_group(std::size_t rows);

  std::string path_;
  Schema schema_;
  std::uint64_t row_group_rows_;
  Codec codec_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
  std::vector<std::vector<std::uint64_t>> pending_;  // column-major raw words
  TableMeta meta_;
  bool finished_ = false;
};

/// Parses the footer from raw bytes; `file_size` validates offsets. Throws
/// CorruptFooter on bad magic, truncation, or out-of-bounds offsets.
TableMeta parse_footer_bytes(const std::vector<std::uint8_t>& tail_bytes, std::uint64_t file_size,
                             std::uint64_t tail_offset);

/// Convenience direct-file parse (no device charge; used by tools/tests).
TableMeta parse_footer_file(const std::string& path);

/// Serialized footer blob for a meta (used by the writer; exposed for tests).
std::vector<std::uint8_t> encode_footer(const TableMeta& meta);

/// Row groups whose zone intervals may satisfy the predicate. Never drops a
/// group containing a qualifying row.
std::vector<std::size_t> prune(const TableMeta& meta, const Predicate& pred);

/// Block-codec helpers (zlib deflate).
std::vector<std::uint8_t> codec_compress(Codec codec, const void* data, std::size_t len);
std::vector<std::uint8_t> codec_decompress(Codec codec, const std::vector<std::uint8_t>& data,
                                           std::size_t uncompressed_len);

}  // namespace pystachio
