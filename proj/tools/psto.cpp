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
// PSTO file tool: write synthetic tables and inspect file metadata.

#include <cinttypes>
#include <cstdio>
#include <random>

#include <CLI11.hpp>

#include "pystachio/psto.hpp"

using namespace pystachio;

namespace {

int cmd_write(const std::string& out, std::uint64_t rows, std::uint64_t row_group_bytes,
              const std::string& codec_name, int cols, std::uint64_t seed) {
  Schema schema{{Field{"k", LogicalType::Int64}}};
  for (int c = 1; c < cols; ++c)
    schema.fields.push_back(Field{"v" + std::to_string(c), LogicalType::Int64});
  const Codec codec = codec_from_string(codec_name);
  TableWriter writer(out, schema, TableWriter::rows_for_group_bytes(schema, row_group_bytes),
                     codec);
  std::mt19937_64 rng(seed);
  const std::uint64_t batch_rows = 64 * 1024;
  for (std::uint64_t written = 0; written < rows;) {
    const std::uint64_t n = std::min(batch_rows, rows - written);
    std::vector<Column> columns;
    for (int c = 0; c < cols; ++c) {
      std::vector<std::int64_t> v(n);
      for (auto& x : v) x = static_cast<std::int64_t>(rng() % 1'000'000'000);
      columns.push_back(Column::of_int64(std::move(v)));
    }
    writer.append(ChunkBatch(schema, std::move(columns)));
    written += n;
  }
  auto meta = writer.finish();
  std::printf("wrote %s: %" PRIu64 " rows, %zu row groups, codec %s\n", out.c_str(),
              meta.total_rows(), meta.row_groups.size(), to_string(meta.codec));
  return 0;
}

int cmd_inspect(const std::string& path) {
  const TableMeta meta = parse_footer_file(path);
  std::printf("file: %s\ncodec: %s\nrows: %" PRIu64 "\nrow groups: %zu\nschema:\n", path.c_str(),
              to_string(meta.codec), meta.total_rows(), meta.row_groups.size());
  for (const auto& f : meta.schema.fields)
    std::printf("  %-24s %s\n", f.name.c_str(), to_string(f.type));
  std::printf("row groups (rows, per-column compressed/uncompressed bytes, zone stats):\n");
  for (std::size_t g = 0; g < meta.row_groups.size(); ++g) {
    const auto& group = meta.row_groups[g];
    std::printf("  group %zu: %" PRIu64 " rows\n", g, group.row_count);
    for (std::size_t c = 0; c < group.columns.size(); ++c) {
      const auto& chunk = group.columns[c];
      if (meta.schema.fields[c].type == LogicalType::Int64) {
        std::int64_t lo, hi;
        std::memcpy(&lo, &chunk.min_raw, 8);
        std::memcpy(&hi, &chunk.max_raw, 8);
        std::printf("    %-22s %8" PRIu64 "/%8" PRIu64 "  min %" PRId64 " max %" PRId64 "\n",
                    meta.schema.fields[c].name.c_str(), chunk.compressed_size,
                    chunk.uncompressed_size, lo, hi);
      } else {
        double lo, hi;
        std::memcpy(&lo, &chunk.min_raw, 8);
        std::memcpy(&hi, &chunk.max_raw, 8);
        std::printf("    %-22s %8" PRIu64 "/%8" PRIu64 "  min %g max %g\n",
                    meta.schema.fields[c].name.c_str(), chunk.compressed_size,
                    chunk.uncompressed_size, lo, hi);
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSTO chunked columnar file tool"};
  app.require_subcommand(1);

  auto* write = app.add_subcommand("write", "write a synthetic table");
  std::string out;
  std::uint64_t rows = 1'000'000;
  std::uint64_t row_group_bytes = 1024 * 1024;
  std::string codec = "identity";
  int cols = 4;
  std::uint64_t seed = 42;
  write->add_option("--out", out, "output file")->required();
  write->add_option("--rows", rows, "row count");
  write->add_option("--row-group-bytes", row_group_bytes, "uncompressed bytes per row group");
  write->add_option("--codec", codec, "identity|block");
  write->add_option("--cols", cols, "column count (first column is the key)");
  write->add_option("--seed", seed, "generator seed");

  auto* inspect = app.add_subcommand("inspect", "print file metadata");
  std::string path;
  inspect->add_option("file", path, "psto file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (write->parsed()) return cmd_write(out, rows, row_group_bytes, codec, cols, seed);
    return cmd_inspect(path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
