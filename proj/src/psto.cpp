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

#include "pystachio/psto.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <filesystem>

namespace pystachio {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'T', 'O'};
constexpr std::uint32_t kFooterVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  std::string str() {
    const std::uint32_t len = u32();
    if (len > 4096) throw CorruptFooter("implausible name length");
    const auto* p = take(len);
    return std::string(reinterpret_cast<const char*>(p), len);
  }
  bool exhausted() const { return off_ == n_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (off_ + n > n_) throw CorruptFooter("footer truncated");
    const auto* p = p_ + off_;
    off_ += n;
    return p;
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t off_ = 0;
};

std::uint64_t min_raw_of(LogicalType t, const std::vector<std::uint64_t>& words, std::size_t lo,
                         std::size_t hi, bool want_min) {
  if (t == LogicalType::Int64) {
    std::int64_t best;
    std::memcpy(&best, &words[lo], 8);
    for (std::size_t i = lo; i < hi; ++i) {
      std::int64_t v;
      std::memcpy(&v, &words[i], 8);
      best = want_min ? std::min(best, v) : std::max(best, v);
    }
    std::uint64_t out;
    std::memcpy(&out, &best, 8);
    return out;
  }
  double best;
  std::memcpy(&best, &words[lo], 8);
  for (std::size_t i = lo; i < hi; ++i) {
    double v;
    std::memcpy(&v, &words[i], 8);
    best = want_min ? std::min(best, v) : std::max(best, v);
  }
  std::uint64_t out;
  std::memcpy(&out, &best, 8);
  return out;
}

}  // namespace

const char* to_string(Codec c) {
  return c == Codec::Identity ? "identity" : "block";
}

Codec codec_from_string(const std::string& s) {
  if (s == "identity") return Codec::Identity;
  if (s == "block") return Codec::GeneralPurposeBlock;
  throw InvalidInput("unknown codec: " + s);
}

std::vector<std::uint8_t> codec_compress(Codec codec, const void* data, std::size_t len) {
  if (codec == Codec::Identity) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    return {p, p + len};
  }
  uLongf bound = compressBound(static_cast<uLong>(len));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, static_cast<const Bytef*>(data), static_cast<uLong>(len), 1) !=
      Z_OK)
    throw IoFailure("deflate failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> codec_decompress(Codec codec, const std::vector<std::uint8_t>& data,
                                           std::size_t uncompressed_len) {
  if (codec == Codec::Identity) return data;
  std::vector<std::uint8_t> out(uncompressed_len);
  uLongf dest_len = static_cast<uLongf>(uncompressed_len);
  if (uncompress(out.data(), &dest_len, data.data(), static_cast<uLong>(data.size())) != Z_OK ||
      dest_len != uncompressed_len)
    throw IoFailure("inflate failed");
  return out;
}

TableWriter::TableWriter(const std::string& path, Schema schema, std::uint64_t row_group_rows,
                         Codec codec)
    : path_(path), schema_(std::move(schema)), row_group_rows_(row_group_rows), codec_(codec) {
  if (row_group_rows_ < 1) throw InvalidInput("row_group_rows must be >= 1");
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoFailure("cannot open for writing: " + path);
  out_.write(kMagic, 4);
  offset_ = 4;
  pending_.resize(schema_.column_count());
  meta_.schema = schema_;
  meta_.codec = codec_;
}

std::uint64_t TableWriter::rows_for_group_bytes(const Schema& schema, std::uint64_t bytes) {
  const std::uint64_t row = schema.row_bytes();
  return std::max<std::uint64_t>(1, bytes / std::max<std::uint64_t>(row, 1));
}

void TableWriter::append(const ChunkBatch& batch) {
  if (batch.schema() != schema_) throw InvalidInput("writer schema mismatch");
  for (std::size_t c = 0; c < schema_.column_count(); ++c) {
    const auto raw = batch.column(c).raw();
    pending_[c].insert(pending_[c].end(), raw.begin(), raw.end());
  }
  while (!pending_.empty() && pending_[0].size() >= row_group_rows_) flush_group(row_group_rows_);
}

void TableWriter::flush_group(std::size_t rows) {
  RowGroupMeta group;
  group.row_count = rows;
  for (std::size_t c = 0; c < schema_.column_count(); ++c) {
    auto& col = pending_[c];
    ColumnChunkMeta chunk;
    chunk.offset = offset_;
    chunk.uncompressed_size = rows * kValueBytes;
    chunk.min_raw = min_raw_of(schema_.fields[c].type, col, 0, rows, true);
    chunk.max_raw = min_raw_of(schema_.fields[c].type, col, 0, rows, false);
    auto compressed = codec_compress(codec_, col.data(), rows * kValueBytes);
    chunk.compressed_size = compressed.size();
    out_.write(reinterpret_cast<const char*>(compressed.data()),
               static_cast<std::streamsize>(compressed.size()));
    offset_ += compressed.size();
    col.erase(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(rows));
    group.columns.push_back(chunk);
  }
  meta_.row_groups.push_back(std::move(group));
}

std::vector<std::uint8_t> encode_footer(const TableMeta& meta) {
  ByteWriter w;
  w.u32(kFooterVersion);
  w.u8(static_cast<std::uint8_t>(meta.codec));
  w.u32(static_cast<std::uint32_t>(meta.schema.column_count()));
  for (const auto& f : meta.schema.fields) {
    w.str(f.name);
    w.u8(static_cast<std::uint8_t>(f.type));
  }
  w.u32(static_cast<std::uint32_t>(meta.row_groups.size()));
  for (const auto& g : meta.row_groups) {
    w.u64(g.row_count);
    for (const auto& c : g.columns) {
      w.u64(c.offset);
      w.u64(c.compressed_size);
      w.u64(c.uncompressed_size);
      w.u64(c.min_raw);
      w.u64(c.max_raw);
    }
  }
  return w.take();
}

TableMeta TableWriter::finish() {
  if (finished_) throw IoFailure("finish() called twice");
  finished_ = true;
  if (!pending_.empty() && !pending_[0].empty()) flush_group(pending_[0].size());
  auto footer = encode_footer(meta_);
  out_.write(reinterpret_cast<const char*>(footer.data()),
             static_cast<std::streamsize>(footer.size()));
  const std::uint64_t footer_len = footer.size();
  out_.write(reinterpret_cast<const char*>(&footer_len), 8);
  out_.write(kMagic, 4);
  out_.close();
  if (!out_) throw IoFailure("write failed: " + path_);
  meta_.footer_bytes = footer_len;
  return meta_;
}

TableMeta parse_footer_bytes(const std::vector<std::uint8_t>& tail, std::uint64_t file_size,
                             std::uint64_t tail_offset) {
  // tail must cover [footer][u64 len][magic].
  if (tail.size() < 12) throw CorruptFooter("file shorter than the footer trailer");
  if (std::memcmp(tail.data() + tail.size() - 4, kMagic, 4) != 0)
    throw CorruptFooter("bad tail magic");
  std::uint64_t footer_len;
  std::memcpy(&footer_len, tail.data() + tail.size() - 12, 8);
  if (footer_len + 16 > file_size) throw CorruptFooter("footer length exceeds file size");
  if (footer_len + 12 > tail.size()) throw CorruptFooter("tail read misses the footer");
  const std::uint8_t* footer = tail.data() + tail.size() - 12 - footer_len;

  ByteReader r(footer, footer_len);
  TableMeta meta;
  if (r.u32() != kFooterVersion) throw CorruptFooter("unsupported footer version");
  const std::uint8_t codec = r.u8();
  if (codec > 1) throw CorruptFooter("unknown codec tag");
  meta.codec = static_cast<Codec>(codec);
  const std::uint32_t ncols = r.u32();
  for (std::uint32_t c = 0; c < ncols; ++c) {
    Field f;
    f.name = r.str();
    const std::uint8_t t = r.u8();
    if (t > 1) throw CorruptFooter("unknown logical type");
    f.type = static_cast<LogicalType>(t);
    meta.schema.fields.push_back(std::move(f));
  }
  const std::uint32_t ngroups = r.u32();
  const std::uint64_t data_end = tail_offset + tail.size() - 12 - footer_len;
  for (std::uint32_t g = 0; g < ngroups; ++g) {
    RowGroupMeta group;
    group.row_count = r.u64();
    for (std::uint32_t c = 0; c < ncols; ++c) {
      ColumnChunkMeta chunk;
      chunk.offset = r.u64();
      chunk.compressed_size = r.u64();
      chunk.uncompressed_size = r.u64();
      chunk.min_raw = r.u64();
      chunk.max_raw = r.u64();
      if (chunk.offset < 4 || chunk.offset + chunk.compressed_size > data_end)
        throw CorruptFooter("column chunk outside file bounds");
      if (chunk.uncompressed_size != group.row_count * kValueBytes)
        throw CorruptFooter("uncompressed size disagrees with row count");
      if (meta.schema.fields[c].type == LogicalType::Int64) {
        std::int64_t lo, hi;
        std::memcpy(&lo, &chunk.min_raw, 8);
        std::memcpy(&hi, &chunk.max_raw, 8);
        if (group.row_count > 0 && lo > hi) throw CorruptFooter("zone stats inverted");
      } else {
        double lo, hi;
        std::memcpy(&lo, &chunk.min_raw, 8);
        std::memcpy(&hi, &chunk.max_raw, 8);
        if (group.row_count > 0 && lo > hi) throw CorruptFooter("zone stats inverted");
      }
      group.columns.push_back(chunk);
    }
    meta.row_groups.push_back(std::move(group));
  }
  if (!r.exhausted()) throw CorruptFooter("trailing bytes in footer");
  meta.footer_bytes = footer_len;
  return meta;
}

TableMeta parse_footer_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open: " + path);
  in.seekg(0, std::ios::end);
  const std::uint64_t size = static_cast<std::uint64_t>(in.tellg());
  if (size < 20) throw CorruptFooter("file too small");
  char head[4];
  in.seekg(0);
  in.read(head, 4);
  if (std::memcmp(head, kMagic, 4) != 0) throw CorruptFooter("bad head magic");
  // Read a generous tail, then re-read if the footer is larger.
  std::uint64_t tail_len = std::min<std::uint64_t>(size, 64 * 1024);
  std::vector<std::uint8_t> tail(tail_len);
  in.seekg(static_cast<std::streamoff>(size - tail_len));
  in.read(reinterpret_cast<char*>(tail.data()), static_cast<std::streamsize>(tail_len));
  std::uint64_t footer_len;
  std::memcpy(&footer_len, tail.data() + tail.size() - 12, 8);
  if (footer_len + 12 > tail_len && footer_len + 16 <= size) {
    tail_len = footer_len + 12;
    tail.resize(tail_len);
    in.seekg(static_cast<std::streamoff>(size - tail_len));
    in.read(reinterpret_cast<char*>(tail.data()), static_cast<std::streamsize>(tail_len));
  }
  return parse_footer_bytes(tail, size, size - tail_len);
}

std::vector<std::size_t> prune(const TableMeta& meta, const Predicate& pred) {
  std::vector<std::size_t> keep;
  for (std::size_t g = 0; g < meta.row_groups.size(); ++g) {
    bool may = true;
    for (const auto& atom : pred.atoms) {
      const std::size_t c = meta.schema.require(atom.column);
      const auto& chunk = meta.row_groups[g].columns[c];
      if (meta.schema.fields[c].type == LogicalType::Int64) {
        std::int64_t lo, hi;
        std::memcpy(&lo, &chunk.min_raw, 8);
        std::memcpy(&hi, &chunk.max_raw, 8);
        if (!atom.interval_may_match(lo, hi)) may = false;
      } else {
        double lo, hi;
        std::memcpy(&lo, &chunk.min_raw, 8);
        std::memcpy(&hi, &chunk.max_raw, 8);
        if (!atom.interval_may_match(lo, hi)) may = false;
      }
      if (!may) break;
    }
    if (may) keep.push_back(g);
  }
  return keep;
}

}  // namespace pystachio
