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

#include "pystachio/scan.hpp"

#include <algorithm>
#include <cstring>

#include "pystachio/ops.hpp"

namespace pystachio {

IoPool::IoPool(ExecEnv& env, int workers, std::int32_t first_stream_id)
    : env_(env), workers_(workers), mon_(env.rt.make_monitor()) {
  if (workers < 1) throw InvalidInput("io pool needs at least one worker");
  streams_.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i)
    streams_.push_back(std::make_unique<ExecStream>(first_stream_id + i, env_));
  for (int i = 0; i < workers; ++i) {
    handles_.push_back(env_.rt.spawn("io_worker" + std::to_string(i),
                                     [this, i] { worker_loop(static_cast<std::size_t>(i)); }));
  }
}

IoPool::~IoPool() { close_and_join(); }

void IoPool::submit(const std::string& lane, ChunkQueue* gate,
                    std::function<void(ExecStream&)> job) {
  MonitorLock lock(*mon_);
  if (closed_) throw InvalidInput("submit on closed io pool");
  auto [it, inserted] = lanes_.try_emplace(lane);
  if (inserted) lane_order_.push_back(lane);
  it->second.push_back(Job{gate, std::move(job)});
  ++queued_;
  mon_->notify_all();
}

void IoPool::watch_queue(ChunkQueue& queue) {
  queue.set_space_callback([this] {
    MonitorLock lock(*mon_);
    mon_->notify_all();
  });
}

void IoPool::close_and_join() {
  {
    MonitorLock lock(*mon_);
    if (closed_ && handles_.empty()) return;
    closed_ = true;
    mon_->notify_all();
  }
  for (auto& h : handles_) h->join();
  handles_.clear();
  for (auto& s : streams_) s->close();
}

void IoPool::worker_loop(std::size_t index) {
  while (true) {
    std::function<void(ExecStream&)> job;
    {
      MonitorLock lock(*mon_);
      while (true) {
        if (queued_ == 0 && closed_) return;
        bool found = false;
        // Round-robin over scan lanes, skipping lanes whose output queue is
        // full (their jobs wait; the worker stays available).
        for (std::size_t probe = 0; probe < lane_order_.size() && !found; ++probe) {
          auto& lane = lanes_[lane_order_[cursor_ % lane_order_.size()]];
          cursor_ = (cursor_ + 1) % lane_order_.size();
          if (lane.empty()) continue;
          Job& head = lane.front();
          if (head.gate != nullptr && !head.gate->try_reserve()) continue;
          job = std::move(head.run);
          lane.pop_front();
          --queued_;
          found = true;
        }
        if (found) break;
        mon_->wait();
      }
    }
    job(*streams_[index]);
  }
}

TableMeta fetch_metadata(ExecEnv& env, DeviceModel& device, const std::string& path,
                         std::int64_t parse_ns, std::int32_t stream_id) {
  const std::uint64_t size = device.file_size(path);
  if (size < 20) throw CorruptFooter("file too small");
  auto trailer = device.read(env, stream_id, path, size - 12, 12, "meta_read");
  std::uint64_t footer_len;
  std::memcpy(&footer_len, trailer.data(), 8);
  if (footer_len + 16 > size) throw CorruptFooter("footer length exceeds file size");
  auto footer = device.read(env, stream_id, path, size - 12 - footer_len, footer_len, "meta_read");

  const std::int64_t start = env.rt.now_ns();
  footer.insert(footer.end(), trailer.begin(), trailer.end());
  TableMeta meta = parse_footer_bytes(footer, size, size - 12 - footer_len);
  env.rt.charge_ns(parse_ns);
  env.trace.record(TraceEvent{env.node_id, stream_id, "meta_parse", start, env.rt.now_ns(),
                              footer_len, "compute"});
  return meta;
}

namespace {

struct Projection {
  Schema schema;
  std::vector<std::size_t> file_columns;
};

Projection project(const TableMeta& meta, const std::vector<std::string>& columns) {
  Projection p;
  if (columns.empty()) {
    p.schema = meta.schema;
    for (std::size_t c = 0; c < meta.schema.column_count(); ++c) p.file_columns.push_back(c);
    return p;
  }
  for (std::size_t c = 0; c < meta.schema.column_count(); ++c) {
    if (std::find(columns.begin(), columns.end(), meta.schema.fields[c].name) != columns.end()) {
      p.schema.fields.push_back(meta.schema.fields[c]);
      p.file_columns.push_back(c);
    }
  }
  for (const auto& name : columns)
    if (!p.schema.index_of(name)) throw UnknownColumn(name);
  return p;
}

/// Decodes one row group's compressed column chunks into columns.
std::vector<Column> decode_group(const TableMeta& meta, const RowGroupMeta& group,
                                 const Projection& proj,
                                 const std::vector<std::vector<std::uint8_t>>& compressed) {
  std::vector<Column> cols;
  cols.reserve(proj.file_columns.size());
  for (std::size_t i = 0; i < proj.file_columns.size(); ++i) {
    const auto& chunk = group.columns[proj.file_columns[i]];
    auto bytes = codec_decompress(meta.codec, compressed[i], chunk.uncompressed_size);
    std::vector<std::uint64_t> words(group.row_count);
    std::memcpy(words.data(), bytes.data(), bytes.size());
    cols.emplace_back(proj.schema.fields[i].type, std::move(words));
  }
  return cols;
}

struct ScanState {
  explicit ScanState(Runtime& rt) : ticket(std::make_shared<Ticket>(rt)), mon(rt.make_monitor()) {}
  TicketPtr ticket;
  std::shared_ptr<Monitor> mon;
  std::size_t remaining = 0;
  std::exception_ptr failure;
};

}  // namespace

TicketPtr scan_chunks(ExecEnv& env, const std::string& path, DeviceModel& device,
                      MetadataCache& cache, ScanOptions opts, IoPool& pool, ChunkQueue& out) {
  std::shared_ptr<const TableMeta> meta = cache.lookup(path);
  if (meta == nullptr) {
    cache.insert(path, fetch_metadata(env, device, path, opts.metadata_parse_ns));
    meta = cache.lookup(path);
  }

  const auto groups = prune(*meta, opts.predicate);
  auto state = std::make_shared<ScanState>(env.rt);
  state->remaining = groups.size();
  if (groups.empty()) {
    out.producer_done();
    state->ticket->complete(env.rt.now_ns());
    return state->ticket;
  }

  const double decode_rate =
      opts.decode_rate_override > 0
          ? opts.decode_rate_override
          : (meta->codec == Codec::Identity ? env.cost.decode_identity_bytes_per_s
                                            : env.cost.decode_block_bytes_per_s);

  pool.watch_queue(out);
  for (const std::size_t g : groups) {
    pool.submit(path, &out, [&env, &device, &out, path, meta, g, opts, decode_rate,
                             state](ExecStream& ws) {
      bool reservation_used = false;
      try {
        TableMeta local_meta;
        const TableMeta* m = meta.get();
        if (!opts.use_metadata_cache) {
          // The naive reader's per-read metadata cost.
          local_meta = fetch_metadata(env, device, path, opts.metadata_parse_ns, ws.id());
          m = &local_meta;
        }
        const auto proj = project(*m, opts.columns);
        const auto& group = m->row_groups[g];

        std::vector<std::vector<std::uint8_t>> compressed;
        compressed.reserve(proj.file_columns.size());
        std::uint64_t uncompressed_total = 0;
        for (std::size_t c : proj.file_columns) {
          const auto& chunk = group.columns[c];
          compressed.push_back(
              device.read(env, ws.id(), path, chunk.offset, chunk.compressed_size, "read"));
          uncompressed_total += chunk.uncompressed_size;
        }

        std::vector<Column> cols;
        OpDesc decode_op;
        decode_op.kind = OpKind::Decode;
        decode_op.data_dependent = true;
        decode_op.rate_bytes_per_s = decode_rate;
        decode_op.body = [&] {
          cols = decode_group(*m, group, proj, compressed);
          OpResult r;
          r.work_bytes = uncompressed_total;
          r.out_bytes = uncompressed_total;
          r.alloc_count = cols.size();
          return r;
        };
        ws.issue(std::move(decode_op));

        ChunkBatch filtered;
        OpDesc filter_op;
        filter_op.kind = OpKind::Filter;
        filter_op.data_dependent = true;
        filter_op.body = [&] {
          ChunkBatch raw = ChunkBatch::tracked(env.pool, proj.schema, std::move(cols),
                                               path + "#" + std::to_string(g));
          OpStats stats;
          filtered = filter(raw, opts.predicate, env.pool, &stats);
          OpResult r;
          r.work_bytes = stats.work_bytes;
          r.out_bytes = stats.out_bytes;
          r.alloc_count = stats.alloc_count;
          return r;
        };
        ws.issue(std::move(filter_op));
        if (opts.transform && filtered.row_count() > 0)
          filtered = opts.transform(std::move(filtered), ws);

        if (filtered.row_count() > 0) {
          out.enqueue_reserved(std::move(filtered));
        } else {
          out.cancel_reservation();
        }
        reservation_used = true;
      } catch (...) {
        if (!reservation_used) out.cancel_reservation();
        MonitorLock lock(*state->mon);
        if (!state->failure) state->failure = std::current_exception();
      }
      bool last = false;
      {
        MonitorLock lock(*state->mon);
        last = (--state->remaining == 0);
      }
      if (last) {
        out.producer_done();
        state->ticket->complete(env.rt.now_ns(), state->failure);
      }
    });
  }
  return state->ticket;
}

ChunkBatch read_blocking(ExecEnv& env, const std::string& path, DeviceModel& device,
                         const ScanOptions& opts) {
  constexpr std::int32_t kStream = 0;
  const TableMeta meta = fetch_metadata(env, device, path, opts.metadata_parse_ns, kStream);
  const auto groups = prune(meta, opts.predicate);
  const auto proj = project(meta, opts.columns);

  // Full I/O phase: every surviving chunk is materialized before any decode.
  std::uint64_t compressed_total = 0;
  std::uint64_t uncompressed_total = 0;
  for (std::size_t g : groups) {
    for (std::size_t c : proj.file_columns) {
      compressed_total += meta.row_groups[g].columns[c].compressed_size;
      uncompressed_total += meta.row_groups[g].columns[c].uncompressed_size;
    }
  }
  auto io_lease = env.pool.acquire(compressed_total);
  // The decoded selection must also fit; reserving now is what makes the
  // blocking reader fail on budgets smaller than the materialized table.
  auto decode_lease = env.pool.acquire(uncompressed_total);

  std::vector<std::vector<std::vector<std::uint8_t>>> buffers;  // per group, per column
  for (std::size_t g : groups) {
    std::vector<std::vector<std::uint8_t>> group_bufs;
    for (std::size_t c : proj.file_columns) {
      const auto& chunk = meta.row_groups[g].columns[c];
      group_bufs.push_back(
          device.read(env, kStream, path, chunk.offset, chunk.compressed_size, "read"));
    }
    buffers.push_back(std::move(group_bufs));
  }

  // Decode phase: no storage events from here to return.
  std::vector<ChunkBatch> decoded;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& group = meta.row_groups[groups[i]];
    const std::int64_t start = env.rt.now_ns();
    auto cols = decode_group(meta, group, proj, buffers[i]);
    const double rate = opts.decode_rate_override > 0 ? opts.decode_rate_override
                        : meta.codec == Codec::Identity ? env.cost.decode_identity_bytes_per_s
                                                        : env.cost.decode_block_bytes_per_s;
    env.rt.charge_ns(static_cast<std::int64_t>(
        static_cast<double>(group.row_count * kValueBytes * proj.file_columns.size()) / rate *
        1e9));
    env.trace.record(TraceEvent{env.node_id, kStream, "decode", start, env.rt.now_ns(),
                                group.row_count * kValueBytes * proj.file_columns.size(),
                                "compute"});
    decoded.push_back(ChunkBatch(proj.schema, std::move(cols), path));
  }
  buffers.clear();
  io_lease.release();

  const std::int64_t fstart = env.rt.now_ns();
  ChunkBatch all = concat(proj.schema, decoded, env.pool);
  decoded.clear();
  decode_lease.release();
  OpStats stats;
  ChunkBatch result = filter(all, opts.predicate, env.pool, &stats);
  env.rt.charge_ns(static_cast<std::int64_t>(
      static_cast<double>(stats.work_bytes) / env.cost.compute_bytes_per_s * 1e9));
  env.trace.record(TraceEvent{env.node_id, kStream, "filter", fstart, env.rt.now_ns(),
                              stats.out_bytes, "compute"});
  return result;
}

}  // namespace pystachio
