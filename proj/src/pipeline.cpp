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

#include "pystachio/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace pystachio {

std::vector<ChunkBatch> buffer_chunks(std::vector<ChunkBatch> in, std::uint64_t target_bytes,
                                      MemoryPool& pool) {
  DynamicBuffer buf(target_bytes);
  std::vector<ChunkBatch> out;
  for (auto& b : in)
    if (auto emitted = buf.push(std::move(b), pool)) out.push_back(std::move(*emitted));
  if (auto rest = buf.flush(pool)) out.push_back(std::move(*rest));
  return out;
}

const char* to_string(ExecMode m) {
  switch (m) {
    case ExecMode::FullyBlocking: return "blocking";
    case ExecMode::FastIO: return "fastio";
    case ExecMode::Combined: return "combined";
    case ExecMode::Overlapped: return "overlapped";
  }
  return "?";
}

ExecMode exec_mode_from_string(const std::string& s) {
  if (s == "blocking") return ExecMode::FullyBlocking;
  if (s == "fastio") return ExecMode::FastIO;
  if (s == "combined") return ExecMode::Combined;
  if (s == "overlapped") return ExecMode::Overlapped;
  throw InvalidInput("unknown execution mode: " + s);
}

namespace {

/// Expands a single-component '*' wildcard (e.g. "{data}/dev*/t.psto").
std::vector<std::string> expand_glob(const std::string& pattern) {
  const auto star = pattern.find('*');
  if (star == std::string::npos)
    return std::filesystem::exists(pattern) ? std::vector<std::string>{pattern}
                                            : std::vector<std::string>{};
  const auto slash_before = pattern.rfind('/', star);
  const auto slash_after = pattern.find('/', star);
  const std::string dir = slash_before == std::string::npos ? "." : pattern.substr(0, slash_before);
  const std::string comp = pattern.substr(slash_before + 1, (slash_after == std::string::npos
                                                                 ? pattern.size()
                                                                 : slash_after) -
                                                                slash_before - 1);
  const std::string rest = slash_after == std::string::npos ? "" : pattern.substr(slash_after);
  const auto comp_star = comp.find('*');
  const std::string prefix = comp.substr(0, comp_star);
  const std::string suffix = comp.substr(comp_star + 1);
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < prefix.size() + suffix.size()) continue;
    if (name.rfind(prefix, 0) != 0) continue;
    if (!suffix.empty() && name.substr(name.size() - suffix.size()) != suffix) continue;
    for (auto& resolved : expand_glob(dir + "/" + name + rest)) out.push_back(std::move(resolved));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string substitute(std::string s, const std::string& key, const std::string& value) {
  std::size_t pos;
  while ((pos = s.find(key)) != std::string::npos) s.replace(pos, key.size(), value);
  return s;
}

Predicate predicate_from_json(const nlohmann::json& j) {
  Predicate pred;
  for (const auto& atom : j) {
    const std::string col = atom.at("col").get<std::string>();
    const CompareOp op = compare_op_from_string(atom.at("op").get<std::string>());
    const auto& v = atom.at("value");
    if (v.is_number_float())
      pred.and_atom(col, op, v.get<double>());
    else
      pred.and_atom(col, op, v.get<std::int64_t>());
  }
  return pred;
}

}  // namespace

QueryPlan QueryPlan::from_json_text(const std::string& text, const std::string& data_root,
                                    int node, int node_count) {
  nlohmann::json j = nlohmann::json::parse(text);
  QueryPlan plan;
  plan.buffer_target_bytes = j.value("buffer_target_bytes", plan.buffer_target_bytes);
  plan.memory_budget_bytes = j.value("memory_budget_bytes", plan.memory_budget_bytes);
  if (j.contains("budget_mb"))
    plan.memory_budget_bytes = j["budget_mb"].get<std::uint64_t>() * 1024 * 1024;
  plan.ht_estimate_bytes = j.value("ht_estimate_bytes", plan.ht_estimate_bytes);
  plan.io_workers = j.value("io_workers", plan.io_workers);
  for (const auto& s : j.at("scans")) {
    ScanNode scan;
    scan.table = s.at("table").get<std::string>();
    scan.replicated = s.value("replicated", false);
    for (const auto& p : s.at("paths")) {
      std::string path = substitute(p.get<std::string>(), "{data}", data_root);
      path = substitute(path, "{node}", std::to_string(node));
      path = substitute(path, "{nodes}", std::to_string(node_count));
      auto expanded = expand_glob(path);
      if (expanded.empty()) throw IoFailure("no files match scan path: " + path);
      for (auto& e : expanded) scan.paths.push_back(std::move(e));
    }
    if (s.contains("columns"))
      for (const auto& c : s["columns"]) scan.columns.push_back(c.get<std::string>());
    if (s.contains("predicate")) scan.predicate = predicate_from_json(s["predicate"]);
    plan.scans.push_back(std::move(scan));
  }
  if (j.contains("joins")) {
    for (const auto& jn : j["joins"]) {
      JoinNode join;
      join.id = jn.at("id").get<std::string>();
      join.build = jn.at("build").get<std::string>();
      join.probe = jn.at("probe").get<std::string>();
      join.build_key = jn.at("build_key").get<std::string>();
      join.probe_key = jn.at("probe_key").get<std::string>();
      join.shuffle = jn.value("mode", std::string("replicated")) == "shuffle";
      plan.joins.push_back(std::move(join));
    }
  }
  if (j.contains("aggregate")) {
    AggregateNode agg;
    agg.group_by = j["aggregate"].value("group_by", std::string{});
    if (j["aggregate"].contains("sums"))
      for (const auto& c : j["aggregate"]["sums"]) agg.sum_columns.push_back(c.get<std::string>());
    plan.aggregate = std::move(agg);
  }
  plan.validate();
  return plan;
}

QueryPlan QueryPlan::from_json_file(const std::string& path, const std::string& data_root,
                                    int node, int node_count) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open plan: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text, data_root, node, node_count);
}

const ScanNode& QueryPlan::scan(const std::string& table) const {
  for (const auto& s : scans)
    if (s.table == table) return s;
  throw InvalidInput("plan references unknown scan: " + table);
}

const JoinNode* QueryPlan::shuffle_join() const {
  for (const auto& j : joins)
    if (j.shuffle) return &j;
  return nullptr;
}

void QueryPlan::validate() const {
  if (scans.empty()) throw InvalidInput("plan needs at least one scan");
  int shuffles = 0;
  for (const auto& j : joins) {
    if (j.shuffle) {
      ++shuffles;
    } else {
      // Local joins build from a replicated table.
      if (!scan(j.build).replicated)
        throw InvalidInput("local join '" + j.id + "' must build from a replicated scan");
    }
  }
  if (shuffles > 1) throw InvalidInput("plans support at most one shuffled join");
  if (aggregate && !aggregate->group_by.empty()) {
    const JoinNode* sj = shuffle_join();
    if (sj != nullptr && aggregate->group_by != sj->probe_key)
      throw InvalidInput("group key must match the shuffle probe key so groups co-locate");
  }
}

Regulation regulate(const QueryPlan& plan, std::uint64_t memory_budget_bytes,
                    const std::map<std::string, std::uint64_t>& chunk_bytes_per_table,
                    std::uint64_t replicated_bytes, std::uint64_t ht_estimate_bytes) {
  Regulation reg;
  std::vector<const ScanNode*> queued;
  std::uint64_t max_chunk = 1;
  for (const auto& s : plan.scans) {
    if (s.replicated) continue;
    queued.push_back(&s);
    auto it = chunk_bytes_per_table.find(s.table);
    if (it == chunk_bytes_per_table.end() || it->second == 0)
      throw InvalidInput("regulate needs a chunk size estimate for table " + s.table);
    max_chunk = std::max(max_chunk, it->second);
  }
  if (memory_budget_bytes == 0) {
    // Unregulated: generous fixed capacities.
    for (const auto* s : queued) reg.queue_capacity_chunks[s->table] = 64;
    return reg;
  }

  // Worst-case concurrent residents besides the queues themselves: the
  // replicated tables and their hash tables, the shuffle-side hash table,
  // wave buffers plus in-flight partitions/received/probe output, and the
  // per-worker decode transients.
  const std::uint64_t shuffle_pipeline = 8 * plan.buffer_target_bytes;
  const std::uint64_t inflight =
      static_cast<std::uint64_t>(plan.io_workers) * 3 * max_chunk;
  reg.reserved_bytes = replicated_bytes + ht_estimate_bytes + shuffle_pipeline + inflight;
  if (reg.reserved_bytes >= memory_budget_bytes)
    throw InfeasibleBudget("fixed residents (" + std::to_string(reg.reserved_bytes) +
                           " bytes) leave no room for queues in a budget of " +
                           std::to_string(memory_budget_bytes));
  const std::uint64_t avail = memory_budget_bytes - reg.reserved_bytes;
  for (const auto* s : queued) {
    const std::uint64_t chunk = chunk_bytes_per_table.at(s->table);
    const std::uint64_t cap = avail / std::max<std::uint64_t>(queued.size(), 1) / chunk;
    if (cap < 1)
      throw InfeasibleBudget("queue for " + s->table + " cannot hold even one chunk of " +
                             std::to_string(chunk) + " bytes");
    reg.queue_capacity_chunks[s->table] = static_cast<std::size_t>(cap);
  }
  return reg;
}

namespace {

constexpr std::uint64_t kDoneFlag = ~std::uint64_t{0};

OpResult to_result(const OpStats& st) {
  OpResult r;
  r.work_bytes = st.work_bytes;
  r.out_bytes = st.out_bytes;
  r.alloc_count = st.alloc_count;
  return r;
}

/// Exact-sum hash aggregator. Int64 columns accumulate in int64, Float64 in
/// double. Grouped results come out in key order.
class HashAggregator {
 public:
  void configure(const Schema& input, const std::string& group_by,
                 const std::vector<std::string>& sums) {
    input_ = input;
    group_idx_.reset();
    if (!group_by.empty()) group_idx_ = input.require(group_by);
    sum_idx_.clear();
    for (const auto& c : sums) sum_idx_.push_back(input.require(c));
    schema_.fields.clear();
    if (group_idx_) schema_.fields.push_back(input.fields[*group_idx_]);
    schema_.fields.push_back(Field{"rows", LogicalType::Int64});
    for (auto idx : sum_idx_)
      schema_.fields.push_back(Field{"sum_" + input.fields[idx].name, input.fields[idx].type});
    configured_ = true;
  }
  bool configured() const { return configured_; }
  const Schema& result_schema() const { return schema_; }

  void add(const ChunkBatch& batch) {
    for (std::size_t r = 0; r < batch.row_count(); ++r) {
      const std::int64_t key =
          group_idx_ ? batch.column(*group_idx_).int64_view()[r] : std::int64_t{0};
      auto& acc = groups_[key];
      if (acc.empty()) acc.assign(sum_idx_.size() + 1, 0);
      acc[0] += 1;  // row count
      for (std::size_t i = 0; i < sum_idx_.size(); ++i) {
        const Column& col = batch.column(sum_idx_[i]);
        if (col.type() == LogicalType::Int64) {
          acc[i + 1] += static_cast<std::uint64_t>(col.int64_view()[r]);
        } else {
          double cur;
          std::memcpy(&cur, &acc[i + 1], 8);
          cur += col.float64_view()[r];
          std::memcpy(&acc[i + 1], &cur, 8);
        }
      }
    }
  }

  std::vector<std::vector<std::uint64_t>> rows() const {
    std::vector<std::vector<std::uint64_t>> out;
    for (const auto& [key, acc] : groups_) {
      std::vector<std::uint64_t> row;
      if (group_idx_) row.push_back(static_cast<std::uint64_t>(key));
      row.insert(row.end(), acc.begin(), acc.end());
      out.push_back(std::move(row));
    }
    return out;
  }

 private:
  Schema input_;
  Schema schema_;
  std::optional<std::size_t> group_idx_;
  std::vector<std::size_t> sum_idx_;
  std::map<std::int64_t, std::vector<std::uint64_t>> groups_;
  bool configured_ = false;
};

/// One node's plan execution.
class PlanExecution {
 public:
  PlanExecution(const QueryPlan& plan, ExecMode mode, ExecEnv& env, Fabric& fabric, int node,
                DeviceManager& devices, MetadataCache& cache, QueueTrace* qtrace)
      : plan_(plan),
        mode_(mode),
        env_(env),
        fabric_(fabric),
        node_(node),
        devices_(devices),
        cache_(cache),
        qtrace_(qtrace),
        agg_mu_(env.rt.make_monitor()) {}

  PipelineResult run() {
    plan_.validate();
    result_.start_ns = env_.rt.now_ns();
    const JoinNode* shuffle = plan_.shuffle_join();
    if (shuffle == nullptr) throw InvalidInput("plans currently require one shuffled join");
    build_src_ = resolve(shuffle->build);
    probe_src_ = resolve(shuffle->probe);

    // Streams 0..1 drive the networking side; stream 2 hosts the hash build.
    StreamSet streams(env_, 3);

    load_replicated(streams.at(0));

    if (mode_ == ExecMode::Overlapped)
      run_overlapped(*shuffle, streams);
    else
      run_phased(*shuffle, streams);

    streams.drain_all();
    streams.close_all();
    finalize();
    result_.bytes_received = bytes_received_.load();
    result_.end_ns = env_.rt.now_ns();
    result_.peak_bytes = env_.pool.peak_bytes();
    return std::move(result_);
  }

 private:
  struct StreamSource {
    const ScanNode* base = nullptr;
    std::vector<const JoinNode*> chain;  // replicated-build joins, in order
  };

  StreamSource resolve(const std::string& name) const {
    for (const auto& s : plan_.scans)
      if (s.table == name) return StreamSource{&s, {}};
    for (const auto& j : plan_.joins) {
      if (j.id == name) {
        if (j.shuffle) throw InvalidInput("a shuffle join cannot feed another join");
        StreamSource src = resolve(j.probe);
        src.chain.push_back(&j);
        return src;
      }
    }
    throw InvalidInput("plan references unknown stream: " + name);
  }

  ScanOptions scan_options(const ScanNode& scan) const {
    ScanOptions opts;
    opts.columns = scan.columns;
    opts.predicate = scan.predicate;
    opts.use_metadata_cache = mode_ != ExecMode::FullyBlocking;
    return opts;
  }

  void load_replicated(ExecStream& stream) {
    for (const auto& scan : plan_.scans) {
      if (!scan.replicated) continue;
      std::vector<ChunkBatch> pieces;
      for (const auto& path : scan.paths) {
        DeviceModel& dev = devices_.resolve(path);
        if (mode_ == ExecMode::FullyBlocking) {
          pieces.push_back(read_blocking(env_, path, dev, scan_options(scan)));
        } else {
          IoPool pool(env_, plan_.io_workers, 100);
          ChunkQueue out(env_.rt, scan.table, 1024, 1, nullptr);
          auto ticket = scan_chunks(env_, path, dev, cache_, scan_options(scan), pool, out);
          while (auto b = out.dequeue()) pieces.push_back(std::move(*b));
          ticket->wait();
          pool.close_and_join();
        }
      }
      Schema schema = pieces.empty() ? Schema{} : pieces.front().schema();
      ChunkBatch whole = concat(schema, pieces, env_.pool);
      replicated_bytes_ += whole.byte_size();
      replicated_.emplace(scan.table, std::move(whole));
    }
    // Hash tables for every local join, built once per node.
    for (const auto& join : plan_.joins) {
      if (join.shuffle) continue;
      OpDesc op;
      op.kind = OpKind::Build;
      op.label = "build_local_" + join.id;
      op.data_dependent = true;
      op.body = [this, &join] {
        auto it = replicated_.find(join.build);
        if (it == replicated_.end()) throw InvalidInput("missing replicated table " + join.build);
        OpStats st;
        std::vector<ChunkBatch> input;
        input.push_back(std::move(it->second));
        local_tables_[join.id] =
            HashTable::build(input, join.build_key, HashKind::MultiplyShift, env_.pool, &st);
        replicated_.erase(it);
        return to_result(st);
      };
      stream.issue(std::move(op));
    }
  }

  /// Applies the local-join chain to one batch on the given stream.
  ChunkBatch apply_chain(ChunkBatch batch, const std::vector<const JoinNode*>& chain,
                         ExecStream& stream) {
    for (const auto* join : chain) {
      ChunkBatch joined;
      OpDesc op;
      op.kind = OpKind::Probe;
      op.label = "probe_local_" + join->id;
      op.data_dependent = true;
      op.body = [this, &batch, &joined, join] {
        OpStats st;
        joined = local_tables_.at(join->id).probe(batch, join->probe_key, env_.pool, &st);
        return to_result(st);
      };
      stream.issue(std::move(op));
      batch = std::move(joined);
    }
    return batch;
  }

  // ---- phased (blocking-family) execution ----

  /// Warms the metadata cache for every sharded scan through the shared
  /// pool, decoupling footer fetches from the read path.
  void prefetch_metadata(IoPool& pool) {
    struct State {
      explicit State(Runtime& rt) : mon(rt.make_monitor()) {}
      std::shared_ptr<Monitor> mon;
      std::size_t remaining = 0;
    };
    auto state = std::make_shared<State>(env_.rt);
    for (const auto& scan : plan_.scans) {
      if (scan.replicated) continue;
      for (const auto& path : scan.paths) {
        ++state->remaining;
        pool.submit("meta", nullptr, [this, path, state](ExecStream& ws) {
          if (cache_.lookup(path) == nullptr)
            cache_.insert(path, fetch_metadata(env_, devices_.resolve(path), path,
                                               scan_options(plan_.scans.front()).metadata_parse_ns,
                                               ws.id()));
          MonitorLock lock(*state->mon);
          --state->remaining;
          state->mon->notify_all();
        });
      }
    }
    MonitorLock lock(*state->mon);
    while (state->remaining > 0) state->mon->wait();
  }

  std::vector<ChunkBatch> materialize(const StreamSource& src, IoPool* shared_pool,
                                      StreamSet& streams) {
    std::vector<ChunkBatch> out;
    const ScanNode& scan = *src.base;
    if (mode_ == ExecMode::FullyBlocking) {
      for (const auto& path : scan.paths) {
        DeviceModel& dev = devices_.resolve(path);
        ChunkBatch whole = read_blocking(env_, path, dev, scan_options(scan));
        out.push_back(apply_chain(std::move(whole), src.chain, streams.at(0)));
      }
      return out;
    }
    IoPool local_pool(env_, shared_pool == nullptr ? plan_.io_workers : 1, 200);
    IoPool& pool = shared_pool != nullptr ? *shared_pool : local_pool;
    ChunkQueue queue(env_.rt, scan.table, 1 << 20, scan.paths.size(), qtrace_);
    std::vector<TicketPtr> tickets;
    for (const auto& path : scan.paths)
      tickets.push_back(scan_chunks(env_, path, devices_.resolve(path), cache_,
                                    scan_options(scan), pool, queue));
    while (auto b = queue.dequeue())
      out.push_back(apply_chain(std::move(*b), src.chain, streams.at(0)));
    for (auto& t : tickets) t->wait();
    if (shared_pool == nullptr) local_pool.close_and_join();
    return out;
  }

  void run_phased(const JoinNode& shuffle, StreamSet& streams) {
    // Storage phase: materialize both sides fully.
    const std::int64_t t_storage = env_.rt.now_ns();
    std::vector<ChunkBatch> build_batches, probe_batches;
    if (mode_ == ExecMode::Combined) {
      // Reader combining: both scans share one pool and run concurrently,
      // with metadata cached upfront.
      IoPool pool(env_, plan_.io_workers, 100);
      prefetch_metadata(pool);
      ChunkQueue bq(env_.rt, build_src_.base->table, 1 << 20, build_src_.base->paths.size(),
                    qtrace_);
      ChunkQueue pq(env_.rt, probe_src_.base->table, 1 << 20, probe_src_.base->paths.size(),
                    qtrace_);
      std::vector<TicketPtr> tickets;
      for (const auto& path : build_src_.base->paths)
        tickets.push_back(scan_chunks(env_, path, devices_.resolve(path), cache_,
                                      scan_options(*build_src_.base), pool, bq));
      for (const auto& path : probe_src_.base->paths)
        tickets.push_back(scan_chunks(env_, path, devices_.resolve(path), cache_,
                                      scan_options(*probe_src_.base), pool, pq));
      while (auto b = bq.dequeue())
        build_batches.push_back(apply_chain(std::move(*b), build_src_.chain, streams.at(0)));
      while (auto b = pq.dequeue())
        probe_batches.push_back(apply_chain(std::move(*b), probe_src_.chain, streams.at(0)));
      for (auto& t : tickets) t->wait();
      pool.close_and_join();
    } else {
      build_batches = materialize(build_src_, nullptr, streams);
      probe_batches = materialize(probe_src_, nullptr, streams);
    }
    result_.storage_phase_ns = env_.rt.now_ns() - t_storage;

    // Network phase: buffered (or raw) waves through the collective fabric.
    const std::int64_t t_net = env_.rt.now_ns();
    const std::uint64_t target = wave_target();
    build_batches = buffer_chunks(std::move(build_batches), target, env_.pool);
    probe_batches = buffer_chunks(std::move(probe_batches), target, env_.pool);

    std::size_t next_build = 0;
    shuffle_build_phase(shuffle, streams, [&]() -> std::optional<ChunkBatch> {
      if (next_build >= build_batches.size()) return std::nullopt;
      return std::move(build_batches[next_build++]);
    });
    std::size_t next_probe = 0;
    shuffle_probe_phase(shuffle, streams, [&]() -> std::optional<ChunkBatch> {
      if (next_probe >= probe_batches.size()) return std::nullopt;
      return std::move(probe_batches[next_probe++]);
    });
    streams.drain_all();
    result_.network_phase_ns = env_.rt.now_ns() - t_net;
  }

  std::uint64_t wave_target() const {
    switch (mode_) {
      case ExecMode::FullyBlocking: return ~std::uint64_t{0};  // one full-table wave
      case ExecMode::FastIO: return 1;                         // per-chunk waves, unbuffered
      case ExecMode::Combined:
      case ExecMode::Overlapped: return plan_.buffer_target_bytes;
    }
    return plan_.buffer_target_bytes;
  }

  // ---- overlapped execution ----

  void run_overlapped(const JoinNode& shuffle, StreamSet& streams) {
    // Regulated queue capacities from the plan budget.
    std::map<std::string, std::uint64_t> chunk_bytes;
    std::uint64_t ht_estimate = plan_.ht_estimate_bytes;
    for (const auto& scan : plan_.scans) {
      if (scan.replicated) continue;
      std::uint64_t row_bytes = 0;
      std::uint64_t max_group_rows = 1;
      std::uint64_t total_rows = 0;
      for (const auto& path : scan.paths) {
        const TableMeta meta = parse_footer_file(path);
        const std::size_t cols =
            scan.columns.empty() ? meta.schema.column_count() : scan.columns.size();
        row_bytes = cols * kValueBytes;
        for (const auto& g : meta.row_groups) max_group_rows = std::max(max_group_rows, g.row_count);
        total_rows += meta.total_rows();
      }
      chunk_bytes[scan.table] = std::max<std::uint64_t>(1, max_group_rows * row_bytes);
      if (ht_estimate == 0 && build_src_.base->table == scan.table && build_src_.chain.empty())
        ht_estimate = HashTable::estimate_bytes(
            total_rows, scan.columns.empty() ? 3 : scan.columns.size() - 1);
    }
    if (ht_estimate == 0 && plan_.memory_budget_bytes > 0)
      ht_estimate = plan_.memory_budget_bytes / 4;  // planner fallback estimate
    Regulation reg =
        regulate(plan_, plan_.memory_budget_bytes, chunk_bytes, replicated_bytes_, ht_estimate);

    IoPool pool(env_, plan_.io_workers, 100);
    prefetch_metadata(pool);
    ChunkQueue build_q(env_.rt, build_src_.base->table,
                       reg.queue_capacity_chunks.at(build_src_.base->table),
                       build_src_.base->paths.size(), qtrace_);
    ChunkQueue probe_q(env_.rt, probe_src_.base->table,
                       reg.queue_capacity_chunks.at(probe_src_.base->table),
                       probe_src_.base->paths.size(), qtrace_);
    std::vector<TicketPtr> tickets;
    // Local-join chains ride the scan path so their compute lands on the
    // reader workers' streams, keeping the networking thread lean.
    ScanOptions build_opts = scan_options(*build_src_.base);
    build_opts.transform = [this](ChunkBatch b, ExecStream& ws) {
      return apply_chain(std::move(b), build_src_.chain, ws);
    };
    ScanOptions probe_opts = scan_options(*probe_src_.base);
    probe_opts.transform = [this](ChunkBatch b, ExecStream& ws) {
      return apply_chain(std::move(b), probe_src_.chain, ws);
    };
    for (const auto& path : build_src_.base->paths)
      tickets.push_back(
          scan_chunks(env_, path, devices_.resolve(path), cache_, build_opts, pool, build_q));
    for (const auto& path : probe_src_.base->paths)
      tickets.push_back(
          scan_chunks(env_, path, devices_.resolve(path), cache_, probe_opts, pool, probe_q));

    // The single networking control thread consumes; buffering rides on the
    // dequeue path.
    DynamicBuffer build_buf(plan_.buffer_target_bytes);
    shuffle_build_phase(shuffle, streams, [&]() -> std::optional<ChunkBatch> {
      while (auto b = build_q.dequeue())
        if (auto wave = build_buf.push(std::move(*b), env_.pool)) return wave;
      return build_buf.flush(env_.pool);
    });
    DynamicBuffer probe_buf(plan_.buffer_target_bytes);
    shuffle_probe_phase(shuffle, streams, [&]() -> std::optional<ChunkBatch> {
      while (auto b = probe_q.dequeue())
        if (auto wave = probe_buf.push(std::move(*b), env_.pool)) return wave;
      return probe_buf.flush(env_.pool);
    });
    streams.drain_all();
    for (auto& t : tickets) t->wait();
    pool.close_and_join();
    result_.queue_high_water[build_q.tag()] = build_q.high_water();
    result_.queue_high_water[probe_q.tag()] = probe_q.high_water();
  }

  // ---- shuffle wave machinery (shared by all modes) ----

  using BatchSource = std::function<std::optional<ChunkBatch>()>;

  struct WaveSlot {
    std::vector<ChunkBatch> received;
  };
  struct WaveRecord {
    int wave = 0;
    std::shared_ptr<WaveSlot> slot;
    TicketPtr shuffle_ticket;
  };

  /// Drains `next` through partition/sizes/all_to_all waves. Termination is
  /// agreed in-band: a finished node declares kDoneFlag sizes and keeps
  /// joining collectives with empty payloads until every node is done.
  /// When `on_wave` is set it is invoked one wave behind the issue front on
  /// each stream (deferred synchronization), then flushed at the end.
  std::vector<WaveRecord> run_waves(
      const std::string& label, const Schema& wire_schema, const std::string& key,
      StreamSet& streams, BatchSource next,
      const std::function<void(const WaveRecord&, ExecStream&)>& on_wave) {
    constexpr int kNetStreams = 2;
    std::vector<WaveRecord> records;
    std::deque<WaveRecord> pending;
    int w = 0;
    bool mine_done = false;
    while (true) {
      std::optional<ChunkBatch> input;
      if (!mine_done) {
        input = next();
        if (!input) mine_done = true;
      }
      ExecStream& stream = streams.at(w % kNetStreams);

      // Partition this wave (skipped entirely once drained).
      auto parts = std::make_shared<std::vector<ChunkBatch>>();
      if (input && input->row_count() > 0) {
        OpDesc op;
        op.kind = OpKind::Partition;
        op.label = label + "_partition#" + std::to_string(w);
        op.data_dependent = true;
        ChunkBatch batch = std::move(*input);
        op.body = [this, &batch, parts, &key] {
          OpStats st;
          *parts = partition(batch, key, static_cast<std::uint32_t>(fabric_.node_count()),
                             HashKind::MultiplyShift, env_.pool, &st);
          return to_result(st);
        };
        stream.issue(std::move(op));
      }

      // Size exchange doubles as the liveness vote.
      std::vector<std::uint64_t> declared(static_cast<std::size_t>(fabric_.node_count()),
                                          mine_done ? kDoneFlag : 0);
      if (!mine_done)
        for (std::size_t j = 0; j < parts->size(); ++j) declared[j] = (*parts)[j].row_count();
      std::vector<std::uint64_t> peer_rows;
      {
        OpDesc op;
        op.kind = OpKind::SizeExchange;
        op.label = label + "_sizes#" + std::to_string(w);
        op.data_dependent = true;
        op.resource = "collective";
        op.body = [this, &declared, &peer_rows] {
          const std::int64_t t0 = env_.rt.now_ns();
          peer_rows = fabric_.all_to_all_sizes(node_, declared);
          OpResult r;
          r.out_bytes = kValueBytes * static_cast<std::uint64_t>(fabric_.node_count());
          r.start_ns_override = t0;
          r.end_ns_override = env_.rt.now_ns();
          return r;
        };
        stream.issue(std::move(op));
      }
      const bool all_done =
          mine_done && std::all_of(peer_rows.begin(), peer_rows.end(),
                                   [](std::uint64_t v) { return v == kDoneFlag; });
      if (all_done) break;

      // Payload collective for this wave.
      WaveRecord rec;
      rec.wave = w;
      rec.slot = std::make_shared<WaveSlot>();
      {
        OpDesc op;
        op.kind = OpKind::AllToAll;
        op.label = label + "_shuffle#" + std::to_string(w);
        op.resource = "collective";
        auto slot = rec.slot;
        op.body = [this, parts, slot, wire_schema] {
          const std::uint32_t ncols = static_cast<std::uint32_t>(wire_schema.column_count());
          std::vector<A2AColumns> per_dest(static_cast<std::size_t>(fabric_.node_count()));
          for (auto& d : per_dest) d.assign(ncols, {});
          for (std::size_t j = 0; j < parts->size(); ++j)
            for (std::size_t c = 0; c < (*parts)[j].column_count(); ++c) {
              const auto raw = (*parts)[j].column(c).raw();
              per_dest[j][c].assign(raw.begin(), raw.end());
            }
          parts->clear();
          A2AResult res = fabric_.all_to_all(node_, std::move(per_dest), ncols);
          std::uint64_t allocs = 0;
          for (auto& cols_in : res.per_source) {
            std::vector<Column> cols;
            bool any = false;
            for (std::size_t c = 0; c < cols_in.size(); ++c) {
              any = any || !cols_in[c].empty();
              cols.emplace_back(wire_schema.fields[c].type, std::move(cols_in[c]));
            }
            if (!any) continue;
            allocs += cols.size();
            slot->received.push_back(
                ChunkBatch::tracked(env_.pool, wire_schema, std::move(cols), "recv"));
          }
          bytes_received_ += res.bytes_received;
          OpResult r;
          r.out_bytes = res.bytes_received;
          r.alloc_count = allocs;
          r.start_ns_override = res.start_ns;
          r.end_ns_override = env_.rt.simulated() ? res.end_ns + env_.pool.alloc_latency_ns(allocs)
                                                  : res.end_ns;
          return r;
        };
        rec.shuffle_ticket = stream.issue(std::move(op));
      }
      records.push_back(rec);

      if (on_wave) {
        pending.push_back(rec);
        // Consume one wave behind the issue front per stream.
        if (static_cast<int>(pending.size()) > kNetStreams) {
          const WaveRecord ready = pending.front();
          pending.pop_front();
          on_wave(ready, streams.at(ready.wave % kNetStreams));
        }
      }
      ++w;
    }
    if (on_wave)
      for (const auto& rec : pending) on_wave(rec, streams.at(rec.wave % kNetStreams));
    return records;
  }

  void shuffle_build_phase(const JoinNode& shuffle, StreamSet& streams, BatchSource next) {
    Schema wire = stream_schema(build_src_);
    auto records = run_waves("build_side", wire, shuffle.build_key, streams, std::move(next),
                             nullptr);
    // Hash table built once per node on the dedicated stream, after every
    // build-side shuffle has landed.
    OpDesc op;
    op.kind = OpKind::Build;
    op.label = "build";
    op.data_dependent = true;
    for (const auto& rec : records) op.deps.push_back(rec.shuffle_ticket);
    op.body = [this, &shuffle, records] {
      std::vector<ChunkBatch> inputs;
      for (const auto& rec : records)
        for (auto& b : rec.slot->received) inputs.push_back(std::move(b));
      for (const auto& rec : records) rec.slot->received.clear();
      OpStats st;
      shuffle_table_ = HashTable::build(inputs, shuffle.build_key, HashKind::MultiplyShift,
                                        env_.pool, &st);
      return to_result(st);
    };
    build_ticket_ = streams.at(2).issue(std::move(op));
  }

  void shuffle_probe_phase(const JoinNode& shuffle, StreamSet& streams, BatchSource next) {
    Schema wire = stream_schema(probe_src_);
    run_waves("probe_side", wire, shuffle.probe_key, streams, std::move(next),
              [this, &shuffle](const WaveRecord& rec, ExecStream& stream) {
                OpDesc op;
                op.kind = OpKind::Probe;
                op.label = "probe#" + std::to_string(rec.wave);
                op.data_dependent = true;
                if (build_ticket_) op.deps.push_back(build_ticket_);
                auto slot = rec.slot;
                op.body = [this, &shuffle, slot] {
                  OpResult total;
                  for (auto& batch : slot->received) {
                    OpStats st;
                    ChunkBatch out =
                        shuffle_table_.probe(batch, shuffle.probe_key, env_.pool, &st);
                    total.work_bytes += st.work_bytes;
                    total.out_bytes += st.out_bytes;
                    total.alloc_count += st.alloc_count;
                    deliver(std::move(out));
                  }
                  slot->received.clear();
                  return total;
                };
                stream.issue(std::move(op));
              });
  }

  /// Schema of batches entering the shuffle for a source (after its chain).
  Schema stream_schema(const StreamSource& src) {
    // Derived once from the file schema plus the chain's payload prepends.
    const TableMeta meta = parse_footer_file(src.base->paths.at(0));
    Schema s;
    if (src.base->columns.empty()) {
      s = meta.schema;
    } else {
      for (const auto& f : meta.schema.fields)
        if (std::find(src.base->columns.begin(), src.base->columns.end(), f.name) !=
            src.base->columns.end())
          s.fields.push_back(f);
    }
    for (const auto* join : src.chain) {
      Schema joined;
      const ScanNode& build_scan = plan_.scan(join->build);
      const TableMeta bmeta = parse_footer_file(build_scan.paths.at(0));
      for (const auto& f : bmeta.schema.fields) {
        if (f.name == join->build_key) continue;
        if (!build_scan.columns.empty() &&
            std::find(build_scan.columns.begin(), build_scan.columns.end(), f.name) ==
                build_scan.columns.end())
          continue;
        joined.fields.push_back(f);
      }
      for (const auto& f : s.fields) {
        Field g = f;
        if (joined.index_of(g.name)) g.name += "_p";
        joined.fields.push_back(g);
      }
      s = std::move(joined);
    }
    return s;
  }

  void deliver(ChunkBatch out) {
    MonitorLock lock(*agg_mu_);
    if (plan_.aggregate) {
      if (!aggregator_.configured())
        aggregator_.configure(out.schema(), plan_.aggregate->group_by,
                              plan_.aggregate->sum_columns);
      aggregator_.add(out);
      return;  // batch freed here; its rows live on in the aggregate
    }
    if (result_.schema.fields.empty()) result_.schema = out.schema();
    out.untrack();
    for (std::size_t r = 0; r < out.row_count(); ++r) {
      std::vector<std::uint64_t> row(out.column_count());
      for (std::size_t c = 0; c < out.column_count(); ++c) row[c] = out.column(c).raw()[r];
      result_.rows.push_back(std::move(row));
    }
  }

  void finalize() {
    if (plan_.aggregate && aggregator_.configured()) {
      result_.schema = aggregator_.result_schema();
      result_.rows = aggregator_.rows();
    }
  }

  QueryPlan plan_;
  ExecMode mode_;
  ExecEnv& env_;
  Fabric& fabric_;
  int node_;
  DeviceManager& devices_;
  MetadataCache& cache_;
  QueueTrace* qtrace_;

  StreamSource build_src_;
  StreamSource probe_src_;
  std::map<std::string, ChunkBatch> replicated_;
  std::map<std::string, HashTable> local_tables_;
  std::uint64_t replicated_bytes_ = 0;

  std::atomic<std::uint64_t> bytes_received_{0};
  HashTable shuffle_table_;
  TicketPtr build_ticket_;
  std::shared_ptr<Monitor> agg_mu_;
  HashAggregator aggregator_;
  PipelineResult result_;
};

}  // namespace

PipelineResult execute_plan(const QueryPlan& plan, ExecMode mode, ExecEnv& env, Fabric& fabric,
                            int node, DeviceManager& devices, MetadataCache& cache,
                            QueueTrace* queue_trace) {
  PlanExecution exec(plan, mode, env, fabric, node, devices, cache, queue_trace);
  return exec.run();
}

}  // namespace pystachio
