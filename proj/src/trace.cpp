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

#include "pystachio/trace.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pystachio/errors.hpp"

namespace pystachio {

void Trace::record(TraceEvent ev) {
  std::lock_guard lock(mu_);
  events_.push_back(std::move(ev));
}

std::vector<TraceEvent> Trace::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t Trace::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

void Trace::clear() {
  std::lock_guard lock(mu_);
  events_.clear();
}

namespace {

// Times are stored as integer nanoseconds and written as microseconds with
// three decimals, which round-trips exactly.
std::string format_us(std::int64_t ns) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%" PRId64 ".%03" PRId64, ns / 1000,
                ns < 0 ? (-ns) % 1000 : ns % 1000);
  return buf;
}

std::int64_t parse_us_to_ns(const std::string& s) {
  const auto dot = s.find('.');
  const std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
  while (frac.size() < 3) frac.push_back('0');
  frac = frac.substr(0, 3);
  try {
    return std::stoll(whole) * 1000 + std::stoll(frac.empty() ? "0" : frac);
  } catch (const std::exception&) {
    throw MalformedTrace("bad time field: " + s);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void Trace::write_csv(std::ostream& out) const {
  std::lock_guard lock(mu_);
  out << "node,stream,op,start_us,end_us,bytes,resource\n";
  for (const auto& e : events_) {
    out << e.node << ',' << e.stream << ',' << e.op << ',' << format_us(e.start_ns) << ','
        << format_us(e.end_ns) << ',' << e.bytes << ',' << e.resource << '\n';
  }
}

void Trace::write_csv_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open trace file for writing: " + path);
  write_csv(out);
}

std::vector<TraceEvent> Trace::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw MalformedTrace("empty trace file");
  if (line != "node,stream,op,start_us,end_us,bytes,resource")
    throw MalformedTrace("unexpected trace header: " + line);
  std::vector<TraceEvent> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = split_csv_line(line);
    if (parts.size() != 7) throw MalformedTrace("expected 7 fields: " + line);
    TraceEvent ev;
    try {
      ev.node = std::stoi(parts[0]);
      ev.stream = std::stoi(parts[1]);
      ev.op = parts[2];
      ev.start_ns = parse_us_to_ns(parts[3]);
      ev.end_ns = parse_us_to_ns(parts[4]);
      ev.bytes = std::stoull(parts[5]);
      ev.resource = parts[6];
    } catch (const MalformedTrace&) {
      throw;
    } catch (const std::exception&) {
      throw MalformedTrace("bad record: " + line);
    }
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<TraceEvent> Trace::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open trace file: " + path);
  return read_csv(in);
}

void QueueTrace::record(QueueDepthEvent ev) {
  std::lock_guard lock(mu_);
  events_.push_back(std::move(ev));
}

std::vector<QueueDepthEvent> QueueTrace::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

void QueueTrace::write_csv(std::ostream& out) const {
  std::lock_guard lock(mu_);
  out << "time_us,queue,depth,capacity,event\n";
  for (const auto& e : events_) {
    out << format_us(e.time_ns) << ',' << e.queue << ',' << e.depth << ',' << e.capacity << ','
        << e.event << '\n';
  }
}

void QueueTrace::write_csv_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open queue trace file for writing: " + path);
  write_csv(out);
}

}  // namespace pystachio
