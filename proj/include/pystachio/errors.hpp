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

#include <stdexcept>
#include <string>

namespace pystachio {

/// Base class for every engine error.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UnknownColumn : public Error {
 public:
  explicit UnknownColumn(const std::string& name) : Error("unknown column: " + name) {}
};

class MemoryExceeded : public Error {
 public:
  MemoryExceeded(std::uint64_t requested, std::uint64_t allocated, std::uint64_t capacity)
      : Error("memory budget exceeded: requested " + std::to_string(requested) + " bytes with " +
              std::to_string(allocated) + "/" + std::to_string(capacity) + " in use") {}
};

class StreamClosed : public Error {
 public:
  StreamClosed() : Error("operation issued to a closed stream") {}
};

class IoFailure : public Error {
 public:
  explicit IoFailure(const std::string& msg) : Error("io failure: " + msg) {}
};

class CorruptFooter : public Error {
 public:
  explicit CorruptFooter(const std::string& msg) : Error("corrupt footer: " + msg) {}
};

class CollectiveOrderViolation : public Error {
 public:
  explicit CollectiveOrderViolation(const std::string& msg)
      : Error("collective order violation: " + msg) {}
};

class PeerDisconnected : public Error {
 public:
  explicit PeerDisconnected(const std::string& msg) : Error("peer disconnected: " + msg) {}
};

class ChecksumMismatch : public Error {
 public:
  explicit ChecksumMismatch(const std::string& msg) : Error("checksum mismatch: " + msg) {}
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& msg) : Error("invalid input: " + msg) {}
};

class InfeasibleBudget : public Error {
 public:
  explicit InfeasibleBudget(const std::string& msg) : Error("infeasible budget: " + msg) {}
};

class MalformedTrace : public Error {
 public:
  explicit MalformedTrace(const std::string& msg) : Error("malformed trace: " + msg) {}
};

class EmptyTrace : public Error {
 public:
  EmptyTrace() : Error("trace holds no events for the requested node") {}
};

}  // namespace pystachio
