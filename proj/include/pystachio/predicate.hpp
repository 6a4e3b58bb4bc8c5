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
#include <string>
#include <variant>
#include <vector>

#include "pystachio/types.hpp"

namespace pystachio {

enum class CompareOp { Lt, Le, Eq, Ne, Ge, Gt };

const char* to_string(CompareOp op);
CompareOp compare_op_from_string(const std::string& s);

/// Single-column comparison against a literal.
struct PredicateAtom {
  std::string column;
  CompareOp op = CompareOp::Lt;
  std::variant<std::int64_t, double> literal;

  bool matches_int(std::int64_t v) const;
  bool matches_float(double v) const;

  /// Whether any value in [min, max] can satisfy the atom (zone pruning).
  bool interval_may_match(std::int64_t min, std::int64_t max) const;
  bool interval_may_match(double min, double max) const;
};

/// Conjunction of atoms; an empty conjunction is `true`.
struct Predicate {
  std::vector<PredicateAtom> atoms;

  bool empty() const { return atoms.empty(); }

  static Predicate all() { return {}; }
  static Predicate atom(std::string column, CompareOp op, std::int64_t v) {
    return Predicate{{PredicateAtom{std::move(column), op, v}}};
  }
  static Predicate atom(std::string column, CompareOp op, double v) {
    return Predicate{{PredicateAtom{std::move(column), op, v}}};
  }
  Predicate& and_atom(std::string column, CompareOp op, std::int64_t v) {
    atoms.push_back(PredicateAtom{std::move(column), op, v});
    return *this;
  }
  Predicate& and_atom(std::string column, CompareOp op, double v) {
    atoms.push_back(PredicateAtom{std::move(column), op, v});
    return *this;
  }
};

/// Row-level evaluation over a batch. Column lookups are resolved once and
/// reused across rows.
class BoundPredicate {
 public:
  BoundPredicate(const Predicate& pred, const Schema& schema);
  bool matches(const ChunkBatch& batch, std::size_t row) const;

 private:
  struct Bound {
    std::size_t column_index;
    LogicalType type;
    PredicateAtom atom;
  };
  std::vector<Bound> bound_;
};

}  // namespace pystachio
