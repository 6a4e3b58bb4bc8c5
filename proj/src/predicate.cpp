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

#include "pystachio/predicate.hpp"

#include <algorithm>

namespace pystachio {

const char* to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Eq: return "==";
    case CompareOp::Ne: return "!=";
    case CompareOp::Ge: return ">=";
    case CompareOp::Gt: return ">";
  }
  return "?";
}

CompareOp compare_op_from_string(const std::string& s) {
  if (s == "<") return CompareOp::Lt;
  if (s == "<=") return CompareOp::Le;
  if (s == "==" || s == "=") return CompareOp::Eq;
  if (s == "!=") return CompareOp::Ne;
  if (s == ">=") return CompareOp::Ge;
  if (s == ">") return CompareOp::Gt;
  throw InvalidInput("unknown comparison operator: " + s);
}

namespace {

template <typename T>
bool compare(T lhs, CompareOp op, T rhs) {
  switch (op) {
    case CompareOp::Lt: return lhs < rhs;
    case CompareOp::Le: return lhs <= rhs;
    case CompareOp::Eq: return lhs == rhs;
    case CompareOp::Ne: return lhs != rhs;
    case CompareOp::Ge: return lhs >= rhs;
    case CompareOp::Gt: return lhs > rhs;
  }
  return false;
}

template <typename T>
bool interval_check(T min, T max, CompareOp op, T lit) {
  switch (op) {
    case CompareOp::Lt: return min < lit;
    case CompareOp::Le: return min <= lit;
    case CompareOp::Eq: return min <= lit && lit <= max;
    case CompareOp::Ne: return !(min == lit && max == lit);
    case CompareOp::Ge: return max >= lit;
    case CompareOp::Gt: return max > lit;
  }
  return true;
}

template <typename T>
T literal_as(const PredicateAtom& a) {
  if (std::holds_alternative<std::int64_t>(a.literal))
    return static_cast<T>(std::get<std::int64_t>(a.literal));
  return static_cast<T>(std::get<double>(a.literal));
}

}  // namespace

bool PredicateAtom::matches_int(std::int64_t v) const {
  return compare<std::int64_t>(v, op, literal_as<std::int64_t>(*this));
}

bool PredicateAtom::matches_float(double v) const {
  return compare<double>(v, op, literal_as<double>(*this));
}

bool PredicateAtom::interval_may_match(std::int64_t min, std::int64_t max) const {
  return interval_check<std::int64_t>(min, max, op, literal_as<std::int64_t>(*this));
}

bool PredicateAtom::interval_may_match(double min, double max) const {
  return interval_check<double>(min, max, op, literal_as<double>(*this));
}

BoundPredicate::BoundPredicate(const Predicate& pred, const Schema& schema) {
  bound_.reserve(pred.atoms.size());
  for (const auto& atom : pred.atoms) {
    const std::size_t idx = schema.require(atom.column);
    bound_.push_back(Bound{idx, schema.fields[idx].type, atom});
  }
}

bool BoundPredicate::matches(const ChunkBatch& batch, std::size_t row) const {
  for (const auto& b : bound_) {
    const Column& col = batch.column(b.column_index);
    const bool ok = b.type == LogicalType::Int64 ? b.atom.matches_int(col.int64_view()[row])
                                                 : b.atom.matches_float(col.float64_view()[row]);
    if (!ok) return false;
  }
  return true;
}

}  // namespace pystachio
