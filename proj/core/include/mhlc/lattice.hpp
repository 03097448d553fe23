// SPDX-License-Identifier: Apache-2.0
//
// Abstract values for the dataflow inference: a flat lattice per tensor
// (Bottom below known constants below known-type-only below Top), lifted
// pointwise over tuples. Function references are exact or Top.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mhlc/types.hpp"
#include "mhlc/value.hpp"

namespace mhlc {

struct AbstractValue {
  enum class Kind : uint8_t { Bottom, Const, Typed, Tuple, FnRef, Top };
  Kind kind = Kind::Bottom;

  TensorValue constant;     // Const
  bool all_marker = false;  // Const: the reduce-over-all-dimensions marker
  TensorType type;          // Typed (tensors only; tuples stay structural)
  std::vector<AbstractValue> elements;  // Tuple
  FnRefType fn;                         // FnRef

  static AbstractValue bottom() { return {}; }
  static AbstractValue top() {
    AbstractValue v;
    v.kind = Kind::Top;
    return v;
  }
  static AbstractValue constant_of(TensorValue c, bool all = false) {
    AbstractValue v;
    v.kind = Kind::Const;
    v.constant = std::move(c);
    v.all_marker = all;
    return v;
  }
  static AbstractValue typed(TensorType t) {
    AbstractValue v;
    v.kind = Kind::Typed;
    v.type = std::move(t);
    return v;
  }
  static AbstractValue tuple(std::vector<AbstractValue> elems) {
    AbstractValue v;
    v.kind = Kind::Tuple;
    v.elements = std::move(elems);
    return v;
  }
  static AbstractValue fnref(FnRefType f) {
    AbstractValue v;
    v.kind = Kind::FnRef;
    v.fn = std::move(f);
    return v;
  }
  /// Exact abstraction of a runtime value (Const / FnRef / Tuple thereof).
  static AbstractValue from_value(const Value& v);
  /// Shape-only abstraction of a type. Tuples become Tuple-of-Typed;
  /// function reference types are exact.
  static AbstractValue from_type(const ValueType& t);

  bool is_bottom() const { return kind == Kind::Bottom; }
  bool is_top() const { return kind == Kind::Top; }
  bool is_const() const { return kind == Kind::Const; }

  /// The concrete type, when one is determined (Const, Typed, FnRef, or a
  /// Tuple whose elements all have one). Top and Bottom have none.
  std::optional<ValueType> type_of() const;
  /// True when every leaf is Const, Typed or FnRef — i.e. a full static
  /// shape is known.
  bool fully_typed() const;

  bool operator==(const AbstractValue&) const = default;
};

/// Least upper bound.
AbstractValue join(const AbstractValue& a, const AbstractValue& b);
/// Partial order: a ⊑ b iff join(a, b) == b.
bool lattice_leq(const AbstractValue& a, const AbstractValue& b);

std::string to_string(const AbstractValue& v);

}  // namespace mhlc
