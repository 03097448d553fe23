// SPDX-License-Identifier: Apache-2.0

#include "mhlc/lattice.hpp"

#include <sstream>

namespace mhlc {

AbstractValue AbstractValue::from_value(const Value& v) {
  if (v.is_tensor()) return constant_of(v.tensor());
  if (v.is_fnref()) return fnref(v.fnref());
  std::vector<AbstractValue> elems;
  for (const Value& e : v.elements()) elems.push_back(from_value(e));
  return tuple(std::move(elems));
}

AbstractValue AbstractValue::from_type(const ValueType& t) {
  if (t.is_tensor()) return typed(t.tensor);
  if (t.is_fnref()) return fnref(t.fnref);
  std::vector<AbstractValue> elems;
  for (const ValueType& e : t.elements) elems.push_back(from_type(e));
  return tuple(std::move(elems));
}

std::optional<ValueType> AbstractValue::type_of() const {
  switch (kind) {
    case Kind::Bottom:
    case Kind::Top:
      return std::nullopt;
    case Kind::Const:
      return ValueType(constant.type);
    case Kind::Typed:
      return ValueType(type);
    case Kind::FnRef:
      return ValueType::make_fnref(fn);
    case Kind::Tuple: {
      std::vector<ValueType> elems;
      for (const AbstractValue& e : elements) {
        std::optional<ValueType> t = e.type_of();
        if (!t) return std::nullopt;
        elems.push_back(std::move(*t));
      }
      return ValueType::make_tuple(std::move(elems));
    }
  }
  return std::nullopt;
}

bool AbstractValue::fully_typed() const { return type_of().has_value(); }

AbstractValue join(const AbstractValue& a, const AbstractValue& b) {
  using K = AbstractValue::Kind;
  if (a.is_bottom()) return b;
  if (b.is_bottom()) return a;
  if (a.is_top() || b.is_top()) return AbstractValue::top();
  if (a == b) return a;
  if (a.kind == K::Tuple && b.kind == K::Tuple) {
    if (a.elements.size() != b.elements.size()) return AbstractValue::top();
    std::vector<AbstractValue> elems;
    for (size_t i = 0; i < a.elements.size(); ++i)
      elems.push_back(join(a.elements[i], b.elements[i]));
    return AbstractValue::tuple(std::move(elems));
  }
  if (a.kind == K::Tuple || b.kind == K::Tuple) return AbstractValue::top();
  if (a.kind == K::FnRef || b.kind == K::FnRef) return AbstractValue::top();  // unequal fnrefs
  // Both tensor-like (Const or Typed), not equal: keep the type when it agrees.
  TensorType ta = a.kind == K::Const ? a.constant.type : a.type;
  TensorType tb = b.kind == K::Const ? b.constant.type : b.type;
  if (ta == tb) return AbstractValue::typed(ta);
  return AbstractValue::top();
}

bool lattice_leq(const AbstractValue& a, const AbstractValue& b) { return join(a, b) == b; }

std::string to_string(const AbstractValue& v) {
  using K = AbstractValue::Kind;
  switch (v.kind) {
    case K::Bottom:
      return "bottom";
    case K::Top:
      return "top";
    case K::Const:
      return "const " + to_string(v.constant.type) + " " +
             (v.all_marker ? std::string("all") : print_literal(v.constant));
    case K::Typed:
      return "typed " + to_string(v.type);
    case K::FnRef:
      return "@" + v.fn.name;
    case K::Tuple: {
      std::ostringstream os;
      os << "tuple(";
      for (size_t i = 0; i < v.elements.size(); ++i) {
        if (i) os << ", ";
        os << to_string(v.elements[i]);
      }
      os << ')';
      return os.str();
    }
  }
  return "?";
}

}  // namespace mhlc
