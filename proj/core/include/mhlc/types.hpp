// SPDX-License-Identifier: Apache-2.0
//
// Compile-time value types: element types, tensor shapes, tuples and
// function references.

#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace mhlc {

enum class ElementType : uint8_t { F32, S64, Pred };

const char* to_string(ElementType e);

/// Element type + static shape. Rank 0 denotes a scalar.
struct TensorType {
  ElementType elem = ElementType::F32;
  std::vector<int64_t> shape;

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t element_count() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  bool operator==(const TensorType&) const = default;
};

struct ValueType;

/// Literal scalar constant usable as a closure capture.
struct CapturedLiteral {
  ElementType elem = ElementType::F32;
  double f = 0;   // F32 payload
  int64_t i = 0;  // S64 / Pred payload
  bool operator==(const CapturedLiteral&) const = default;
};

/// Reference to a named function plus captured constant literals.
struct FnRefType {
  std::string name;
  std::vector<CapturedLiteral> captures;
  bool operator==(const FnRefType&) const = default;
};

/// TensorType | tuple of ValueTypes | function reference.
struct ValueType {
  enum class Kind : uint8_t { Tensor, Tuple, FnRef };
  Kind kind = Kind::Tensor;
  TensorType tensor;
  std::vector<ValueType> elements;  // Tuple
  FnRefType fnref;

  ValueType() = default;
  ValueType(TensorType t) : kind(Kind::Tensor), tensor(std::move(t)) {}

  static ValueType make_tensor(ElementType e, std::vector<int64_t> shape) {
    return ValueType(TensorType{e, std::move(shape)});
  }
  static ValueType make_scalar(ElementType e) { return make_tensor(e, {}); }
  static ValueType make_tuple(std::vector<ValueType> elems) {
    ValueType v;
    v.kind = Kind::Tuple;
    v.elements = std::move(elems);
    return v;
  }
  static ValueType make_fnref(FnRefType f) {
    ValueType v;
    v.kind = Kind::FnRef;
    v.fnref = std::move(f);
    return v;
  }

  bool is_tensor() const { return kind == Kind::Tensor; }
  bool is_tuple() const { return kind == Kind::Tuple; }
  bool is_fnref() const { return kind == Kind::FnRef; }
  bool is_scalar_tensor() const { return is_tensor() && tensor.rank() == 0; }

  bool operator==(const ValueType&) const = default;
};

/// `f32[10,10]` style spelling shared by the frontend, HLO types and CLI
/// signature strings. Tuples print as `(a, b)` in HLO style and as
/// `tuple(a, b)` in frontend style.
enum class TypeSyntax { Frontend, Hlo };
std::string to_string(const TensorType& t);
std::string to_string(const ValueType& t, TypeSyntax syntax = TypeSyntax::Hlo);

}  // namespace mhlc
