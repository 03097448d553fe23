// SPDX-License-Identifier: Apache-2.0
//
// Runtime values: immutable dense tensors and tuples thereof.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "mhlc/types.hpp"

namespace mhlc {

/// Dense tensor in row-major logical order. Immutable by convention:
/// constructed once, then shared by value.
struct TensorValue {
  TensorType type;
  std::vector<float> f32;
  std::vector<int64_t> s64;
  std::vector<uint8_t> pred;

  TensorValue() = default;

  static TensorValue zeros(const TensorType& t);
  static TensorValue splat_f32(std::vector<int64_t> shape, float v);
  static TensorValue scalar_f32(float v);
  static TensorValue scalar_s64(int64_t v);
  static TensorValue scalar_pred(bool v);
  static TensorValue from_f32(std::vector<int64_t> shape, std::vector<float> data);
  static TensorValue from_s64(std::vector<int64_t> shape, std::vector<int64_t> data);
  static TensorValue from_pred(std::vector<int64_t> shape, std::vector<uint8_t> data);

  int64_t element_count() const { return type.element_count(); }

  double get_as_double(int64_t i) const;
  int64_t get_as_int(int64_t i) const;
  void set_from_double(int64_t i, double v);
  void set_from_int(int64_t i, int64_t v);

  bool operator==(const TensorValue&) const = default;
};

/// TensorValue, a tuple of values, or a function reference.
struct Value {
  std::variant<TensorValue, std::vector<Value>, FnRefType> v;

  Value() : v(TensorValue{}) {}
  Value(TensorValue t) : v(std::move(t)) {}
  Value(std::vector<Value> elems) : v(std::move(elems)) {}
  Value(FnRefType f) : v(std::move(f)) {}

  bool is_tensor() const { return std::holds_alternative<TensorValue>(v); }
  bool is_tuple() const { return std::holds_alternative<std::vector<Value>>(v); }
  bool is_fnref() const { return std::holds_alternative<FnRefType>(v); }

  const TensorValue& tensor() const { return std::get<TensorValue>(v); }
  TensorValue& tensor() { return std::get<TensorValue>(v); }
  const std::vector<Value>& elements() const { return std::get<std::vector<Value>>(v); }
  std::vector<Value>& elements() { return std::get<std::vector<Value>>(v); }
  const FnRefType& fnref() const { return std::get<FnRefType>(v); }

  ValueType type() const;

  bool operator==(const Value&) const = default;
};

/// Row-major index arithmetic helpers.
std::vector<int64_t> strides_of(const std::vector<int64_t>& shape);
int64_t flat_index(const std::vector<int64_t>& index, const std::vector<int64_t>& strides);
bool next_index(std::vector<int64_t>& index, const std::vector<int64_t>& shape);

/// Frontend literal grammar: scalars (`1.5`, `3`, `true`), nested dense
/// lists (`[[1,2],[3,4]]`). Printing is canonical; parse(print(v)) == v.
std::string print_literal(const TensorValue& v);
std::string print_value(const Value& v);

/// Elementwise comparison: exact for s64/pred, relative tolerance for f32.
bool values_close(const Value& a, const Value& b, double rel_tol);

}  // namespace mhlc
