// SPDX-License-Identifier: Apache-2.0

#include "mhlc/value.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace mhlc {

TensorValue TensorValue::zeros(const TensorType& t) {
  TensorValue v;
  v.type = t;
  size_t n = static_cast<size_t>(t.element_count());
  switch (t.elem) {
    case ElementType::F32:
      v.f32.assign(n, 0.0f);
      break;
    case ElementType::S64:
      v.s64.assign(n, 0);
      break;
    case ElementType::Pred:
      v.pred.assign(n, 0);
      break;
  }
  return v;
}

TensorValue TensorValue::splat_f32(std::vector<int64_t> shape, float x) {
  TensorValue v;
  v.type = TensorType{ElementType::F32, std::move(shape)};
  v.f32.assign(static_cast<size_t>(v.type.element_count()), x);
  return v;
}

TensorValue TensorValue::scalar_f32(float x) { return splat_f32({}, x); }

TensorValue TensorValue::scalar_s64(int64_t x) {
  TensorValue v;
  v.type = TensorType{ElementType::S64, {}};
  v.s64 = {x};
  return v;
}

TensorValue TensorValue::scalar_pred(bool x) {
  TensorValue v;
  v.type = TensorType{ElementType::Pred, {}};
  v.pred = {static_cast<uint8_t>(x)};
  return v;
}

TensorValue TensorValue::from_f32(std::vector<int64_t> shape, std::vector<float> data) {
  TensorValue v;
  v.type = TensorType{ElementType::F32, std::move(shape)};
  v.f32 = std::move(data);
  return v;
}

TensorValue TensorValue::from_s64(std::vector<int64_t> shape, std::vector<int64_t> data) {
  TensorValue v;
  v.type = TensorType{ElementType::S64, std::move(shape)};
  v.s64 = std::move(data);
  return v;
}

TensorValue TensorValue::from_pred(std::vector<int64_t> shape, std::vector<uint8_t> data) {
  TensorValue v;
  v.type = TensorType{ElementType::Pred, std::move(shape)};
  v.pred = std::move(data);
  return v;
}

double TensorValue::get_as_double(int64_t i) const {
  switch (type.elem) {
    case ElementType::F32:
      return f32[static_cast<size_t>(i)];
    case ElementType::S64:
      return static_cast<double>(s64[static_cast<size_t>(i)]);
    case ElementType::Pred:
      return pred[static_cast<size_t>(i)] ? 1.0 : 0.0;
  }
  return 0;
}

int64_t TensorValue::get_as_int(int64_t i) const {
  switch (type.elem) {
    case ElementType::F32:
      return static_cast<int64_t>(f32[static_cast<size_t>(i)]);
    case ElementType::S64:
      return s64[static_cast<size_t>(i)];
    case ElementType::Pred:
      return pred[static_cast<size_t>(i)];
  }
  return 0;
}

void TensorValue::set_from_double(int64_t i, double v) {
  switch (type.elem) {
    case ElementType::F32:
      f32[static_cast<size_t>(i)] = static_cast<float>(v);
      break;
    case ElementType::S64:
      s64[static_cast<size_t>(i)] = static_cast<int64_t>(v);
      break;
    case ElementType::Pred:
      pred[static_cast<size_t>(i)] = v != 0.0;
      break;
  }
}

void TensorValue::set_from_int(int64_t i, int64_t v) {
  switch (type.elem) {
    case ElementType::F32:
      f32[static_cast<size_t>(i)] = static_cast<float>(v);
      break;
    case ElementType::S64:
      s64[static_cast<size_t>(i)] = v;
      break;
    case ElementType::Pred:
      pred[static_cast<size_t>(i)] = v != 0;
      break;
  }
}

ValueType Value::type() const {
  if (is_tensor()) return ValueType(tensor().type);
  if (is_fnref()) return ValueType::make_fnref(fnref());
  std::vector<ValueType> elems;
  for (const Value& e : elements()) elems.push_back(e.type());
  return ValueType::make_tuple(std::move(elems));
}

std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
  std::vector<int64_t> strides(shape.size());
  int64_t s = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    strides[static_cast<size_t>(i)] = s;
    s *= shape[static_cast<size_t>(i)];
  }
  return strides;
}

int64_t flat_index(const std::vector<int64_t>& index, const std::vector<int64_t>& strides) {
  int64_t f = 0;
  for (size_t i = 0; i < index.size(); ++i) f += index[i] * strides[i];
  return f;
}

bool next_index(std::vector<int64_t>& index, const std::vector<int64_t>& shape) {
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    size_t u = static_cast<size_t>(i);
    if (++index[u] < shape[u]) return true;
    index[u] = 0;
  }
  return false;
}

namespace {

std::string print_float(float v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string print_element(const TensorValue& v, int64_t i) {
  switch (v.type.elem) {
    case ElementType::F32:
      return print_float(v.f32[static_cast<size_t>(i)]);
    case ElementType::S64:
      return std::to_string(v.s64[static_cast<size_t>(i)]);
    case ElementType::Pred:
      return v.pred[static_cast<size_t>(i)] ? "true" : "false";
  }
  return "?";
}

void print_dense(std::ostringstream& os, const TensorValue& v, int dim, int64_t& flat) {
  if (dim == v.type.rank()) {
    os << print_element(v, flat++);
    return;
  }
  os << '[';
  for (int64_t i = 0; i < v.type.shape[static_cast<size_t>(dim)]; ++i) {
    if (i) os << ", ";
    print_dense(os, v, dim + 1, flat);
  }
  os << ']';
}

}  // namespace

std::string print_literal(const TensorValue& v) {
  std::ostringstream os;
  int64_t flat = 0;
  print_dense(os, v, 0, flat);
  return os.str();
}

std::string print_value(const Value& v) {
  if (v.is_tensor()) return print_literal(v.tensor());
  if (v.is_fnref()) return "@" + v.fnref().name;
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < v.elements().size(); ++i) {
    if (i) os << ", ";
    os << print_value(v.elements()[i]);
  }
  os << ')';
  return os.str();
}

bool values_close(const Value& a, const Value& b, double rel_tol) {
  if (a.is_tuple() != b.is_tuple()) return false;
  if (a.is_tuple()) {
    if (a.elements().size() != b.elements().size()) return false;
    for (size_t i = 0; i < a.elements().size(); ++i)
      if (!values_close(a.elements()[i], b.elements()[i], rel_tol)) return false;
    return true;
  }
  const TensorValue& x = a.tensor();
  const TensorValue& y = b.tensor();
  if (x.type != y.type) return false;
  if (x.type.elem != ElementType::F32) return x == y;
  for (size_t i = 0; i < x.f32.size(); ++i) {
    double u = x.f32[i], w = y.f32[i];
    if (std::isnan(u) && std::isnan(w)) continue;
    double denom = std::max({std::fabs(u), std::fabs(w), 1.0});
    if (std::fabs(u - w) > rel_tol * denom) return false;
  }
  return true;
}

}  // namespace mhlc
