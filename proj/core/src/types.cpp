// SPDX-License-Identifier: Apache-2.0

#include "mhlc/types.hpp"

#include <sstream>

namespace mhlc {

const char* to_string(ElementType e) {
  switch (e) {
    case ElementType::F32:
      return "f32";
    case ElementType::S64:
      return "s64";
    case ElementType::Pred:
      return "pred";
  }
  return "?";
}

std::string to_string(const TensorType& t) {
  std::ostringstream os;
  os << to_string(t.elem) << '[';
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) os << ',';
    os << t.shape[i];
  }
  os << ']';
  return os.str();
}

std::string to_string(const ValueType& t, TypeSyntax syntax) {
  switch (t.kind) {
    case ValueType::Kind::Tensor:
      return to_string(t.tensor);
    case ValueType::Kind::Tuple: {
      std::ostringstream os;
      os << (syntax == TypeSyntax::Hlo ? "(" : "tuple(");
      for (size_t i = 0; i < t.elements.size(); ++i) {
        if (i) os << ", ";
        os << to_string(t.elements[i], syntax);
      }
      os << ')';
      return os.str();
    }
    case ValueType::Kind::FnRef:
      return "@" + t.fnref.name;
  }
  return "?";
}

}  // namespace mhlc
