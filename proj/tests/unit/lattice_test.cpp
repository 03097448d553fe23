// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "doctest.h"
#include "mhlc/lattice.hpp"

using namespace mhlc;

namespace {

// A finite sub-lattice: small constants, small shapes (rank <= 2, dims
// <= 3), one function reference, tuples of scalar elements, closed under
// join below.
std::vector<AbstractValue> base_elements() {
  std::vector<AbstractValue> xs;
  xs.push_back(AbstractValue::bottom());
  xs.push_back(AbstractValue::top());
  xs.push_back(AbstractValue::constant_of(TensorValue::scalar_s64(0)));
  xs.push_back(AbstractValue::constant_of(TensorValue::scalar_s64(1)));
  xs.push_back(AbstractValue::constant_of(TensorValue::scalar_f32(0)));
  xs.push_back(AbstractValue::constant_of(TensorValue::scalar_f32(1.5f)));
  xs.push_back(AbstractValue::constant_of(TensorValue::scalar_pred(true)));
  xs.push_back(AbstractValue::constant_of(TensorValue::from_f32({2}, {1, 2})));
  xs.push_back(AbstractValue::typed(TensorType{ElementType::F32, {}}));
  xs.push_back(AbstractValue::typed(TensorType{ElementType::S64, {}}));
  xs.push_back(AbstractValue::typed(TensorType{ElementType::Pred, {}}));
  xs.push_back(AbstractValue::typed(TensorType{ElementType::F32, {2}}));
  xs.push_back(AbstractValue::typed(TensorType{ElementType::F32, {3}}));
  xs.push_back(AbstractValue::typed(TensorType{ElementType::F32, {2, 3}}));
  xs.push_back(AbstractValue::fnref(FnRefType{"add", {}}));
  xs.push_back(AbstractValue::fnref(FnRefType{"exp", {}}));
  xs.push_back(AbstractValue::tuple({AbstractValue::constant_of(TensorValue::scalar_s64(1)),
                                     AbstractValue::typed(TensorType{ElementType::F32, {2}})}));
  xs.push_back(AbstractValue::tuple({AbstractValue::constant_of(TensorValue::scalar_s64(2)),
                                     AbstractValue::typed(TensorType{ElementType::F32, {2}})}));
  xs.push_back(AbstractValue::tuple({AbstractValue::bottom(), AbstractValue::top()}));
  return xs;
}

// Closure of the base set under pairwise join.
std::vector<AbstractValue> closed_elements() {
  std::vector<AbstractValue> xs = base_elements();
  bool changed = true;
  while (changed) {
    changed = false;
    size_t n = xs.size();
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        AbstractValue v = join(xs[i], xs[j]);
        bool found = false;
        for (const auto& x : xs)
          if (x == v) {
            found = true;
            break;
          }
        if (!found) {
          xs.push_back(v);
          changed = true;
        }
      }
  }
  return xs;
}

}  // namespace

TEST_SUITE("lattice") {

TEST_CASE("join examples") {
  AbstractValue c3 = AbstractValue::constant_of(TensorValue::scalar_s64(3));
  AbstractValue c4 = AbstractValue::constant_of(TensorValue::scalar_s64(4));
  CHECK(join(AbstractValue::bottom(), c3) == c3);
  CHECK(join(c3, c4) == AbstractValue::typed(TensorType{ElementType::S64, {}}));
  CHECK(join(AbstractValue::typed(TensorType{ElementType::F32, {10}}),
             AbstractValue::typed(TensorType{ElementType::F32, {20}})) == AbstractValue::top());
  CHECK(join(c3, AbstractValue::top()).is_top());
}

TEST_CASE("join is idempotent and commutative, leq is a partial order") {
  auto xs = closed_elements();
  for (const auto& a : xs) {
    CHECK(join(a, a) == a);
    CHECK(lattice_leq(a, a));
    CHECK(lattice_leq(AbstractValue::bottom(), a));
    CHECK(lattice_leq(a, AbstractValue::top()));
    for (const auto& b : xs) {
      CHECK(join(a, b) == join(b, a));
      if (lattice_leq(a, b) && lattice_leq(b, a)) CHECK(a == b);  // antisymmetry
    }
  }
}

TEST_CASE("join is associative and monotone; the result is a least upper bound") {
  auto xs = closed_elements();
  for (const auto& a : xs)
    for (const auto& b : xs) {
      AbstractValue ab = join(a, b);
      // Upper bound.
      CHECK(lattice_leq(a, ab));
      CHECK(lattice_leq(b, ab));
      for (const auto& c : xs) {
        CHECK(join(join(a, b), c) == join(a, join(b, c)));
        // Least: any other upper bound in the closed set sits above.
        if (lattice_leq(a, c) && lattice_leq(b, c)) CHECK(lattice_leq(ab, c));
        // Monotonicity of join in its first argument.
        if (lattice_leq(a, b)) CHECK(lattice_leq(join(a, c), join(b, c)));
      }
    }
}

TEST_CASE("leq is transitive over the closed set") {
  auto xs = closed_elements();
  for (const auto& a : xs)
    for (const auto& b : xs) {
      if (!lattice_leq(a, b)) continue;
      for (const auto& c : xs)
        if (lattice_leq(b, c)) CHECK(lattice_leq(a, c));
    }
}

TEST_CASE("abstraction of runtime values sits below their type abstraction") {
  Value v(TensorValue::from_f32({2}, {1, 2}));
  AbstractValue cv = AbstractValue::from_value(v);
  AbstractValue tv = AbstractValue::from_type(v.type());
  CHECK(lattice_leq(cv, tv));
  CHECK(cv.type_of() == v.type());
  CHECK(cv.fully_typed());
  CHECK_FALSE(AbstractValue::top().type_of().has_value());
  CHECK_FALSE(AbstractValue::bottom().fully_typed());
}

}  // TEST_SUITE
