// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "mhlc/interp.hpp"
#include "mhlc/lower.hpp"
#include "test_support.hpp"

using namespace mhlc;

namespace {

ValueType f32v(std::vector<int64_t> shape) {
  return ValueType::make_tensor(ElementType::F32, std::move(shape));
}

HloModule compile_corpus(const std::string& name) {
  FrontendModule m = ts::load_corpus(name);
  return compile(m, name, ts::param_types(*m.find(name)));
}

// Module holding only a scalar binop callback (index 1) for reduce/map.
HloModule callback_module(HloOpKind op) {
  HloModule m;
  HloComputation e;
  e.name = "main";
  e.instructions.push_back({"k", ValueType::make_scalar(ElementType::F32),
                            HloOpConfig::constant(TensorValue::scalar_f32(0)), {}});
  e.root = 0;
  m.computations.push_back(e);
  HloComputation c;
  c.name = "cb";
  ValueType s = ValueType::make_scalar(ElementType::F32);
  c.instructions.push_back({"p0", s, HloOpConfig::parameter(0, s), {}});
  c.instructions.push_back({"p1", s, HloOpConfig::parameter(1, s), {}});
  c.instructions.push_back({"r", s, HloOpConfig::elementwise(op), {0, 1}});
  c.root = 2;
  m.computations.push_back(c);
  m.entry = 0;
  return m;
}

}  // namespace

TEST_SUITE("interp") {

TEST_CASE("transfer and fetch round trip; handles are never shared") {
  Device dev;
  Value v(TensorValue::from_f32({2}, {1, 2}));
  DeviceHandle h0 = dev.transfer(v);
  DeviceHandle h1 = dev.transfer(v);
  CHECK(h0 != h1);
  CHECK(dev.fetch(h0) == v);
  CHECK(dev.stats().transfers_in == 2);
  CHECK(dev.stats().transfers_out == 1);
  CHECK(dev.stats().live_allocations == 2);

  Value tup(std::vector<Value>{v, Value(TensorValue::scalar_s64(7))});
  DeviceHandle ht = dev.transfer(tup);
  CHECK(dev.fetch(ht) == tup);

  dev.release(h0);
  CHECK(dev.stats().live_allocations == 2);
  CHECK_THROWS_AS(dev.fetch(h0), RuntimeError);
  CHECK_THROWS_AS(dev.release(h0), RuntimeError);
}

TEST_CASE("execute_op counts one execution and checks its result type") {
  Device dev;
  HloModule m = callback_module(HloOpKind::Add);
  DeviceHandle a = dev.transfer(Value(TensorValue::from_f32({2}, {1, 2})));
  DeviceHandle b = dev.transfer(Value(TensorValue::from_f32({2}, {3, 4})));
  DeviceHandle r = dev.execute_op(m, HloOpConfig::elementwise(HloOpKind::Add), {a, b});
  CHECK(dev.stats().executions == 1);
  CHECK(dev.fetch(r).tensor().f32 == std::vector<float>{4, 6});

  // Identity-matrix dot.
  DeviceHandle id = dev.transfer(Value(TensorValue::from_f32({2, 2}, {1, 0, 0, 1})));
  DeviceHandle x = dev.transfer(Value(TensorValue::from_f32({2}, {5, 7})));
  DeviceHandle y = dev.execute_op(m, HloOpConfig::dot(DimNums{{1}, {0}, {}, {}}), {id, x});
  CHECK(dev.fetch(y).tensor().f32 == std::vector<float>{5, 7});

  // Reduce-add.
  DeviceHandle v = dev.transfer(Value(TensorValue::from_f32({3}, {1, 2, 3})));
  DeviceHandle z = dev.transfer(Value(TensorValue::scalar_f32(0)));
  DeviceHandle s = dev.execute_op(m, HloOpConfig::reduce(1, {0}), {v, z});
  CHECK(dev.fetch(s).tensor().f32[0] == doctest::Approx(6.0f));
  CHECK(dev.stats().executions == 3);
}

TEST_CASE("reduce folds in lexicographic index order") {
  // Subtraction is not commutative, so the fold order is observable:
  // ((((0 - 1) - 2) - 3) - 4) = -10.
  HloModule m = callback_module(HloOpKind::Subtract);
  RngState rng(0);
  EvalContext ctx{&m, &rng};
  Value out = evaluate_op(ctx, HloOpConfig::reduce(1, {0}),
                          {Value(TensorValue::from_f32({4}, {1, 2, 3, 4})),
                           Value(TensorValue::scalar_f32(0))});
  CHECK(out.tensor().f32[0] == doctest::Approx(-10.0f));

  // Two dimensions, reducing the trailing one: each row folds left to
  // right independently.
  Value rows = evaluate_op(ctx, HloOpConfig::reduce(1, {1}),
                           {Value(TensorValue::from_f32({2, 2}, {1, 2, 3, 4})),
                            Value(TensorValue::scalar_f32(0))});
  CHECK(rows.tensor().f32 == std::vector<float>{-3, -7});
}

TEST_CASE("map-reduce agrees with a flat scalar fold oracle") {
  HloModule m = compile_corpus("sum_exp");
  std::mt19937_64 rng(11);
  Value x = ts::random_input(f32v({5}), rng);
  Device dev;
  Value out = run_module(dev, m, {x});
  double want = 0;
  for (float v : x.tensor().f32) want += std::exp(static_cast<double>(v));
  CHECK(out.tensor().f32[0] == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("compiled dense matches an independently coded oracle") {
  HloModule m = compile_corpus("dense");

  SUBCASE("identity weights") {
    TensorValue w = TensorValue::zeros(TensorType{ElementType::F32, {10, 10}});
    for (int i = 0; i < 10; ++i) w.f32[static_cast<size_t>(i * 10 + i)] = 1.0f;
    TensorValue x = TensorValue::zeros(TensorType{ElementType::F32, {10}});
    x.f32[1] = 1.0f;
    TensorValue b = TensorValue::zeros(TensorType{ElementType::F32, {10}});
    Device dev;
    Value out = run_module(dev, m, {Value(w), Value(x), Value(b)});
    CHECK(out.tensor() == x);
    CHECK(dev.stats().executions == 1);
  }

  SUBCASE("random weights against the dense oracle") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 20; ++t) {
      Value w = ts::random_input(f32v({10, 10}), rng);
      Value x = ts::random_input(f32v({10}), rng);
      Value b = ts::random_input(f32v({10}), rng);
      Device dev;
      Value out = run_module(dev, m, {w, x, b});
      std::vector<float> want =
          ts::dense_oracle(w.tensor().f32, x.tensor().f32, b.tensor().f32, 10, 10);
      for (size_t i = 0; i < 10; ++i)
        CHECK(out.tensor().f32[i] == doctest::Approx(want[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("softmax of the zero vector is uniform") {
  HloModule m = compile_corpus("softmax");
  Device dev;
  Value out = run_module(dev, m, {Value(TensorValue::splat_f32({10}, 0.0f))});
  for (float v : out.tensor().f32) CHECK(v == doctest::Approx(0.1f));
}

TEST_CASE("softmax matches the oracle on random inputs") {
  HloModule m = compile_corpus("softmax");
  std::mt19937_64 rng(17);
  Value x = ts::random_input(f32v({10}), rng);
  Device dev;
  Value out = run_module(dev, m, {x});
  std::vector<float> want = ts::softmax_oracle(x.tensor().f32);
  for (size_t i = 0; i < 10; ++i)
    CHECK(out.tensor().f32[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("matmul matches the matrix-product oracle") {
  HloModule m = compile_corpus("matmul_mat");
  std::mt19937_64 rng(19);
  Value a = ts::random_input(f32v({3, 4}), rng);
  Value b = ts::random_input(f32v({4, 2}), rng);
  Device dev;
  Value out = run_module(dev, m, {a, b});
  std::vector<float> want = ts::matmul_oracle(a.tensor().f32, b.tensor().f32, 3, 4, 2);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(out.tensor().f32[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("rng is reproducible per seed and value index") {
  RngState a(42), b(42), c(43);
  for (int i = 0; i < 16; ++i) {
    float va = a.next_f32();
    CHECK(va == b.next_f32());
    CHECK(va >= 0.0f);
    CHECK(va < 1.0f);
  }
  // Stream values are a pure function of (seed, counter): skipping ahead
  // on one stream must not change what the other produces.
  RngState d(43);
  d.next_u64();
  d.next_u64();
  c.next_u64();
  c.next_u64();
  CHECK(c.next_u64() == d.next_u64());

  // Whole-module reproducibility with equal device seeds.
  HloModule m = compile_corpus("rng_add");
  Value x(TensorValue::splat_f32({3, 4}, 0.0f));
  Device d1(7), d2(7), d3(8);
  Value r1 = run_module(d1, m, {x});
  Value r2 = run_module(d2, m, {x});
  Value r3 = run_module(d3, m, {x});
  CHECK(r1 == r2);
  CHECK(r1 != r3);
  for (float v : r1.tensor().f32) {
    CHECK(v >= 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("a non-terminating while hits the iteration cap with a distinct error") {
  // while (true) { state = state }
  HloModule m;
  ValueType s = ValueType::make_scalar(ElementType::S64);
  ValueType st = ValueType::make_tuple({s});
  {
    HloComputation cond;
    cond.name = "cond";
    cond.instructions.push_back({"p", st, HloOpConfig::parameter(0, st), {}});
    cond.instructions.push_back({"t", ValueType::make_scalar(ElementType::Pred),
                                 HloOpConfig::constant(TensorValue::scalar_pred(true)), {}});
    cond.root = 1;
    m.computations.push_back(cond);
  }
  {
    HloComputation body;
    body.name = "body";
    body.instructions.push_back({"p", st, HloOpConfig::parameter(0, st), {}});
    body.instructions.push_back({"g", s, HloOpConfig::get_tuple_element(0), {0}});
    body.instructions.push_back({"t", st, HloOpConfig::tuple(), {1}});
    body.root = 2;
    m.computations.push_back(body);
  }
  {
    HloComputation e;
    e.name = "main";
    e.instructions.push_back({"z", s, HloOpConfig::constant(TensorValue::scalar_s64(0)), {}});
    e.instructions.push_back({"t", st, HloOpConfig::tuple(), {0}});
    e.instructions.push_back({"w", st, HloOpConfig::while_loop(0, 1), {1}});
    e.root = 2;
    m.computations.push_back(e);
  }
  m.entry = 2;
  REQUIRE(validate_hlo(m).empty());

  RngState rng(0);
  EvalContext ctx{&m, &rng};
  ctx.while_cap = 100;
  try {
    evaluate_computation(ctx, 2, {});
    FAIL("expected RuntimeError");
  } catch (const RuntimeError& e) {
    CHECK(std::string(e.what()).find("cap") != std::string::npos);
  }
}

TEST_CASE("run_module rejects input arity and type mismatches") {
  HloModule m = compile_corpus("dense");
  Device dev;
  CHECK_THROWS_AS(run_module(dev, m, {}), RuntimeError);
  CHECK_THROWS_AS(run_module(dev, m,
                             {Value(TensorValue::splat_f32({9, 9}, 0)),
                              Value(TensorValue::splat_f32({10}, 0)),
                              Value(TensorValue::splat_f32({10}, 0))}),
                  RuntimeError);
}

}  // TEST_SUITE
