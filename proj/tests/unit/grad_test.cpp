// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <string>

#include "doctest.h"
#include "mhlc/dynamic.hpp"
#include "mhlc/grad.hpp"
#include "mhlc/infer.hpp"
#include "mhlc/interp.hpp"
#include "mhlc/lower.hpp"
#include "test_support.hpp"

using namespace mhlc;

namespace {

ValueType f32v(std::vector<int64_t> shape) {
  return ValueType::make_tensor(ElementType::F32, std::move(shape));
}

std::vector<int> all_f32_params(const FrontendFunction& fn) {
  std::vector<int> wrt;
  for (size_t i = 0; i < fn.params.size(); ++i)
    if (fn.params[i].type && fn.params[i].type->is_tensor() &&
        fn.params[i].type->tensor.elem == ElementType::F32)
      wrt.push_back(static_cast<int>(i));
  return wrt;
}

Value eval_grad(const GradResult& g, const std::vector<Value>& inputs) {
  Device dev;
  return dynamic_eval(g.module, g.function, inputs, dev);
}

}  // namespace

TEST_SUITE("grad") {

TEST_CASE("gradient of sum of squares is 2x") {
  FrontendModule m = ts::load_corpus("sum_squares");
  GradResult g = grad(m, {"sum_squares", {0}});
  CHECK(validate(g.module).empty());
  Value x(TensorValue::from_f32({5}, {1, -2, 3, 0, 0.5f}));
  Value out = eval_grad(g, {x});
  REQUIRE(out.is_tuple());
  const TensorValue& gx = out.elements()[0].tensor();
  for (size_t i = 0; i < 5; ++i)
    CHECK(gx.f32[i] == doctest::Approx(2.0f * x.tensor().f32[i]));
}

TEST_CASE("gradient of sum of exponentials at zero is all ones") {
  FrontendModule m = ts::load_corpus("sum_exp");
  GradResult g = grad(m, {"sum_exp", {0}});
  Value out = eval_grad(g, {Value(TensorValue::splat_f32({5}, 0.0f))});
  for (float v : out.elements()[0].tensor().f32) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("dense loss gradient has the analytic bias derivative") {
  FrontendModule m = ts::load_corpus("dense_loss");
  const FrontendFunction& fn = *m.find("dense_loss");
  GradResult g = grad(m, {"dense_loss", all_f32_params(fn)});
  std::mt19937_64 rng(41);
  std::vector<Value> inputs = ts::random_inputs(fn, rng);
  Value out = eval_grad(g, inputs);
  REQUIRE(out.elements().size() == 3);
  // d/db sum(Wx + b) = vector of ones.
  for (float v : out.elements()[2].tensor().f32) CHECK(v == doctest::Approx(1.0f));
  // d/dW sum(Wx + b) = outer(ones, x): row i equals x.
  const TensorValue& gw = out.elements()[0].tensor();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(gw.f32[static_cast<size_t>(i * 3 + j)] ==
            doctest::Approx(inputs[1].tensor().f32[static_cast<size_t>(j)]).epsilon(1e-4));
}

TEST_CASE("gradient of a constant function is exactly zero") {
  FrontendModule m = parse_program(
      "func @f(%x: f32[3]) {\nbb0:\n  %c = const f32[] 7\n  return %c\n}\n");
  GradResult g = grad(m, {"f", {0}});
  Value out = eval_grad(g, {Value(TensorValue::from_f32({3}, {1, 2, 3}))});
  CHECK(out.elements()[0].tensor() == TensorValue::zeros(TensorType{ElementType::F32, {3}}));
}

TEST_CASE("transpose gradient inverse-permutes the cotangent") {
  FrontendModule m = parse_program(
      "func @f(%x: f32[2,3]) {\nbb0:\n"
      "  %p = const s64[2] [1, 0]\n"
      "  %t = call transpose(%x, %p)\n"
      "  %w = const f32[3,2] [[1, 2], [3, 4], [5, 6]]\n"
      "  %m = call broadcast(@multiply, %t, %w)\n"
      "  %s = call sum(%m)\n  return %s\n}\n");
  GradResult g = grad(m, {"f", {0}});
  Value out = eval_grad(g, {Value(TensorValue::splat_f32({2, 3}, 1.0f))});
  // d/dx[i][j] = w[j][i].
  const TensorValue& gx = out.elements()[0].tensor();
  CHECK(gx.type.shape == std::vector<int64_t>{2, 3});
  CHECK(gx.f32 == std::vector<float>{1, 3, 5, 2, 4, 6});
}

TEST_CASE("finite differences confirm the corpus loss gradients") {
  std::mt19937_64 rng(47);
  for (const std::string name : {"sum_squares", "sum_exp", "dense_loss", "softmax_loss"}) {
    FrontendModule m = ts::load_corpus(name);
    const FrontendFunction& fn = *m.find(name);
    GradRequest req{name, all_f32_params(fn)};
    for (int draw = 0; draw < 5; ++draw) {
      GradCheckReport rep = check_gradient(m, req, ts::random_inputs(fn, rng));
      CHECK_MESSAGE(rep.ok, name << " draw " << draw << " max_rel=" << rep.max_rel_err);
      CHECK(rep.max_rel_err <= 1e-3);
    }
  }
}

TEST_CASE("the gradient function is itself offloadable and compiles") {
  FrontendModule m = ts::load_corpus("dense_loss");
  const FrontendFunction& fn = *m.find("dense_loss");
  GradResult g = grad(m, {"dense_loss", all_f32_params(fn)});
  CHECK(validate(g.module).empty());

  const FrontendFunction& gf = *g.module.find(g.function);
  std::vector<AbstractValue> args;
  for (const auto& t : ts::param_types(gf)) args.push_back(AbstractValue::from_type(t));
  InferenceResult res = infer(g.module, gf, args);
  CHECK(check_offloadable(g.module, gf, res).offloadable);

  HloModule h = compile(g.module, g.function, ts::param_types(gf));
  REQUIRE(validate_hlo(h).empty());
  // The matmul VJP shows up as dot and transpose instructions.
  bool has_dot = false, has_transpose = false;
  for (const auto& c : h.computations)
    for (const auto& ins : c.instructions) {
      has_dot |= ins.config.kind == HloOpKind::Dot;
      has_transpose |= ins.config.kind == HloOpKind::Transpose;
    }
  CHECK(has_dot);
  CHECK(has_transpose);

  // Compiled gradient equals the dynamic gradient.
  std::mt19937_64 rng(53);
  std::vector<Value> inputs = ts::random_inputs(fn, rng);
  Device d1, d2;
  CHECK(values_close(run_module(d1, h, inputs), dynamic_eval(g.module, g.function, inputs, d2),
                     1e-5));
}

TEST_CASE("control flow in the primal is rejected") {
  FrontendModule m = parse_program(ts::read_file(ts::data_path("loop_f32.mhl")));
  try {
    grad(m, {m.functions[0].name, {0}});
    FAIL("expected CompileError");
  } catch (const CompileError& e) {
    CHECK(std::string(e.what()).find("control flow") != std::string::npos);
  }
}

TEST_CASE("a builtin without a derivative rule is named in the error") {
  FrontendModule m = parse_program(
      "func @f(%x: f32[2,2]) {\nbb0:\n"
      "  %s = const s64[2] [2, 2]\n"
      "  %r = call rng(%s)\n"
      "  %y = call add(%x, %r)\n"
      "  %l = call sum(%y)\n  return %l\n}\n");
  try {
    grad(m, {"f", {0}});
    FAIL("expected CompileError");
  } catch (const CompileError& e) {
    CHECK(std::string(e.what()).find("rng") != std::string::npos);
  }
}

TEST_CASE("non-scalar outputs and bad wrt indices are rejected") {
  FrontendModule m = ts::load_corpus("dense");  // returns f32[10]
  CHECK_THROWS_AS(grad(m, {"dense", {0}}), CompileError);

  FrontendModule m2 = ts::load_corpus("sum_squares");
  CHECK_THROWS_AS(grad(m2, {"sum_squares", {}}), CompileError);
  CHECK_THROWS_AS(grad(m2, {"sum_squares", {5}}), CompileError);
}

}  // TEST_SUITE
