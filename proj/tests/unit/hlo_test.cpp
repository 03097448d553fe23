// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "mhlc/hlo.hpp"
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

}  // namespace

TEST_SUITE("hlo") {

TEST_CASE("shape transfer rules") {
  HloModule empty;
  CHECK(shape_infer(empty, HloOpConfig::dot(DimNums{{1}, {0}, {}, {}}),
                    {f32v({10, 10}), f32v({10})}) == f32v({10}));
  CHECK(shape_infer(empty, HloOpConfig::dot(DimNums{{1}, {0}, {}, {}}),
                    {f32v({3, 4}), f32v({4, 2})}) == f32v({3, 2}));
  CHECK(shape_infer(empty, HloOpConfig::broadcast({10}, {}), {f32v({})}) == f32v({10}));
  CHECK(shape_infer(empty, HloOpConfig::transpose({1, 0}), {f32v({3, 4})}) == f32v({4, 3}));
  CHECK(shape_infer(empty, HloOpConfig::reshape({12}), {f32v({3, 4})}) == f32v({12}));
  CHECK(shape_infer(empty, HloOpConfig::elementwise(HloOpKind::Add), {f32v({5}), f32v({5})}) ==
        f32v({5}));
  CHECK(shape_infer(empty, HloOpConfig::elementwise(HloOpKind::Lt), {f32v({5}), f32v({5})}) ==
        ValueType::make_tensor(ElementType::Pred, {5}));
  CHECK(shape_infer(empty, HloOpConfig::rng(ElementType::F32, {2, 2}), {}) == f32v({2, 2}));
  CHECK(shape_infer(empty, HloOpConfig::tuple(), {f32v({}), f32v({2})}) ==
        ValueType::make_tuple({f32v({}), f32v({2})}));
  CHECK(shape_infer(empty, HloOpConfig::get_tuple_element(1),
                    {ValueType::make_tuple({f32v({}), f32v({2})})}) == f32v({2}));

  CHECK_THROWS_AS(shape_infer(empty, HloOpConfig::elementwise(HloOpKind::Add),
                              {f32v({5}), f32v({6})}),
                  CompileError);
  CHECK_THROWS_AS(shape_infer(empty, HloOpConfig::reshape({7}), {f32v({3, 4})}), CompileError);
  CHECK_THROWS_AS(shape_infer(empty, HloOpConfig::transpose({0, 0}), {f32v({3, 4})}),
                  CompileError);
}

TEST_CASE("reduce and map consult their callback computation") {
  HloModule m = compile_corpus("softmax");
  // Find the reduce instruction and re-derive its type.
  const HloComputation& e = m.entry_computation();
  bool found = false;
  for (const auto& ins : e.instructions) {
    if (ins.config.kind != HloOpKind::Reduce) continue;
    std::vector<ValueType> ts;
    for (int o : ins.operands) ts.push_back(e.instructions[static_cast<size_t>(o)].type);
    CHECK(shape_infer(m, ins.config, ts) == f32v({}));
    CHECK(ins.config.dimensions == std::vector<int64_t>{0});
    found = true;
  }
  CHECK(found);
}

TEST_CASE("validator accepts compiled corpus modules") {
  for (const auto& name : ts::corpus_names()) {
    FrontendModule fm = ts::load_corpus(name);
    HloModule m = compile(fm, name, ts::param_types(*fm.find(name)));
    CHECK_MESSAGE(validate_hlo(m).empty(), name);
  }
}

TEST_CASE("validator flags a stored type that disagrees with shape_infer") {
  HloModule m = compile_corpus("dense");
  REQUIRE(validate_hlo(m).empty());
  m.computations[static_cast<size_t>(m.entry)]
      .instructions[static_cast<size_t>(m.entry_computation().root)]
      .type = f32v({9});
  CHECK(validate_hlo(m).size() >= 1);
}

TEST_CASE("validator flags a map whose callback arity mismatches") {
  HloModule m = compile_corpus("dense");
  REQUIRE(validate_hlo(m).empty());
  for (auto& ins : m.computations[static_cast<size_t>(m.entry)].instructions) {
    if (ins.config.kind == HloOpKind::Map) ins.operands.pop_back();
  }
  CHECK(validate_hlo(m).size() >= 1);
}

TEST_CASE("printed dense parses back to two computations rooted at a map") {
  HloModule m = compile_corpus("dense");
  HloModule back = parse_hlo(print_hlo(m));
  CHECK(back.computations.size() == 2);
  CHECK(back.entry_computation().root_instruction().config.kind == HloOpKind::Map);
  CHECK(structurally_equal(m, back));
}

TEST_CASE("printed softmax parses back to five computations") {
  HloModule m = compile_corpus("softmax");
  HloModule back = parse_hlo(print_hlo(m));
  CHECK(back.computations.size() == 5);
  const HloInstruction& root = back.entry_computation().root_instruction();
  CHECK(root.config.kind == HloOpKind::Map);
  CHECK(root.operands.size() == 2);
  CHECK(structurally_equal(m, back));
}

TEST_CASE("malformed attribute is a parse error") {
  HloModule m = compile_corpus("softmax");
  std::string text = print_hlo(m);
  size_t pos = text.find("dimensions={0}");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 14, "dimensions={a}");
  CHECK_THROWS_AS(parse_hlo(text), ParseError);
}

TEST_CASE("hlo type and signature parsing") {
  CHECK(parse_hlo_type("f32[10,10]") == f32v({10, 10}));
  CHECK(parse_hlo_type("(f32[], s64[2])") ==
        ValueType::make_tuple({f32v({}), ValueType::make_tensor(ElementType::S64, {2})}));
  auto sig = parse_signature("f32[10,10],f32[10],f32[10]");
  REQUIRE(sig.size() == 3);
  CHECK(sig[0] == f32v({10, 10}));
}

TEST_CASE("print-parse-print is a byte fixpoint on compiled corpus modules") {
  for (const auto& name : ts::corpus_names()) {
    std::string once = print_hlo(compile_corpus(name));
    std::string twice = print_hlo(parse_hlo(once));
    CHECK_MESSAGE(once == twice, name);
  }
}

TEST_CASE("print-parse-print is a byte fixpoint on 200 random modules") {
  std::mt19937_64 rng(77001);
  for (int i = 0; i < 200; ++i) {
    HloModule m = ts::random_hlo_module(rng);
    REQUIRE(validate_hlo(m).empty());
    std::string once = print_hlo(m);
    HloModule back = parse_hlo(once);
    CHECK(structurally_equal(m, back));
    CHECK(print_hlo(back) == once);
  }
}

TEST_CASE("shape transfer matches the interpreter on 1000 random op cases") {
  std::mt19937_64 rng(99123);
  RngState rs(7);
  for (int i = 0; i < 1000; ++i) {
    ts::RandomOpCase rc = ts::random_op_case(rng);
    std::vector<ValueType> ts_;
    for (const auto& v : rc.operands) ts_.push_back(v.type());
    ValueType predicted = shape_infer(rc.module, rc.config, ts_);
    EvalContext ctx{&rc.module, &rs};
    Value result = evaluate_op(ctx, rc.config, rc.operands);
    CHECK_MESSAGE(result.type() == predicted, kind_name(rc.config.kind));
  }
}

}  // TEST_SUITE
