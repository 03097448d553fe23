// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <string>

#include "doctest.h"
#include "mhlc/interp.hpp"
#include "mhlc/lower.hpp"
#include "mhlc/opt.hpp"
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

int count_gte_of_tuple(const HloModule& m) {
  int n = 0;
  for (const auto& c : m.computations)
    for (const auto& ins : c.instructions) {
      if (ins.config.kind != HloOpKind::GetTupleElement) continue;
      if (c.instructions[static_cast<size_t>(ins.operands[0])].config.kind == HloOpKind::Tuple)
        ++n;
    }
  return n;
}

int64_t total_instructions(const HloModule& m) {
  return count_instructions(m).grand_total;
}

// Parses a small module given as printable HLO for pass-specific cases.
HloModule from_text(const std::string& text) {
  HloModule m = parse_hlo(text);
  REQUIRE(validate_hlo(m).empty());
  return m;
}

}  // namespace

TEST_SUITE("opt") {

TEST_CASE("fold_constants folds pure all-constant instructions") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0c0 = s64[] constant(2)\n"
      "  c0c1 = s64[] constant(3)\n"
      "  ROOT c0a2 = s64[] add(c0c0, c0c1)\n"
      "}\n");
  HloModule out = fold_constants(m);
  REQUIRE(validate_hlo(out).empty());
  const HloInstruction& root = out.entry_computation().root_instruction();
  CHECK(root.config.kind == HloOpKind::Constant);
  CHECK(root.config.literal == TensorValue::scalar_s64(5));
}

TEST_CASE("fold_constants evaluates broadcast of a constant scalar") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0c0 = f32[] constant(1.5)\n"
      "  ROOT c0b1 = f32[3]{0} broadcast(c0c0), dimensions={}\n"
      "}\n");
  HloModule out = fold_constants(m);
  const HloInstruction& root = out.entry_computation().root_instruction();
  CHECK(root.config.kind == HloOpKind::Constant);
  // Oracle: replicating the scalar three times.
  CHECK(root.config.literal == TensorValue::splat_f32({3}, 1.5f));
}

TEST_CASE("fold_constants never folds rng") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  ROOT c0rng0 = f32[2]{0} rng()\n"
      "}\n");
  HloModule out = fold_constants(m);
  CHECK(out.entry_computation().root_instruction().config.kind == HloOpKind::Rng);
}

TEST_CASE("simplify_tuples collapses get-of-tuple chains") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[2]{0} parameter(0)\n"
      "  c0p1 = f32[2]{0} parameter(1)\n"
      "  c0t2 = (f32[2]{0}, f32[2]{0}) tuple(c0p0, c0p1)\n"
      "  c0t3 = ((f32[2]{0}, f32[2]{0}), f32[2]{0}) tuple(c0t2, c0p1)\n"
      "  c0gte4 = (f32[2]{0}, f32[2]{0}) get-tuple-element(c0t3), index=0\n"
      "  c0gte5 = f32[2]{0} get-tuple-element(c0gte4), index=1\n"
      "  ROOT c0a6 = f32[2]{0} add(c0gte5, c0p0)\n"
      "}\n");
  // Interpreter oracle before and after.
  Device d1, d2;
  Value a(TensorValue::from_f32({2}, {1, 2})), b(TensorValue::from_f32({2}, {3, 4}));
  Value before = run_module(d1, m, {a, b});

  HloModule out = simplify_tuples(m);
  REQUIRE(validate_hlo(out).empty());
  CHECK(count_gte_of_tuple(out) == 0);
  const HloComputation& e = out.entry_computation();
  CHECK(e.root_instruction().config.kind == HloOpKind::Add);
  for (const auto& ins : e.instructions) {
    CHECK(ins.config.kind != HloOpKind::Tuple);
    CHECK(ins.config.kind != HloOpKind::GetTupleElement);
  }
  CHECK(run_module(d2, out, {a, b}) == before);
}

TEST_CASE("simplify_tuples leaves get-tuple-element of a parameter alone") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = (f32[], f32[]) parameter(0)\n"
      "  ROOT c0gte1 = f32[] get-tuple-element(c0p0), index=0\n"
      "}\n");
  HloModule out = simplify_tuples(m);
  CHECK(out.entry_computation().root_instruction().config.kind == HloOpKind::GetTupleElement);
}

TEST_CASE("inline_maps turns an elementwise map into direct instructions") {
  HloModule m = compile_corpus("dense");
  HloModule out = inline_maps(m);
  REQUIRE(validate_hlo(out).empty());
  const HloComputation& e = out.entry_computation();
  for (const auto& ins : e.instructions) CHECK(ins.config.kind != HloOpKind::Map);
  bool has_add = false;
  for (const auto& ins : e.instructions)
    if (ins.config.kind == HloOpKind::Add && ins.type == f32v({10})) has_add = true;
  CHECK(has_add);

  std::mt19937_64 rng(23);
  Value w = ts::random_input(f32v({10, 10}), rng);
  Value x = ts::random_input(f32v({10}), rng);
  Value b = ts::random_input(f32v({10}), rng);
  Device d1, d2;
  CHECK(values_close(run_module(d1, m, {w, x, b}), run_module(d2, out, {w, x, b}), 1e-6));
}

TEST_CASE("inline_maps replaces an identity map by its operand") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[4]{0} parameter(0)\n"
      "  c0m1 = f32[4]{0} map(c0p0), dimensions={0}, to_apply=id\n"
      "  ROOT c0e2 = f32[4]{0} exponential(c0m1)\n"
      "}\n"
      "id {\n"
      "  ROOT idp0 = f32[] parameter(0)\n"
      "}\n");
  HloModule out = dce(inline_maps(m));
  const HloComputation& e = out.entry_computation();
  CHECK(e.instructions.size() == 2);
  CHECK(e.root_instruction().config.kind == HloOpKind::Exponential);
  CHECK(e.instructions[static_cast<size_t>(e.root_instruction().operands[0])].config.kind ==
        HloOpKind::Parameter);
}

TEST_CASE("inline_maps leaves a map over a non-elementwise callback intact") {
  // The fused-divide callback of softmax is elementwise, but a callback
  // containing reduce must survive. Build one directly.
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[4]{0} parameter(0)\n"
      "  ROOT c0m1 = f32[4]{0} map(c0p0), dimensions={0}, to_apply=weird\n"
      "}\n"
      "weird {\n"
      "  wp0 = f32[] parameter(0)\n"
      "  wc1 = f32[] constant(0)\n"
      "  ROOT wr2 = f32[] reduce(wp0, wc1), dimensions={}, to_apply=addc\n"
      "}\n"
      "addc {\n"
      "  ap0 = f32[] parameter(0)\n"
      "  ap1 = f32[] parameter(1)\n"
      "  ROOT aa2 = f32[] add(ap0, ap1)\n"
      "}\n");
  HloModule out = inline_maps(m);
  CHECK(out.entry_computation().root_instruction().config.kind == HloOpKind::Map);
}

TEST_CASE("dce removes orphans and keeps parameters") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[2]{0} parameter(0)\n"
      "  c0p1 = f32[2]{0} parameter(1)\n"
      "  c0c2 = f32[] constant(9)\n"
      "  ROOT c0e3 = f32[2]{0} exponential(c0p0)\n"
      "}\n");
  HloModule out = dce(m);
  REQUIRE(validate_hlo(out).empty());
  const HloComputation& e = out.entry_computation();
  CHECK(e.instructions.size() == 3);  // both parameters + root
  for (const auto& ins : e.instructions) CHECK(ins.config.kind != HloOpKind::Constant);
}

TEST_CASE("dce drops a computation once its last reference dies") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[2]{0} parameter(0)\n"
      "  c0m1 = f32[2]{0} map(c0p0), dimensions={0}, to_apply=dead\n"
      "  ROOT c0e2 = f32[2]{0} exponential(c0p0)\n"
      "}\n"
      "dead {\n"
      "  dp0 = f32[] parameter(0)\n"
      "  ROOT de1 = f32[] exponential(dp0)\n"
      "}\n");
  HloModule out = dce(m);
  CHECK(out.computations.size() == 1);
}

TEST_CASE("dce leaves a fully live module unchanged") {
  HloModule m = compile_corpus("softmax");
  CHECK(structurally_equal(dce(m), m));
}

TEST_CASE("dedup_computations merges structurally identical computations") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[4]{0} parameter(0)\n"
      "  c0m1 = f32[4]{0} map(c0p0, c0p0), dimensions={0}, to_apply=add1\n"
      "  ROOT c0m2 = f32[4]{0} map(c0m1, c0p0), dimensions={0}, to_apply=add2\n"
      "}\n"
      "add1 {\n"
      "  xp0 = f32[] parameter(0)\n"
      "  xp1 = f32[] parameter(1)\n"
      "  ROOT xa2 = f32[] add(xp0, xp1)\n"
      "}\n"
      "add2 {\n"
      "  yp0 = f32[] parameter(0)\n"
      "  yp1 = f32[] parameter(1)\n"
      "  ROOT ya2 = f32[] add(yp0, yp1)\n"
      "}\n");
  HloModule out = dedup_computations(m);
  REQUIRE(validate_hlo(out).empty());
  CHECK(out.computations.size() == 2);
  const HloComputation& e = out.entry_computation();
  CHECK(e.instructions[1].config.to_apply == e.instructions[2].config.to_apply);
}

TEST_CASE("dedup_computations keeps different callbacks apart") {
  HloModule m = from_text(
      "ENTRY main {\n"
      "  c0p0 = f32[4]{0} parameter(0)\n"
      "  c0m1 = f32[4]{0} map(c0p0, c0p0), dimensions={0}, to_apply=addc\n"
      "  ROOT c0m2 = f32[4]{0} map(c0m1, c0p0), dimensions={0}, to_apply=mulc\n"
      "}\n"
      "addc {\n"
      "  xp0 = f32[] parameter(0)\n"
      "  xp1 = f32[] parameter(1)\n"
      "  ROOT xa2 = f32[] add(xp0, xp1)\n"
      "}\n"
      "mulc {\n"
      "  yp0 = f32[] parameter(0)\n"
      "  yp1 = f32[] parameter(1)\n"
      "  ROOT ym2 = f32[] multiply(yp0, yp1)\n"
      "}\n");
  CHECK(dedup_computations(m).computations.size() == 3);
}

TEST_CASE("unknown pass name is a compile error; empty pipeline is identity") {
  HloModule m = compile_corpus("dense");
  CHECK_THROWS_AS(run_pipeline(m, {"bogus"}), CompileError);
  CHECK(structurally_equal(run_pipeline(m, {}), m));
}

TEST_CASE("default pipeline strips softmax's tuple plumbing") {
  HloModule m = compile_corpus("softmax");
  CHECK(count_gte_of_tuple(m) > 0);  // the fused divide callback packs a tuple
  HloModule out = run_pipeline(m, default_passes());
  REQUIRE(validate_hlo(out).empty());
  CHECK(count_gte_of_tuple(out) == 0);
}

TEST_CASE("every pass preserves semantics, shrinks or keeps counts, and validates") {
  std::mt19937_64 rng(31);
  std::vector<std::string> passes = default_passes();
  for (const auto& name : ts::corpus_names()) {
    FrontendModule fm = ts::load_corpus(name);
    const FrontendFunction& fn = *fm.find(name);
    HloModule m = compile(fm, name, ts::param_types(fn));
    std::vector<Value> inputs = ts::random_inputs(fn, rng);
    Device d0(5);
    Value before = run_module(d0, m, inputs);

    for (const auto& pass : passes) {
      HloModule out = run_pipeline(m, {pass});
      CHECK_MESSAGE(validate_hlo(out).empty(), (name + "/" + pass));
      Device d1(5);
      CHECK_MESSAGE(values_close(run_module(d1, out, inputs), before, 1e-5), (name + "/" + pass));
    }

    HloModule opt = run_pipeline(m, passes);
    CHECK_MESSAGE(validate_hlo(opt).empty(), name);
    Device d2(5);
    CHECK_MESSAGE(values_close(run_module(d2, opt, inputs), before, 1e-5), name);
    CHECK_MESSAGE(total_instructions(opt) <= total_instructions(m), name);
    CHECK_MESSAGE(structurally_equal(run_pipeline(opt, passes), opt), name);  // idempotent
  }
}

TEST_CASE("count_instructions matches hand counts of dense and softmax") {
  CountReport dense = count_instructions(compile_corpus("dense"));
  CHECK(dense.entry_total == 5);  // 3 parameters + dot + map
  CHECK(dense.grand_total == 8);  // + 2 parameters + add in the callback
  for (const auto& k : dense.kinds) CHECK(k.entry <= k.total);

  CountReport soft = count_instructions(compile_corpus("softmax"));
  CHECK(soft.entry_total == 7);

  int64_t sum_entry = 0, sum_total = 0;
  for (const auto& k : soft.kinds) {
    sum_entry += k.entry;
    sum_total += k.total;
  }
  CHECK(sum_entry == soft.entry_total);
  CHECK(sum_total == soft.grand_total);
}

TEST_CASE("count report renders as an aligned table") {
  CountReport r = count_instructions(compile_corpus("dense"));
  std::string table = to_text(r);
  CHECK(table.find("parameter") != std::string::npos);
  CHECK(table.find("dot") != std::string::npos);
  CHECK(table.find("map") != std::string::npos);
}

}  // TEST_SUITE
