// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "mhlc/dynamic.hpp"
#include "mhlc/interp.hpp"
#include "mhlc/lower.hpp"
#include "test_support.hpp"

using namespace mhlc;

TEST_SUITE("dynamic") {

TEST_CASE("dense runs as two device executions dynamically, one compiled") {
  FrontendModule m = ts::load_corpus("dense");
  std::mt19937_64 rng(3);
  std::vector<Value> inputs = ts::random_inputs(*m.find("dense"), rng);

  Device ddyn;
  Value vdyn = dynamic_eval(m, "dense", inputs, ddyn);
  CHECK(ddyn.stats().executions == 2);  // dot, map

  Device dcomp;
  HloModule h = compile(m, "dense", ts::param_types(*m.find("dense")));
  Value vcomp = run_module(dcomp, h, inputs);
  CHECK(dcomp.stats().executions == 1);

  CHECK(values_close(vdyn, vcomp, 1e-5));
}

TEST_CASE("dynamic evaluation walks loops concretely") {
  FrontendModule m = ts::load_corpus("loop_sum");
  Device dev;
  Value out = dynamic_eval(m, "loop_sum", {}, dev);
  CHECK(out.tensor().s64[0] == 45);

  FrontendModule mp = ts::load_corpus("loop_sum_param");
  for (int64_t n : {int64_t{0}, int64_t{1}, int64_t{100}}) {
    Device d2;
    Value o = dynamic_eval(mp, "loop_sum_param", {Value(TensorValue::scalar_s64(n))}, d2);
    CHECK(o.tensor().s64[0] == n * (n - 1) / 2);
  }
}

TEST_CASE("dynamic and compiled rng agree for equal seeds") {
  FrontendModule m = ts::load_corpus("rng_add");
  Value x(TensorValue::splat_f32({3, 4}, 0.5f));
  Device ddyn(99);
  Value vdyn = dynamic_eval(m, "rng_add", {x}, ddyn);
  Device dcomp(99);
  HloModule h = compile(m, "rng_add", ts::param_types(*m.find("rng_add")));
  Value vcomp = run_module(dcomp, h, {x});
  CHECK(vdyn == vcomp);
}

TEST_CASE("dynamic executions never undercut the compiled path on the corpus") {
  std::mt19937_64 rng(8);
  for (const auto& name : ts::corpus_names()) {
    FrontendModule m = ts::load_corpus(name);
    const FrontendFunction& fn = *m.find(name);
    std::vector<Value> inputs = ts::random_inputs(fn, rng);

    Device ddyn(1);
    dynamic_eval(m, name, inputs, ddyn);
    Device dcomp(1);
    HloModule h = compile(m, name, ts::param_types(fn));
    run_module(dcomp, h, inputs);
    CHECK(dcomp.stats().executions == 1);
    CHECK_MESSAGE(ddyn.stats().executions >= dcomp.stats().executions, name);
  }
}

TEST_CASE("trace callback sees one line per executed op") {
  FrontendModule m = ts::load_corpus("dense");
  std::mt19937_64 rng(4);
  std::vector<Value> inputs = ts::random_inputs(*m.find("dense"), rng);
  std::vector<std::string> lines;
  DynamicOptions opts;
  opts.trace = [&](const std::string& s) { lines.push_back(s); };
  Device dev;
  dynamic_eval(m, "dense", inputs, dev, opts);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].find("dot") != std::string::npos);
  CHECK(lines[1].find("map") != std::string::npos);
}

TEST_CASE("dynamic evaluation releases its device allocations") {
  FrontendModule m = ts::load_corpus("softmax");
  std::mt19937_64 rng(6);
  std::vector<Value> inputs = ts::random_inputs(*m.find("softmax"), rng);
  Device dev;
  dynamic_eval(m, "softmax", inputs, dev);
  CHECK(dev.stats().live_allocations == 0);
}

TEST_CASE("branching on a non-pred value is a runtime error") {
  FrontendModule m = parse_program(
      "func @f(%n: s64[]) {\n"
      "bb0:\n  br %n, bb1, bb2\n"
      "bb1:\n  %a = const s64[] 1\n  return %a\n"
      "bb2:\n  %b = const s64[] 2\n  return %b\n}\n");
  Device dev;
  CHECK_THROWS_AS(dynamic_eval(m, "f", {Value(TensorValue::scalar_s64(1))}, dev), RuntimeError);
}

TEST_CASE("step cap stops runaway dynamic loops") {
  FrontendModule m = parse_program(
      "func @f() {\n"
      "bb0:\n  %t = const pred[] true\n  jmp bb1\n"
      "bb1:\n  br %t, bb1, bb2\n"
      "bb2:\n  %z = const s64[] 0\n  return %z\n}\n");
  Device dev;
  DynamicOptions opts;
  opts.step_cap = 1000;
  CHECK_THROWS_AS(dynamic_eval(m, "f", {}, dev, opts), RuntimeError);
}

}  // TEST_SUITE
