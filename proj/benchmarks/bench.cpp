// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks of the compilation pipeline, the optimizer and both
// evaluation paths, on representative corpus programs.

#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>
#include <string>

#include "mhlc/dynamic.hpp"
#include "mhlc/frontend.hpp"
#include "mhlc/grad.hpp"
#include "mhlc/hlo.hpp"
#include "mhlc/interp.hpp"
#include "mhlc/lower.hpp"
#include "mhlc/opt.hpp"

using namespace mhlc;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

FrontendModule load(const std::string& name) {
  return parse_program(read_file(std::string(MHLC_BENCH_CORPUS_DIR) + "/" + name + ".mhl"));
}

std::vector<ValueType> param_types(const FrontendFunction& fn) {
  std::vector<ValueType> ts;
  for (const auto& p : fn.params) ts.push_back(p.type.value());
  return ts;
}

std::vector<Value> dense_inputs() {
  TensorValue w = TensorValue::splat_f32({10, 10}, 0.01f);
  TensorValue x = TensorValue::splat_f32({10}, 0.5f);
  TensorValue b = TensorValue::splat_f32({10}, 0.1f);
  return {Value(w), Value(x), Value(b)};
}

}  // namespace

static void BM_ParseDense(benchmark::State& state) {
  std::string src = read_file(std::string(MHLC_BENCH_CORPUS_DIR) + "/dense.mhl");
  for (auto _ : state) benchmark::DoNotOptimize(parse_program(src));
}
BENCHMARK(BM_ParseDense);

static void BM_CompileDense(benchmark::State& state) {
  FrontendModule m = load("dense");
  auto ts = param_types(m.functions[0]);
  for (auto _ : state) benchmark::DoNotOptimize(compile(m, "dense", ts));
}
BENCHMARK(BM_CompileDense);

static void BM_CompileSoftmax(benchmark::State& state) {
  FrontendModule m = load("softmax");
  auto ts = param_types(*m.find("softmax"));
  for (auto _ : state) benchmark::DoNotOptimize(compile(m, "softmax", ts));
}
BENCHMARK(BM_CompileSoftmax);

static void BM_CompileLoopSum(benchmark::State& state) {
  FrontendModule m = load("loop_sum");
  for (auto _ : state) benchmark::DoNotOptimize(compile(m, "loop_sum", {}));
}
BENCHMARK(BM_CompileLoopSum);

static void BM_OptimizeSoftmax(benchmark::State& state) {
  FrontendModule m = load("softmax");
  HloModule h = compile(m, "softmax", param_types(*m.find("softmax")));
  for (auto _ : state) benchmark::DoNotOptimize(run_pipeline(h, default_passes()));
}
BENCHMARK(BM_OptimizeSoftmax);

static void BM_RunDenseCompiled(benchmark::State& state) {
  FrontendModule m = load("dense");
  HloModule h = compile(m, "dense", param_types(m.functions[0]));
  std::vector<Value> in = dense_inputs();
  for (auto _ : state) {
    Device dev;
    benchmark::DoNotOptimize(run_module(dev, h, in));
  }
}
BENCHMARK(BM_RunDenseCompiled);

static void BM_RunDenseDynamic(benchmark::State& state) {
  FrontendModule m = load("dense");
  std::vector<Value> in = dense_inputs();
  for (auto _ : state) {
    Device dev;
    benchmark::DoNotOptimize(dynamic_eval(m, "dense", in, dev, {}));
  }
}
BENCHMARK(BM_RunDenseDynamic);

static void BM_GradDenseLoss(benchmark::State& state) {
  FrontendModule m = load("dense_loss");
  GradRequest req;
  req.entry = "dense_loss";
  req.wrt = {0, 2};
  for (auto _ : state) benchmark::DoNotOptimize(grad(m, req));
}
BENCHMARK(BM_GradDenseLoss);

static void BM_PrintParseHloSoftmax(benchmark::State& state) {
  FrontendModule m = load("softmax");
  HloModule h = compile(m, "softmax", param_types(*m.find("softmax")));
  std::string text = print_hlo(h);
  for (auto _ : state) benchmark::DoNotOptimize(parse_hlo(text));
}
BENCHMARK(BM_PrintParseHloSoftmax);

BENCHMARK_MAIN();
