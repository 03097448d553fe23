// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ts {

using namespace mhlc;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> corpus_names() {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(MHLC_CORPUS_DIR)) {
    if (e.path().extension() == ".mhl") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::string corpus_path(const std::string& name) {
  return std::string(MHLC_CORPUS_DIR) + "/" + name + ".mhl";
}

std::string data_path(const std::string& name) {
  return std::string(MHLC_DATA_DIR) + "/" + name;
}

FrontendModule load_corpus(const std::string& name) {
  return parse_program(read_file(corpus_path(name)));
}

std::vector<ValueType> param_types(const FrontendFunction& fn) {
  std::vector<ValueType> out;
  for (const auto& p : fn.params) {
    if (!p.type) throw std::runtime_error("parameter " + p.name + " lacks a declared type");
    out.push_back(*p.type);
  }
  return out;
}

Value random_input(const ValueType& t, std::mt19937_64& rng) {
  if (t.is_tuple()) {
    std::vector<Value> elems;
    for (const auto& e : t.elements) elems.push_back(random_input(e, rng));
    return Value(std::move(elems));
  }
  if (t.is_fnref()) return Value(t.fnref);
  const TensorType& tt = t.tensor;
  int64_t n = tt.element_count();
  switch (tt.elem) {
    case ElementType::F32: {
      std::uniform_real_distribution<float> d(-2.0f, 2.0f);
      std::vector<float> data(static_cast<size_t>(n));
      for (auto& v : data) v = d(rng);
      return Value(TensorValue::from_f32(tt.shape, std::move(data)));
    }
    case ElementType::S64: {
      std::uniform_int_distribution<int64_t> d(0, 8);
      std::vector<int64_t> data(static_cast<size_t>(n));
      for (auto& v : data) v = d(rng);
      return Value(TensorValue::from_s64(tt.shape, std::move(data)));
    }
    case ElementType::Pred: {
      std::vector<uint8_t> data(static_cast<size_t>(n));
      for (auto& v : data) v = static_cast<uint8_t>(rng() & 1);
      return Value(TensorValue::from_pred(tt.shape, std::move(data)));
    }
  }
  throw std::runtime_error("unreachable");
}

std::vector<Value> random_inputs(const FrontendFunction& fn, std::mt19937_64& rng) {
  std::vector<Value> out;
  for (const auto& t : param_types(fn)) out.push_back(random_input(t, rng));
  return out;
}

std::vector<float> dense_oracle(const std::vector<float>& w, const std::vector<float>& x,
                                const std::vector<float>& b, int64_t m, int64_t k) {
  std::vector<float> y(static_cast<size_t>(m), 0.0f);
  for (int64_t i = 0; i < m; ++i) {
    float acc = 0.0f;
    for (int64_t j = 0; j < k; ++j)
      acc += w[static_cast<size_t>(i * k + j)] * x[static_cast<size_t>(j)];
    y[static_cast<size_t>(i)] = acc + b[static_cast<size_t>(i)];
  }
  return y;
}

std::vector<float> matmul_oracle(const std::vector<float>& a, const std::vector<float>& b,
                                 int64_t m, int64_t k, int64_t n) {
  std::vector<float> c(static_cast<size_t>(m * n), 0.0f);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t t = 0; t < k; ++t)
        acc += a[static_cast<size_t>(i * k + t)] * b[static_cast<size_t>(t * n + j)];
      c[static_cast<size_t>(i * n + j)] = acc;
    }
  return c;
}

std::vector<float> softmax_oracle(const std::vector<float>& x) {
  std::vector<float> e(x.size());
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i]);
    s += e[i];
  }
  for (auto& v : e) v = static_cast<float>(v / s);
  return e;
}

// ---------------------------------------------------------------------
// Random frontend programs (generated as text, then parsed).
// ---------------------------------------------------------------------

FrontendModule random_frontend_module(std::mt19937_64& rng) {
  auto bit = [&] { return rng() & 1; };
  int n = 1 + static_cast<int>(rng() % 4);
  std::ostringstream os;
  os << "func @h(%a: f32[], %b: f32[]) {\n"
        "bb0:\n"
        "  %m = call multiply(%a, %b)\n"
        "  return %m\n"
        "}\n";
  os << "func @main(%x: f32[" << n << "], %p: pred[]) {\n";
  os << "bb0:\n";
  std::string vec = "%x";  // current f32[n] value
  os << "  %c0 = const f32[] " << (rng() % 7) << ".5\n";
  os << "  %cv = const f32[" << n << "] [";
  for (int i = 0; i < n; ++i) os << (i ? ", " : "") << (rng() % 9) << ".25";
  os << "]\n";
  if (bit()) {
    os << "  %t = tuple(" << vec << ", %cv)\n";
    os << "  %g0 = get %t, 0\n";
    vec = "%g0";
  }
  if (bit()) {
    os << "  %b0 = call broadcast(@h, " << vec << ", %cv)\n";
    vec = "%b0";
  }
  if (bit()) {
    os << "  %k0 = call broadcast(@h[" << (rng() % 5) << ".5], " << vec << ")\n";
    vec = "%k0";
  }
  if (bit()) {
    os << "  %f0 = call_fn @h(%c0, %c0)\n";
    os << "  %s0 = call broadcast(@add, " << vec << ", %f0)\n";
    vec = "%s0";
  }
  if (bit()) {
    // Reduce to a scalar, then a diamond over it.
    os << "  %r0 = call mapreduce(@identity, @add, " << vec << ", all)\n";
    os << "  br %p, bb1, bb2\n";
    os << "bb1:\n";
    os << "  %u1 = call add(%r0, %c0)\n";
    os << "  jmp bb3\n";
    os << "bb2:\n";
    os << "  %u2 = call multiply(%r0, %c0)\n";
    os << "  jmp bb3\n";
    os << "bb3:\n";
    os << "  %ph = phi [bb1: %u1, bb2: %u2]\n";
    os << "  return %ph\n";
    os << "}\n";
  } else {
    os << "  return " << vec << "\n";
    os << "}\n";
  }
  return parse_program(os.str());
}

// ---------------------------------------------------------------------
// Random HLO modules.
// ---------------------------------------------------------------------

namespace {

// Scalar two-parameter callback computation.
HloComputation scalar_callback(const std::string& name, HloOpKind op, ElementType elem) {
  HloComputation c;
  c.name = name;
  ValueType s = ValueType::make_scalar(elem);
  c.instructions.push_back({name + "p0", s, HloOpConfig::parameter(0, s), {}});
  c.instructions.push_back({name + "p1", s, HloOpConfig::parameter(1, s), {}});
  c.instructions.push_back({name + "r", s, HloOpConfig::elementwise(op), {0, 1}});
  c.root = 2;
  return c;
}

TensorValue random_f32_tensor(const std::vector<int64_t>& shape, std::mt19937_64& rng,
                              float lo = -2.0f, float hi = 2.0f) {
  TensorType t{ElementType::F32, shape};
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> data(static_cast<size_t>(t.element_count()));
  for (auto& v : data) v = d(rng);
  return TensorValue::from_f32(shape, std::move(data));
}

}  // namespace

HloModule random_hlo_module(std::mt19937_64& rng) {
  HloModule m;
  m.computations.resize(1);
  m.computations.push_back(scalar_callback("cb", HloOpKind::Add, ElementType::F32));
  m.entry = 0;

  std::vector<int64_t> shape;
  int rank = static_cast<int>(rng() % 3);
  for (int i = 0; i < rank; ++i) shape.push_back(1 + static_cast<int64_t>(rng() % 3));
  ValueType vs = ValueType::make_tensor(ElementType::F32, shape);
  ValueType sc = ValueType::make_scalar(ElementType::F32);

  HloComputation& e = m.computations[0];
  e.name = "main";
  int counter = 0;
  auto add = [&](HloOpConfig cfg, std::vector<int> ops) {
    std::vector<ValueType> ts;
    for (int o : ops) ts.push_back(e.instructions[static_cast<size_t>(o)].type);
    ValueType t = shape_infer(m, cfg, ts);
    e.instructions.push_back({"x" + std::to_string(counter++), t, std::move(cfg), std::move(ops)});
    return static_cast<int>(e.instructions.size()) - 1;
  };

  std::vector<int> pool;  // instructions of type vs
  pool.push_back(add(HloOpConfig::parameter(0, vs), {}));
  pool.push_back(add(HloOpConfig::constant(random_f32_tensor(shape, rng)), {}));
  int scalar = add(HloOpConfig::constant(TensorValue::scalar_f32(0.5f)), {});

  auto pick = [&] { return pool[rng() % pool.size()]; };
  std::vector<int64_t> iota(shape.size());
  std::iota(iota.begin(), iota.end(), 0);

  int steps = 3 + static_cast<int>(rng() % 6);
  for (int i = 0; i < steps; ++i) {
    switch (rng() % 8) {
      case 0: {
        HloOpKind ks[] = {HloOpKind::Add, HloOpKind::Subtract, HloOpKind::Multiply,
                          HloOpKind::Maximum};
        pool.push_back(add(HloOpConfig::elementwise(ks[rng() % 4]), {pick(), pick()}));
        break;
      }
      case 1:
        pool.push_back(add(HloOpConfig::elementwise(HloOpKind::Exponential), {pick()}));
        break;
      case 2:
        pool.push_back(add(HloOpConfig::map(1, iota), {pick(), pick()}));
        break;
      case 3:
        if (!shape.empty()) add(HloOpConfig::reduce(1, {0}), {pick(), scalar});
        break;
      case 4:
        pool.push_back(add(HloOpConfig::broadcast(shape, {}), {scalar}));
        break;
      case 5:
        if (shape.size() == 2) add(HloOpConfig::transpose({1, 0}), {pick()});
        break;
      case 6: {
        int64_t count = vs.tensor.element_count();
        add(HloOpConfig::reshape({count}), {pick()});
        break;
      }
      case 7: {
        int t = add(HloOpConfig::tuple(), {pick(), pick()});
        pool.push_back(add(HloOpConfig::get_tuple_element(1), {t}));
        break;
      }
    }
  }
  e.root = static_cast<int>(e.instructions.size()) - 1;
  return m;
}

// ---------------------------------------------------------------------
// Random single-op cases for shape transfer vs interpreter checks.
// ---------------------------------------------------------------------

RandomOpCase random_op_case(std::mt19937_64& rng) {
  RandomOpCase rc;
  HloModule& m = rc.module;
  // Dummy entry plus scalar add callback for map/reduce.
  HloComputation dummy;
  dummy.name = "main";
  dummy.instructions.push_back(
      {"k", ValueType::make_scalar(ElementType::F32), HloOpConfig::constant(TensorValue::scalar_f32(0)), {}});
  dummy.root = 0;
  m.computations.push_back(dummy);
  m.computations.push_back(scalar_callback("cb", HloOpKind::Add, ElementType::F32));
  m.entry = 0;

  auto rand_shape = [&](int max_rank) {
    std::vector<int64_t> s;
    int r = static_cast<int>(rng() % static_cast<uint64_t>(max_rank + 1));
    for (int i = 0; i < r; ++i) s.push_back(1 + static_cast<int64_t>(rng() % 4));
    return s;
  };
  auto f32 = [&](const std::vector<int64_t>& s, float lo = -2.0f, float hi = 2.0f) {
    return Value(random_f32_tensor(s, rng, lo, hi));
  };
  auto s64 = [&](const std::vector<int64_t>& s) {
    TensorType t{ElementType::S64, s};
    std::vector<int64_t> data(static_cast<size_t>(t.element_count()));
    for (auto& v : data) v = static_cast<int64_t>(rng() % 17) - 8;
    return Value(TensorValue::from_s64(s, std::move(data)));
  };

  std::vector<int64_t> shape = rand_shape(3);
  switch (rng() % 12) {
    case 0: {
      HloOpKind ks[] = {HloOpKind::Add, HloOpKind::Subtract, HloOpKind::Multiply,
                        HloOpKind::Maximum};
      rc.config = HloOpConfig::elementwise(ks[rng() % 4]);
      if (rng() & 1) {
        rc.operands = {f32(shape), f32(shape)};
      } else {
        rc.operands = {s64(shape), s64(shape)};
      }
      break;
    }
    case 1:
      rc.config = HloOpConfig::elementwise(HloOpKind::Divide);
      rc.operands = {f32(shape), f32(shape, 0.5f, 2.0f)};
      break;
    case 2:
      rc.config = HloOpConfig::elementwise((rng() & 1) ? HloOpKind::Lt : HloOpKind::Le);
      rc.operands = {s64(shape), s64(shape)};
      break;
    case 3: {
      rc.config = HloOpConfig::elementwise(HloOpKind::Select);
      TensorType pt{ElementType::Pred, shape};
      std::vector<uint8_t> p(static_cast<size_t>(pt.element_count()));
      for (auto& v : p) v = static_cast<uint8_t>(rng() & 1);
      rc.operands = {Value(TensorValue::from_pred(shape, std::move(p))), f32(shape), f32(shape)};
      break;
    }
    case 4:
      rc.config = HloOpConfig::elementwise(HloOpKind::Exponential);
      rc.operands = {f32(shape)};
      break;
    case 5: {
      std::vector<int64_t> perm(shape.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      rc.config = HloOpConfig::transpose(perm);
      rc.operands = {f32(shape)};
      break;
    }
    case 6: {
      TensorType t{ElementType::F32, shape};
      rc.config = HloOpConfig::reshape({t.element_count()});
      rc.operands = {f32(shape)};
      break;
    }
    case 7: {
      // Broadcast a lower-rank operand into `shape` along a sorted
      // random subset of result dimensions.
      std::vector<int64_t> dims, opshape;
      for (size_t d = 0; d < shape.size(); ++d) {
        if (rng() & 1) {
          dims.push_back(static_cast<int64_t>(d));
          opshape.push_back(shape[d]);
        }
      }
      rc.config = HloOpConfig::broadcast(shape, dims);
      rc.operands = {f32(opshape)};
      break;
    }
    case 8: {
      int64_t mm = 1 + static_cast<int64_t>(rng() % 4);
      int64_t kk = 1 + static_cast<int64_t>(rng() % 4);
      int64_t nn = 1 + static_cast<int64_t>(rng() % 4);
      rc.config = HloOpConfig::dot(DimNums{{1}, {0}, {}, {}});
      if (rng() & 1)
        rc.operands = {f32({mm, kk}), f32({kk, nn})};
      else
        rc.operands = {f32({mm, kk}), f32({kk})};
      break;
    }
    case 9: {
      if (shape.empty()) shape.push_back(1 + static_cast<int64_t>(rng() % 4));
      std::vector<int64_t> dims;
      for (size_t d = 0; d < shape.size(); ++d)
        if (rng() & 1) dims.push_back(static_cast<int64_t>(d));
      if (dims.empty()) dims.push_back(0);
      rc.config = HloOpConfig::reduce(1, dims);
      rc.operands = {f32(shape), Value(TensorValue::scalar_f32(0))};
      break;
    }
    case 10: {
      std::vector<int64_t> iota(shape.size());
      std::iota(iota.begin(), iota.end(), 0);
      rc.config = HloOpConfig::map(1, iota);
      rc.operands = {f32(shape), f32(shape)};
      break;
    }
    case 11:
      rc.config = HloOpConfig::rng(ElementType::F32, shape);
      rc.operands = {};
      break;
  }
  return rc;
}

}  // namespace ts
