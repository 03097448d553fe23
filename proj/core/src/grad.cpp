// SPDX-License-Identifier: Apache-2.0

#include "mhlc/grad.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mhlc/builtins.hpp"
#include "mhlc/dynamic.hpp"
#include "mhlc/infer.hpp"

namespace mhlc {

namespace {

[[noreturn]] void unsupported_control_flow() {
  throw CompileError("control flow unsupported in grad");
}

TensorValue capture_value(const CapturedLiteral& c) {
  switch (c.elem) {
    case ElementType::F32:
      return TensorValue::scalar_f32(static_cast<float>(c.f));
    case ElementType::S64:
      return TensorValue::scalar_s64(c.i);
    case ElementType::Pred:
      return TensorValue::scalar_pred(c.i != 0);
  }
  throw CompileError("bad capture");
}

/// Cotangent of one primal value: a plain value name, per-slot names for
/// tuples, or nothing when the value does not influence the output.
struct Cot {
  std::string name;
  std::vector<Cot> elems;
  bool is_tuple = false;

  bool empty() const { return name.empty() && !is_tuple; }
};

struct GradEngine;

/// One reverse sweep over a flattened (straight-line) body.
struct Sweep {
  GradEngine& eng;
  std::vector<Instruction> body;  // primal prefix, then adjoint code
  std::map<std::string, AbstractValue> infos;
  std::set<std::string> used;
  int counter = 0;
  std::map<std::string, Cot> cot;

  explicit Sweep(GradEngine& e) : eng(e) {}

  std::string fresh() {
    std::string n;
    do {
      n = "g" + std::to_string(counter++);
    } while (!used.insert(n).second);
    return n;
  }

  TensorType type_of(const std::string& name) const {
    auto it = infos.find(name);
    std::optional<ValueType> t = it == infos.end() ? std::nullopt : it->second.type_of();
    if (!t || t->kind != ValueType::Kind::Tensor)
      throw CompileError("cannot differentiate: unresolved shape for '%" + name + "'");
    return t->tensor;
  }

  std::string emit_const(TensorValue v) {
    Instruction in;
    in.kind = Instruction::Kind::Const;
    in.result = fresh();
    in.const_type = ValueType(v.type);
    in.const_value = std::move(v);
    body.push_back(in);
    return in.result;
  }

  std::string emit_call(const std::string& callee, std::vector<Operand> args) {
    Instruction in;
    in.kind = Instruction::Kind::Call;
    in.result = fresh();
    in.callee = callee;
    in.args = std::move(args);
    body.push_back(in);
    return in.result;
  }

  std::string call2(const std::string& callee, const std::string& a, const std::string& b) {
    return emit_call(callee, {Operand::value(a), Operand::value(b)});
  }

  std::string negate(const std::string& c, const TensorType& t) {
    std::string z = emit_const(TensorValue::zeros(t));
    return call2("subtract", z, c);
  }

  /// Accumulates a cotangent contribution for a tensor value.
  void add_cot(const std::string& name, const std::string& c) {
    Cot& slot = cot[name];
    if (slot.name.empty())
      slot.name = c;
    else
      slot.name = call2("add", slot.name, c);
  }

  void add_tuple_cot(const std::string& name, size_t index, const std::string& c, size_t arity) {
    Cot& slot = cot[name];
    slot.is_tuple = true;
    if (slot.elems.size() < arity) slot.elems.resize(arity);
    Cot& e = slot.elems[index];
    if (e.is_tuple) throw CompileError("nested tuple cotangents are unsupported in grad");
    if (e.name.empty())
      e.name = c;
    else
      e.name = call2("add", e.name, c);
  }

  /// Reduce-sum `c` (shaped like `from`) back to `to` after an implicit
  /// broadcast, then reshape when interior size-1 dims were dropped.
  std::string unbroadcast(const std::string& c, const TensorType& from, const TensorType& to);

  std::string replicate(const std::string& like, const std::string& scalar_or_keepdims);

  void rule_call(const Instruction& in, const std::string& c);
  void run_reverse(const std::string& ret, double seed);
};

/// Shared state of one grad invocation: the output module (receiving
/// helper callbacks) and the partial-derivative cache.
struct GradEngine {
  FrontendModule out;
  std::map<std::string, std::string> partial_cache;
  int helper_counter = 0;
  std::string replicate_fn;
  int depth = 0;

  std::string fresh_fn_name(const std::string& base) {
    std::string n;
    do {
      n = "__vjp" + std::to_string(helper_counter++) + "_" + base;
    } while (out.find(n));
    return n;
  }

  /// Two-argument scalar callback returning its second argument; used to
  /// replicate a value across a shape via broadcast.
  const std::string& replicate_helper() {
    if (!replicate_fn.empty()) return replicate_fn;
    FrontendFunction f;
    f.name = fresh_fn_name("replicate");
    f.params = {{"a", ValueType(TensorType{ElementType::F32, {}})},
                {"b", ValueType(TensorType{ElementType::F32, {}})}};
    BasicBlock bb;
    bb.label = "bb0";
    bb.term = {Terminator::Kind::Return, {}, "", "", "", "b"};
    f.blocks.push_back(std::move(bb));
    out.functions.push_back(std::move(f));
    replicate_fn = out.functions.back().name;
    return replicate_fn;
  }

  /// Inlines `fn` applied to already-defined values into `body`.
  /// Requires a straight-line single-block callee.
  std::string flatten_into(std::vector<Instruction>& body, std::set<std::string>& used,
                           int& inline_counter, const FrontendFunction& fn,
                           const std::vector<std::string>& args, bool keep_names) {
    if (fn.blocks.size() != 1 || fn.blocks[0].term.kind != Terminator::Kind::Return)
      unsupported_control_flow();
    if (args.size() != fn.params.size())
      throw CompileError("function '@" + fn.name + "' expects " +
                         std::to_string(fn.params.size()) + " arguments, got " +
                         std::to_string(args.size()));
    std::map<std::string, std::string> names;
    for (size_t i = 0; i < args.size(); ++i) names[fn.params[i].name] = args[i];
    int id = inline_counter++;
    auto rename = [&](const std::string& result) {
      if (keep_names && used.insert(result).second) return result;
      int k = 0;
      std::string n = "i" + std::to_string(id) + "_" + result;
      while (!used.insert(n).second)
        n = "i" + std::to_string(id) + "_" + result + "_" + std::to_string(++k);
      return n;
    };
    for (const Instruction& src : fn.blocks[0].instructions) {
      if (src.kind == Instruction::Kind::Phi) unsupported_control_flow();
      if (src.kind == Instruction::Kind::CallFn) {
        const FrontendFunction* callee = out.find(src.callee);
        if (!callee) throw CompileError("unknown function '@" + src.callee + "'");
        std::vector<std::string> call_args;
        for (const CapturedLiteral& cap : src.captures) {
          Instruction c;
          c.kind = Instruction::Kind::Const;
          c.result = rename(src.result + ".cap");
          c.const_value = capture_value(cap);
          c.const_type = ValueType(c.const_value.type);
          call_args.push_back(c.result);
          body.push_back(std::move(c));
        }
        for (const Operand& op : src.args) {
          if (op.kind != Operand::Kind::Value)
            throw CompileError("function calls take value arguments");
          call_args.push_back(names.at(op.name));
        }
        names[src.result] = flatten_into(body, used, inline_counter, *callee, call_args, false);
        continue;
      }
      Instruction in = src;
      in.result = rename(src.result);
      names[src.result] = in.result;
      for (Operand& op : in.args)
        if (op.kind == Operand::Kind::Value) {
          auto it = names.find(op.name);
          if (it == names.end())
            throw CompileError("value '%" + op.name + "' is undefined in '@" + fn.name + "'");
          op.name = it->second;
        }
      body.push_back(std::move(in));
    }
    auto it = names.find(fn.blocks[0].term.value);
    if (it == names.end())
      throw CompileError("return value is undefined in '@" + fn.name + "'");
    return it->second;
  }

  /// Differentiates a straight-line function and returns the gradient
  /// function (not yet added to the module).
  FrontendFunction make_grad(const FrontendFunction& fn,
                             const std::vector<ValueType>& param_types,
                             const std::vector<int>& wrt, bool tuple_result, double seed,
                             const std::string& name);

  /// Name of the scalar helper computing ∂f/∂arg_j of a scalar callback
  /// applied to `arity` value arguments.
  std::string partial_fn(const FnRefType& f, int j, int arity);
};

std::string Sweep::unbroadcast(const std::string& c, const TensorType& from,
                               const TensorType& to) {
  int offset = from.rank() - to.rank();
  std::vector<int64_t> reduced;
  for (int i = 0; i < offset; ++i) reduced.push_back(i);
  for (int i = 0; i < to.rank(); ++i)
    if (to.shape[static_cast<size_t>(i)] == 1 &&
        from.shape[static_cast<size_t>(offset + i)] != 1)
      reduced.push_back(offset + i);
  if (reduced.empty()) return c;
  std::string dims = emit_const(
      TensorValue::from_s64({static_cast<int64_t>(reduced.size())}, reduced));
  std::string r = emit_call("mapreduce", {Operand::fnref("identity"), Operand::fnref("add"),
                                          Operand::value(c), Operand::value(dims)});
  std::vector<int64_t> post;
  std::set<int64_t> drop(reduced.begin(), reduced.end());
  for (int i = 0; i < from.rank(); ++i)
    if (!drop.count(i)) post.push_back(from.shape[static_cast<size_t>(i)]);
  if (post == to.shape) return r;
  std::string shape = emit_const(
      TensorValue::from_s64({static_cast<int64_t>(to.rank())}, to.shape));
  return emit_call("reshape", {Operand::value(r), Operand::value(shape)});
}

std::string Sweep::replicate(const std::string& like, const std::string& value) {
  return emit_call("broadcast", {Operand::fnref(eng.replicate_helper()), Operand::value(like),
                                 Operand::value(value)});
}

void Sweep::rule_call(const Instruction& in, const std::string& c) {
  const std::string& callee = in.callee;
  auto arg = [&](size_t i) -> const std::string& { return in.args.at(i).name; };

  if (callee == "add") {
    add_cot(arg(0), c);
    add_cot(arg(1), c);
  } else if (callee == "subtract") {
    add_cot(arg(0), c);
    add_cot(arg(1), negate(c, type_of(arg(1))));
  } else if (callee == "multiply") {
    add_cot(arg(0), call2("multiply", c, arg(1)));
    add_cot(arg(1), call2("multiply", c, arg(0)));
  } else if (callee == "divide") {
    add_cot(arg(0), call2("divide", c, arg(1)));
    // ∂b of a/b is −(a/b)/b; reuse the primal quotient.
    std::string q = call2("divide", in.result, arg(1));
    add_cot(arg(1), negate(call2("multiply", c, q), type_of(arg(1))));
  } else if (callee == "exp") {
    add_cot(arg(0), call2("multiply", c, in.result));
  } else if (callee == "identity") {
    add_cot(arg(0), c);
  } else if (callee == "maximum") {
    std::string p = call2("le", arg(1), arg(0));
    std::string z = emit_const(TensorValue::zeros(type_of(in.result)));
    add_cot(arg(0), emit_call("select", {Operand::value(p), Operand::value(c), Operand::value(z)}));
    add_cot(arg(1), emit_call("select", {Operand::value(p), Operand::value(z), Operand::value(c)}));
  } else if (callee == "select") {
    std::string z = emit_const(TensorValue::zeros(type_of(in.result)));
    add_cot(arg(1), emit_call("select",
                              {Operand::value(arg(0)), Operand::value(c), Operand::value(z)}));
    add_cot(arg(2), emit_call("select",
                              {Operand::value(arg(0)), Operand::value(z), Operand::value(c)}));
  } else if (callee == "matmul") {
    TensorType ta = type_of(arg(0)), tb = type_of(arg(1));
    std::string perm = emit_const(TensorValue::from_s64({2}, {1, 0}));
    if (tb.rank() == 1) {
      // A[m,k] · x[k] → y[m]: ∂A = c ⊗ x, ∂x = Aᵀ·c.
      int64_t m = ta.shape[0], k = ta.shape[1];
      std::string cs = emit_const(TensorValue::from_s64({2}, {m, 1}));
      std::string xs = emit_const(TensorValue::from_s64({2}, {1, k}));
      std::string c2 = emit_call("reshape", {Operand::value(c), Operand::value(cs)});
      std::string x2 = emit_call("reshape", {Operand::value(arg(1)), Operand::value(xs)});
      add_cot(arg(0), call2("matmul", c2, x2));
      std::string at = emit_call("transpose", {Operand::value(arg(0)), Operand::value(perm)});
      add_cot(arg(1), call2("matmul", at, c));
    } else {
      // A[m,k] · B[k,n] → y[m,n]: ∂A = c·Bᵀ, ∂B = Aᵀ·c.
      std::string bt = emit_call("transpose", {Operand::value(arg(1)), Operand::value(perm)});
      add_cot(arg(0), call2("matmul", c, bt));
      std::string at = emit_call("transpose", {Operand::value(arg(0)), Operand::value(perm)});
      add_cot(arg(1), call2("matmul", at, c));
    }
  } else if (callee == "transpose") {
    TensorType t = type_of(arg(0));
    std::vector<int64_t> perm =
        dims_from_const(infos.at(arg(1)), t.rank());
    std::vector<int64_t> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] =
        static_cast<int64_t>(i);
    std::string pc = emit_const(TensorValue::from_s64({static_cast<int64_t>(inv.size())}, inv));
    add_cot(arg(0), emit_call("transpose", {Operand::value(c), Operand::value(pc)}));
  } else if (callee == "reshape") {
    TensorType t = type_of(arg(0));
    std::string sc = emit_const(TensorValue::from_s64({t.rank()}, t.shape));
    add_cot(arg(0), emit_call("reshape", {Operand::value(c), Operand::value(sc)}));
  } else if (callee == "sum") {
    add_cot(arg(0), replicate(arg(0), c));
  } else if (callee == "mapreduce") {
    const Operand& fop = in.args.at(0);
    const Operand& oop = in.args.at(1);
    if (oop.kind != Operand::Kind::FnRef || oop.name != "add")
      throw CompileError("builtin 'mapreduce' is only differentiable with op=add");
    const std::string& x = in.args.at(2).name;
    TensorType tx = type_of(x);
    std::vector<int64_t> dims =
        in.args.at(3).kind == Operand::Kind::AllDims
            ? dims_from_const(AbstractValue::constant_of(TensorValue::scalar_s64(0), true),
                              tx.rank())
            : dims_from_const(infos.at(in.args.at(3).name), tx.rank());
    // Re-expand the cotangent to the input shape (size-1 at reduced dims,
    // then replicate), and chain through the map callback's derivative.
    std::vector<int64_t> keep = tx.shape;
    for (int64_t d : dims) keep[static_cast<size_t>(d)] = 1;
    std::string cfull = c;
    if (!dims.empty()) {
      std::string sc = emit_const(TensorValue::from_s64({tx.rank()}, keep));
      std::string cr = emit_call("reshape", {Operand::value(c), Operand::value(sc)});
      cfull = replicate(x, cr);
    }
    FnRefType f{fop.name, fop.captures};
    std::string pf = eng.partial_fn(f, 0, 1);
    std::string fprime = emit_call("broadcast", {Operand::fnref(pf), Operand::value(x)});
    add_cot(x, call2("multiply", cfull, fprime));
  } else if (callee == "broadcast") {
    const Operand& fop = in.args.at(0);
    FnRefType f{fop.name, fop.captures};
    int arity = static_cast<int>(in.args.size()) - 1;
    TensorType tr = type_of(in.result);
    for (int j = 0; j < arity; ++j) {
      const std::string& x = in.args.at(static_cast<size_t>(j + 1)).name;
      std::string pf = eng.partial_fn(f, j, arity);
      std::vector<Operand> ops{Operand::fnref(pf)};
      for (int i = 0; i < arity; ++i)
        ops.push_back(Operand::value(in.args.at(static_cast<size_t>(i + 1)).name));
      std::string fprime = emit_call("broadcast", std::move(ops));
      std::string contrib = call2("multiply", c, fprime);
      add_cot(x, unbroadcast(contrib, tr, type_of(x)));
    }
  } else if (callee == "lt" || callee == "le") {
    // Comparisons carry no gradient.
  } else {
    throw CompileError("builtin '" + callee + "' is not differentiable");
  }
}

void Sweep::run_reverse(const std::string& ret, double seed) {
  size_t primal_count = body.size();
  cot[ret].name = emit_const(TensorValue::scalar_f32(static_cast<float>(seed)));
  for (size_t idx = primal_count; idx-- > 0;) {
    Instruction in = body[idx];  // copy: body grows while we emit
    auto it = cot.find(in.result);
    if (it == cot.end() || it->second.empty()) continue;
    Cot rc = it->second;
    switch (in.kind) {
      case Instruction::Kind::Const:
        break;
      case Instruction::Kind::Call:
        if (rc.is_tuple)
          throw CompileError("tuple results of builtins are unsupported in grad");
        rule_call(in, rc.name);
        break;
      case Instruction::Kind::MakeTuple:
        for (size_t j = 0; j < in.args.size(); ++j) {
          const std::string& a = in.args[j].name;
          if (rc.is_tuple && j < rc.elems.size() && !rc.elems[j].empty()) {
            if (rc.elems[j].is_tuple)
              throw CompileError("nested tuple cotangents are unsupported in grad");
            add_cot(a, rc.elems[j].name);
          }
          if (!rc.name.empty()) {
            Instruction g;
            g.kind = Instruction::Kind::GetElement;
            g.result = fresh();
            g.args.push_back(Operand::value(rc.name));
            g.index = static_cast<int64_t>(j);
            body.push_back(g);
            add_cot(a, g.result);
          }
        }
        break;
      case Instruction::Kind::GetElement: {
        if (rc.is_tuple)
          throw CompileError("nested tuple cotangents are unsupported in grad");
        const std::string& t = in.args.at(0).name;
        auto ti = infos.find(t);
        size_t arity = static_cast<size_t>(in.index) + 1;
        if (ti != infos.end() && ti->second.kind == AbstractValue::Kind::Tuple)
          arity = ti->second.elements.size();
        add_tuple_cot(t, static_cast<size_t>(in.index), rc.name, arity);
        break;
      }
      case Instruction::Kind::CallFn:
      case Instruction::Kind::Phi:
        unsupported_control_flow();
    }
  }
}

FrontendFunction GradEngine::make_grad(const FrontendFunction& fn,
                                       const std::vector<ValueType>& param_types,
                                       const std::vector<int>& wrt, bool tuple_result,
                                       double seed, const std::string& name) {
  if (++depth > 64) throw CompileError("grad recursion depth limit exceeded");
  Sweep s(*this);
  std::vector<std::string> param_names;
  for (const Param& p : fn.params) {
    param_names.push_back(p.name);
    s.used.insert(p.name);
  }
  int inline_counter = 0;
  std::string ret = flatten_into(s.body, s.used, inline_counter, fn, param_names, true);

  // Types and constants of the primal values, from inference over the
  // flattened body.
  FrontendFunction flat;
  flat.name = fn.name;
  flat.params = fn.params;
  BasicBlock bb;
  bb.label = "bb0";
  bb.instructions = s.body;
  bb.term = {Terminator::Kind::Return, {}, "", "", "", ret};
  flat.blocks.push_back(std::move(bb));
  std::vector<AbstractValue> args;
  for (const ValueType& t : param_types) args.push_back(AbstractValue::from_type(t));
  InferenceResult inf = infer(out, flat, args);
  s.infos = inf.values;
  for (size_t i = 0; i < fn.params.size(); ++i)
    s.infos[fn.params[i].name] = args[i];

  std::optional<ValueType> rt = inf.return_value.type_of();
  if (!rt || rt->kind != ValueType::Kind::Tensor || rt->tensor.rank() != 0 ||
      rt->tensor.elem != ElementType::F32)
    throw CompileError("grad requires a scalar f32 output, '" + fn.name + "' returns " +
                       (rt ? to_string(*rt) : std::string("an unresolved type")));

  s.run_reverse(ret, seed);

  // Collect the requested cotangents; parameters the output never
  // depends on get zero cotangents.
  std::vector<std::string> outs;
  for (int wi : wrt) {
    const std::string& pname = fn.params[static_cast<size_t>(wi)].name;
    auto it = s.cot.find(pname);
    if (it != s.cot.end() && it->second.is_tuple)
      throw CompileError("tuple-typed parameters are unsupported in grad");
    if (it == s.cot.end() || it->second.name.empty()) {
      const ValueType& t = param_types[static_cast<size_t>(wi)];
      if (t.kind != ValueType::Kind::Tensor)
        throw CompileError("tuple-typed parameters are unsupported in grad");
      outs.push_back(s.emit_const(TensorValue::zeros(t.tensor)));
    } else {
      outs.push_back(it->second.name);
    }
  }

  FrontendFunction g;
  g.name = name;
  for (size_t i = 0; i < fn.params.size(); ++i)
    g.params.push_back({fn.params[i].name, param_types[i]});
  BasicBlock gb;
  gb.label = "bb0";
  gb.instructions = std::move(s.body);
  std::string result;
  if (tuple_result) {
    Instruction t;
    t.kind = Instruction::Kind::MakeTuple;
    t.result = s.fresh();
    for (const std::string& o : outs) t.args.push_back(Operand::value(o));
    gb.instructions.push_back(t);
    result = t.result;
  } else {
    result = outs.at(0);
  }
  gb.term = {Terminator::Kind::Return, {}, "", "", "", result};
  g.blocks.push_back(std::move(gb));
  --depth;
  return g;
}

std::string GradEngine::partial_fn(const FnRefType& f, int j, int arity) {
  std::string key = f.name;
  for (const CapturedLiteral& c : f.captures) key += "," + print_capture(c);
  key += "#" + std::to_string(j) + "/" + std::to_string(arity);
  auto hit = partial_cache.find(key);
  if (hit != partial_cache.end()) return hit->second;

  ValueType scalar(TensorType{ElementType::F32, {}});
  FrontendFunction apply;
  apply.name = f.name + "_apply";
  for (int i = 0; i < arity; ++i)
    apply.params.push_back({"a" + std::to_string(i), scalar});
  BasicBlock bb;
  bb.label = "bb0";

  if (is_scalar_builtin(f.name)) {
    Instruction in;
    in.kind = Instruction::Kind::Call;
    in.result = "y";
    in.callee = f.name;
    for (int i = 0; i < arity; ++i) in.args.push_back(Operand::value("a" + std::to_string(i)));
    bb.instructions.push_back(std::move(in));
  } else {
    const FrontendFunction* callee = out.find(f.name);
    if (!callee) throw CompileError("unknown function '@" + f.name + "'");
    Instruction in;
    in.kind = Instruction::Kind::CallFn;
    in.result = "y";
    in.callee = f.name;
    in.captures = f.captures;
    size_t value_params = callee->params.size() - f.captures.size();
    if (value_params == 1 && arity > 1) {
      Instruction t;
      t.kind = Instruction::Kind::MakeTuple;
      t.result = "t";
      for (int i = 0; i < arity; ++i) t.args.push_back(Operand::value("a" + std::to_string(i)));
      bb.instructions.push_back(std::move(t));
      in.args.push_back(Operand::value("t"));
    } else {
      for (int i = 0; i < arity; ++i) in.args.push_back(Operand::value("a" + std::to_string(i)));
    }
    bb.instructions.push_back(std::move(in));
  }
  bb.term = {Terminator::Kind::Return, {}, "", "", "", "y"};
  apply.blocks.push_back(std::move(bb));

  std::vector<ValueType> types(static_cast<size_t>(arity), scalar);
  std::string name = fresh_fn_name(f.name + "_d" + std::to_string(j));
  FrontendFunction partial = make_grad(apply, types, {j}, false, 1.0, name);
  out.functions.push_back(std::move(partial));
  partial_cache[key] = name;
  return name;
}

}  // namespace

GradResult grad(const FrontendModule& m, const GradRequest& req) {
  const FrontendFunction* fn = m.find(req.entry);
  if (!fn) throw CompileError("unknown function '@" + req.entry + "'");
  if (req.wrt.empty()) throw CompileError("grad requires at least one wrt parameter");
  std::vector<ValueType> param_types;
  for (const Param& p : fn->params) {
    if (!p.type)
      throw CompileError("grad requires declared parameter types ('%" + p.name +
                         "' of '@" + req.entry + "' has none)");
    param_types.push_back(*p.type);
  }
  for (int wi : req.wrt) {
    if (wi < 0 || wi >= static_cast<int>(fn->params.size()))
      throw CompileError("wrt index " + std::to_string(wi) + " out of range");
    const ValueType& t = param_types[static_cast<size_t>(wi)];
    if (t.kind != ValueType::Kind::Tensor || t.tensor.elem != ElementType::F32)
      throw CompileError("wrt parameter '%" + fn->params[static_cast<size_t>(wi)].name +
                         "' must be an f32 tensor");
  }

  GradEngine eng;
  eng.out = m;
  std::string gname = req.entry + "_grad";
  while (eng.out.find(gname)) gname += "_";
  FrontendFunction g = eng.make_grad(*fn, param_types, req.wrt, true, req.seed, gname);
  eng.out.functions.push_back(std::move(g));
  return {std::move(eng.out), gname};
}

GradCheckReport check_gradient(const FrontendModule& m, const GradRequest& req,
                               const std::vector<Value>& inputs, double step, double tol) {
  GradResult g = grad(m, req);
  Device gdev;
  Value gv = dynamic_eval(g.module, g.function, inputs, gdev);

  auto primal = [&](const std::vector<Value>& xs) {
    Device d;
    Value v = dynamic_eval(m, req.entry, xs, d);
    return v.tensor().get_as_double(0);
  };

  GradCheckReport report;
  for (size_t wi = 0; wi < req.wrt.size(); ++wi) {
    int p = req.wrt[wi];
    const TensorValue& analytic = gv.elements().at(wi).tensor();
    const TensorValue& x = inputs[static_cast<size_t>(p)].tensor();
    for (int64_t i = 0; i < x.element_count(); ++i) {
      double xi = x.get_as_double(i);
      double h = step * std::max(1.0, std::abs(xi));
      std::vector<Value> lo = inputs, hi = inputs;
      lo[static_cast<size_t>(p)].tensor().set_from_double(i, xi - h);
      hi[static_cast<size_t>(p)].tensor().set_from_double(i, xi + h);
      double fd = (primal(hi) - primal(lo)) / (2 * h);
      double an = analytic.get_as_double(i);
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
      report.max_rel_err = std::max(report.max_rel_err, rel);
    }
  }
  report.ok = report.max_rel_err <= tol;
  return report;
}

}  // namespace mhlc
