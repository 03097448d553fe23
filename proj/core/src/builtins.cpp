// SPDX-License-Identifier: Apache-2.0

#include "mhlc/builtins.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <sstream>

#include "mhlc/infer.hpp"

namespace mhlc {

namespace {

constexpr int kMaxCallbackDepth = 64;

const std::map<std::string, BuiltinSig>& sig_table() {
  static const std::map<std::string, BuiltinSig> table = {
      {"add", {2, {}, {}}},
      {"subtract", {2, {}, {}}},
      {"multiply", {2, {}, {}}},
      {"divide", {2, {}, {}}},
      {"maximum", {2, {}, {}}},
      {"lt", {2, {}, {}}},
      {"le", {2, {}, {}}},
      {"select", {3, {}, {}}},
      {"exp", {1, {}, {}}},
      {"identity", {1, {}, {}}},
      {"matmul", {2, {}, {}}},
      {"transpose", {2, {1}, {}}},
      {"reshape", {2, {1}, {}}},
      {"rng", {1, {0}, {}}},
      {"sum", {1, {}, {}}},
      {"broadcast", {-1, {}, {0}}},
      {"mapreduce", {4, {3}, {0, 1}}},
      {"reduce_init", {5, {3}, {0, 1}}},
  };
  return table;
}

HloOpKind scalar_kind(const std::string& name) {
  if (name == "add") return HloOpKind::Add;
  if (name == "subtract") return HloOpKind::Subtract;
  if (name == "multiply") return HloOpKind::Multiply;
  if (name == "divide") return HloOpKind::Divide;
  if (name == "maximum") return HloOpKind::Maximum;
  if (name == "lt") return HloOpKind::Lt;
  if (name == "le") return HloOpKind::Le;
  if (name == "select") return HloOpKind::Select;
  if (name == "exp") return HloOpKind::Exponential;
  throw CompileError("'" + name + "' is not an elementwise builtin");
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

std::vector<int64_t> iota_dims(int rank) {
  std::vector<int64_t> dims(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) dims[static_cast<size_t>(i)] = i;
  return dims;
}

TensorType dyn_tensor_type(OpEmitter& em, int ref, const char* what) {
  ValueType t = em.type_of(ref);
  if (!t.is_tensor()) throw CompileError(std::string(what) + " must be a tensor");
  return t.tensor;
}

}  // namespace

const BuiltinSig* builtin_sig(const std::string& name) {
  auto it = sig_table().find(name);
  return it == sig_table().end() ? nullptr : &it->second;
}

bool is_scalar_builtin(const std::string& name) {
  return name == "add" || name == "subtract" || name == "multiply" || name == "divide" ||
         name == "maximum" || name == "lt" || name == "le" || name == "select" || name == "exp" ||
         name == "identity";
}

TensorValue neutral_element(const std::string& op, ElementType elem) {
  if (elem == ElementType::Pred) throw CompileError("no reductions over pred");
  if (op == "add") return elem == ElementType::F32 ? TensorValue::scalar_f32(0) : TensorValue::scalar_s64(0);
  if (op == "multiply")
    return elem == ElementType::F32 ? TensorValue::scalar_f32(1) : TensorValue::scalar_s64(1);
  if (op == "maximum")
    return elem == ElementType::F32
               ? TensorValue::scalar_f32(-std::numeric_limits<float>::infinity())
               : TensorValue::scalar_s64(std::numeric_limits<int64_t>::min());
  throw CompileError("no neutral element known for reduction op '" + op + "'");
}

std::vector<int64_t> dims_from_const(const AbstractValue& v, int rank) {
  if (!v.is_const()) throw CompileError("dimension operand is not a constant");
  if (v.all_marker) return iota_dims(rank);
  const TensorValue& c = v.constant;
  if (c.type.elem != ElementType::S64 || c.type.rank() > 1)
    throw CompileError("dimension operand must be an s64 scalar or vector");
  if (c.type.rank() == 0) return {c.s64[0]};
  return c.s64;
}

int materialize(OpEmitter& em, const BuiltinArg& arg) {
  if (arg.ref >= 0) return arg.ref;
  if (arg.info.is_const()) return em.emit(HloOpConfig::constant(arg.info.constant), {});
  if (arg.info.kind == AbstractValue::Kind::Tuple) {
    std::vector<int> refs;
    for (const AbstractValue& e : arg.info.elements) refs.push_back(materialize(em, {e, -1}));
    return em.emit(HloOpConfig::tuple(), refs);
  }
  throw CompileError("operand has no materializable value");
}

// ---------------------------------------------------------------------------
// ComputationBuilder

ComputationBuilder::ComputationBuilder(HloModule& m, const std::string& name) : m_(&m) {
  ci_ = static_cast<int>(m.computations.size());
  HloComputation comp;
  comp.name = name;
  m.computations.push_back(std::move(comp));
}

int ComputationBuilder::add(const HloOpConfig& config, const std::vector<int>& operands) {
  HloComputation& comp = m_->computations[static_cast<size_t>(ci_)];
  std::vector<ValueType> operand_types;
  for (int o : operands) operand_types.push_back(comp.instructions[static_cast<size_t>(o)].type);
  HloInstruction in;
  in.type = shape_infer(*m_, config, operand_types);
  in.config = config;
  in.operands = operands;
  int j = counter_++;
  std::string suffix = config.kind == HloOpKind::Parameter ? "p" + std::to_string(config.index)
                                                           : kind_mnemonic(config.kind) + std::to_string(j);
  in.name = "c" + std::to_string(ci_) + suffix;
  comp.instructions.push_back(std::move(in));
  return static_cast<int>(comp.instructions.size()) - 1;
}

int ComputationBuilder::add_parameter(int index, const ValueType& type) {
  HloComputation& comp = m_->computations[static_cast<size_t>(ci_)];
  for (int i = 0; i < static_cast<int>(comp.instructions.size()); ++i) {
    const HloInstruction& in = comp.instructions[static_cast<size_t>(i)];
    if (in.config.kind == HloOpKind::Parameter && in.config.index == index) return i;
  }
  return add(HloOpConfig::parameter(index, type), {});
}

void ComputationBuilder::set_root(int ref) {
  m_->computations[static_cast<size_t>(ci_)].root = ref;
}

ValueType ComputationBuilder::type_of(int ref) const {
  return m_->computations[static_cast<size_t>(ci_)].instructions[static_cast<size_t>(ref)].type;
}

// ---------------------------------------------------------------------------
// Builtin lowering

namespace {

int lower_broadcast(OpEmitter& em, const std::vector<BuiltinArg>& args) {
  if (args[0].info.kind != AbstractValue::Kind::FnRef)
    throw CompileError("broadcast callback is not a known function reference");
  const FnRefType& fn = args[0].info.fn;

  std::vector<int> refs;
  std::vector<TensorType> types;
  for (size_t i = 1; i < args.size(); ++i) {
    int r = materialize(em, args[i]);
    refs.push_back(r);
    types.push_back(dyn_tensor_type(em, r, "broadcast operand"));
  }

  // Right-aligned result shape: elementwise max of extents, size-1 expanding.
  int rank = 0;
  for (const TensorType& t : types) rank = std::max(rank, t.rank());
  std::vector<int64_t> result(static_cast<size_t>(rank), 1);
  for (const TensorType& t : types) {
    int offset = rank - t.rank();
    for (int i = 0; i < t.rank(); ++i) {
      int64_t e = t.shape[static_cast<size_t>(i)];
      int64_t& r = result[static_cast<size_t>(offset + i)];
      if (e != 1 && r != 1 && e != r)
        throw CompileError("broadcast extents incompatible: " + std::to_string(e) + " vs " +
                           std::to_string(r));
      r = std::max(r, e);
    }
  }

  std::vector<int> mapped;
  std::vector<ValueType> scalar_params;
  for (size_t a = 0; a < refs.size(); ++a) {
    const TensorType& t = types[a];
    scalar_params.push_back(ValueType::make_scalar(t.elem));
    int ref = refs[a];
    if (t.shape == result) {
      mapped.push_back(ref);
      continue;
    }
    int offset = rank - t.rank();
    std::vector<int64_t> kept_extents;
    std::vector<int64_t> kept_result_dims;
    for (int i = 0; i < t.rank(); ++i) {
      int64_t e = t.shape[static_cast<size_t>(i)];
      int64_t re = result[static_cast<size_t>(offset + i)];
      if (e == 1 && re != 1) continue;  // expanded dimension, dropped before Broadcast
      kept_extents.push_back(e);
      kept_result_dims.push_back(offset + i);
    }
    if (static_cast<int>(kept_extents.size()) != t.rank())
      ref = em.emit(HloOpConfig::reshape(kept_extents), {ref});
    ref = em.emit(HloOpConfig::broadcast(result, kept_result_dims), {ref});
    mapped.push_back(ref);
  }

  int comp = em.callback(fn, scalar_params);
  return em.emit(HloOpConfig::map(comp, iota_dims(rank)), mapped);
}

int lower_mapreduce(OpEmitter& em, const FnRefType& f, const FnRefType& op, const BuiltinArg& x,
                    const AbstractValue& dims_info, const BuiltinArg* init) {
  int xref = materialize(em, x);
  TensorType xt = dyn_tensor_type(em, xref, "mapreduce operand");
  std::vector<int64_t> dims = dims_from_const(dims_info, xt.rank());

  int fcomp = em.callback(f, {ValueType::make_scalar(xt.elem)});
  int mapped = em.emit(HloOpConfig::map(fcomp, iota_dims(xt.rank())), {xref});
  ElementType melem = dyn_tensor_type(em, mapped, "mapreduce map result").elem;

  int init_ref;
  if (init) {
    init_ref = materialize(em, *init);
  } else {
    TensorValue neutral;
    if (em.type_probe_only()) {
      // The result type does not depend on the init value; keep the
      // probe going so the real lowering can report the missing
      // neutral element with the op name.
      try {
        neutral = neutral_element(op.name, melem);
      } catch (const CompileError&) {
        neutral = TensorValue::zeros(TensorType{melem, {}});
      }
    } else {
      neutral = neutral_element(op.name, melem);
    }
    init_ref = em.emit(HloOpConfig::constant(std::move(neutral)), {});
  }

  int opcomp =
      em.callback(op, {ValueType::make_scalar(melem), ValueType::make_scalar(melem)});
  return em.emit(HloOpConfig::reduce(opcomp, dims), {mapped, init_ref});
}

const FnRefType& fnref_of(const BuiltinArg& a, const std::string& builtin) {
  if (a.info.kind != AbstractValue::Kind::FnRef)
    throw CompileError("callback argument of '" + builtin + "' is not a known function reference");
  return a.info.fn;
}

}  // namespace

int lower_builtin_call(OpEmitter& em, const std::string& name, const std::vector<BuiltinArg>& args) {
  const BuiltinSig* sig = builtin_sig(name);
  if (!sig) throw CompileError("unknown builtin '" + name + "'");
  if (sig->arity >= 0) {
    if (static_cast<int>(args.size()) != sig->arity)
      throw CompileError("builtin '" + name + "' expects " + std::to_string(sig->arity) +
                         " arguments, got " + std::to_string(args.size()));
  } else if (args.size() < 2) {
    throw CompileError("builtin '" + name + "' expects at least 2 arguments");
  }
  for (int i : sig->static_args)
    if (!args[static_cast<size_t>(i)].info.is_const())
      throw CompileError("static operand " + std::to_string(i) + " of '" + name +
                         "' is not a constant");

  if (name == "identity") return materialize(em, args[0]);
  if (name == "exp")
    return em.emit(HloOpConfig::elementwise(HloOpKind::Exponential), {materialize(em, args[0])});
  if (name == "select")
    return em.emit(HloOpConfig::elementwise(HloOpKind::Select),
                   {materialize(em, args[0]), materialize(em, args[1]), materialize(em, args[2])});
  if (name == "add" || name == "subtract" || name == "multiply" || name == "divide" ||
      name == "maximum" || name == "lt" || name == "le")
    return em.emit(HloOpConfig::elementwise(scalar_kind(name)),
                   {materialize(em, args[0]), materialize(em, args[1])});
  if (name == "matmul")
    return em.emit(HloOpConfig::dot(DimNums{{1}, {0}, {}, {}}),
                   {materialize(em, args[0]), materialize(em, args[1])});
  if (name == "transpose") {
    int ref = materialize(em, args[0]);
    TensorType t = dyn_tensor_type(em, ref, "transpose operand");
    return em.emit(HloOpConfig::transpose(dims_from_const(args[1].info, t.rank())), {ref});
  }
  if (name == "reshape") {
    int ref = materialize(em, args[0]);
    TensorType t = dyn_tensor_type(em, ref, "reshape operand");
    if (args[1].info.all_marker) throw CompileError("reshape target must be an explicit shape");
    return em.emit(HloOpConfig::reshape(dims_from_const(args[1].info, t.rank())), {ref});
  }
  if (name == "rng") {
    if (args[0].info.all_marker) throw CompileError("rng shape must be explicit");
    return em.emit(HloOpConfig::rng(ElementType::F32, dims_from_const(args[0].info, 0)), {});
  }
  if (name == "sum")
    return lower_mapreduce(em, FnRefType{"identity", {}}, FnRefType{"add", {}}, args[0],
                           AbstractValue::constant_of(TensorValue::scalar_s64(0), true), nullptr);
  if (name == "broadcast") return lower_broadcast(em, args);
  if (name == "mapreduce")
    return lower_mapreduce(em, fnref_of(args[0], name), fnref_of(args[1], name), args[2],
                           args[3].info, nullptr);
  if (name == "reduce_init")
    return lower_mapreduce(em, fnref_of(args[0], name), fnref_of(args[1], name), args[2],
                           args[3].info, &args[4]);
  throw CompileError("unknown builtin '" + name + "'");
}

// ---------------------------------------------------------------------------
// Callback compilation and straight-line inlining

namespace {

struct DepthGuard {
  HloEmitContext& ctx;
  explicit DepthGuard(HloEmitContext& c) : ctx(c) {
    if (++ctx.depth > kMaxCallbackDepth)
      throw CompileError("nested call depth limit exceeded during lowering");
  }
  ~DepthGuard() { --ctx.depth; }
};

BuiltinArg operand_arg(HloEmitContext& ctx, const std::map<std::string, BuiltinArg>& env,
                       const Operand& op) {
  switch (op.kind) {
    case Operand::Kind::Value: {
      auto it = env.find(op.name);
      if (it == env.end()) throw CompileError("use of undefined value '%" + op.name + "'");
      return it->second;
    }
    case Operand::Kind::FnRef:
      return {AbstractValue::fnref(FnRefType{op.name, op.captures}), -1};
    case Operand::Kind::AllDims:
      return {AbstractValue::constant_of(TensorValue::scalar_s64(0), true), -1};
  }
  throw CompileError("bad operand");
}

}  // namespace

BuiltinArg emit_inline_call(HloEmitContext& ctx, ComputationBuilder& b, const FrontendFunction& f,
                            const std::vector<BuiltinArg>& args) {
  DepthGuard guard(ctx);
  if (f.blocks.size() != 1 || f.blocks[0].term.kind != Terminator::Kind::Return)
    throw CompileError("function '" + f.name + "' has control flow and cannot be inlined");
  if (args.size() != f.params.size())
    throw CompileError("function '" + f.name + "' expects " + std::to_string(f.params.size()) +
                       " arguments, got " + std::to_string(args.size()));
  BuilderEmitter em(ctx, b);
  std::map<std::string, BuiltinArg> env;
  for (size_t i = 0; i < args.size(); ++i) env[f.params[i].name] = args[i];

  for (const Instruction& in : f.blocks[0].instructions) {
    BuiltinArg result;
    switch (in.kind) {
      case Instruction::Kind::Const:
        result = {AbstractValue::constant_of(in.const_value, in.all_marker), -1};
        break;
      case Instruction::Kind::Call: {
        std::vector<BuiltinArg> call_args;
        std::vector<AbstractValue> infos;
        for (const Operand& op : in.args) {
          call_args.push_back(operand_arg(ctx, env, op));
          infos.push_back(call_args.back().info);
        }
        int ref = lower_builtin_call(em, in.callee, call_args);
        AbstractValue info = ctx.src ? builtin_transfer(*ctx.src, in.callee, infos)
                                     : AbstractValue::from_type(b.type_of(ref));
        if (!info.fully_typed()) info = AbstractValue::from_type(b.type_of(ref));
        result = {std::move(info), ref};
        break;
      }
      case Instruction::Kind::CallFn: {
        if (!ctx.src) throw CompileError("call_fn outside a module context");
        const FrontendFunction* callee = ctx.src->find(in.callee);
        if (!callee) throw CompileError("unknown function '@" + in.callee + "'");
        std::vector<BuiltinArg> call_args;
        for (const CapturedLiteral& c : in.captures)
          call_args.push_back({AbstractValue::constant_of(capture_value(c)), -1});
        for (const Operand& op : in.args) call_args.push_back(operand_arg(ctx, env, op));
        result = emit_inline_call(ctx, b, *callee, call_args);
        break;
      }
      case Instruction::Kind::MakeTuple: {
        std::vector<int> refs;
        std::vector<AbstractValue> infos;
        for (const Operand& op : in.args) {
          BuiltinArg a = operand_arg(ctx, env, op);
          refs.push_back(materialize(em, a));
          infos.push_back(std::move(a.info));
        }
        result = {AbstractValue::tuple(std::move(infos)), b.add(HloOpConfig::tuple(), refs)};
        break;
      }
      case Instruction::Kind::GetElement: {
        BuiltinArg t = operand_arg(ctx, env, in.args.at(0));
        int ref = b.add(HloOpConfig::get_tuple_element(static_cast<int>(in.index)),
                        {materialize(em, t)});
        AbstractValue info = t.info.kind == AbstractValue::Kind::Tuple &&
                                     in.index < static_cast<int64_t>(t.info.elements.size())
                                 ? t.info.elements[static_cast<size_t>(in.index)]
                                 : AbstractValue::from_type(b.type_of(ref));
        result = {std::move(info), ref};
        break;
      }
      case Instruction::Kind::Phi:
        throw CompileError("function '" + f.name + "' has control flow and cannot be inlined");
    }
    env[in.result] = std::move(result);
  }
  auto it = env.find(f.blocks[0].term.value);
  if (it == env.end())
    throw CompileError("return of undefined value in function '" + f.name + "'");
  return it->second;
}

int compile_scalar_callback(HloEmitContext& ctx, const FnRefType& fn,
                            const std::vector<ValueType>& scalar_params) {
  std::ostringstream key;
  key << fn.name << '[';
  for (const CapturedLiteral& c : fn.captures) key << print_capture(c) << ',';
  key << "](";
  for (const ValueType& t : scalar_params) key << to_string(t) << ',';
  key << ')';
  auto cached = ctx.callback_cache.find(key.str());
  if (cached != ctx.callback_cache.end()) return cached->second;

  DepthGuard guard(ctx);
  const FrontendFunction* f = ctx.src ? ctx.src->find(fn.name) : nullptr;

  ComputationBuilder b(ctx.module, "c" + std::to_string(ctx.module.computations.size()));
  BuilderEmitter em(ctx, b);
  std::vector<int> param_refs;
  for (size_t i = 0; i < scalar_params.size(); ++i) {
    if (!scalar_params[i].is_scalar_tensor())
      throw CompileError("callback parameters must be scalar tensors");
    param_refs.push_back(b.add_parameter(static_cast<int>(i), scalar_params[i]));
  }

  int root;
  if (!f) {
    if (!is_scalar_builtin(fn.name))
      throw CompileError("unknown callback '" + fn.name + "'");
    std::vector<int> op_args;
    for (const CapturedLiteral& c : fn.captures)
      op_args.push_back(b.add(HloOpConfig::constant(capture_value(c)), {}));
    for (int r : param_refs) op_args.push_back(r);
    if (fn.name == "identity") {
      if (op_args.size() != 1) throw CompileError("identity takes 1 argument");
      root = op_args[0];
    } else {
      HloOpKind kind = scalar_kind(fn.name);
      size_t want = kind == HloOpKind::Exponential ? 1 : kind == HloOpKind::Select ? 3 : 2;
      if (op_args.size() != want)
        throw CompileError("callback '" + fn.name + "' applied to wrong number of arguments");
      root = b.add(HloOpConfig::elementwise(kind), op_args);
    }
  } else {
    size_t ncaps = fn.captures.size();
    if (f->params.size() < ncaps)
      throw CompileError("function '" + fn.name + "' has fewer parameters than captures");
    size_t nafter = f->params.size() - ncaps;
    std::vector<BuiltinArg> args;
    for (const CapturedLiteral& c : fn.captures)
      args.push_back({AbstractValue::constant_of(capture_value(c)), -1});
    if (nafter == scalar_params.size()) {
      for (size_t i = 0; i < param_refs.size(); ++i)
        args.push_back({AbstractValue::from_type(scalar_params[i]), param_refs[i]});
    } else if (nafter == 1) {
      // The callback consumes its arguments as one aggregate: pack the
      // scalar parameters into a tuple.
      int tup = b.add(HloOpConfig::tuple(), param_refs);
      std::vector<AbstractValue> infos;
      for (const ValueType& t : scalar_params) infos.push_back(AbstractValue::from_type(t));
      args.push_back({AbstractValue::tuple(std::move(infos)), tup});
    } else {
      throw CompileError("callback '" + fn.name + "' arity does not match its call");
    }
    BuiltinArg result = emit_inline_call(ctx, b, *f, args);
    root = materialize(em, result);
  }

  ValueType root_type = b.type_of(root);
  if (!root_type.is_scalar_tensor())
    throw CompileError("callback '" + fn.name + "' must produce a scalar, got " +
                       to_string(root_type));
  b.set_root(root);
  ctx.callback_cache[key.str()] = b.comp_index();
  return b.comp_index();
}

int BuilderEmitter::callback(const FnRefType& fn, const std::vector<ValueType>& scalar_params) {
  return compile_scalar_callback(ctx_, fn, scalar_params);
}

}  // namespace mhlc
