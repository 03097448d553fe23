// SPDX-License-Identifier: Apache-2.0

#include "mhlc/interp.hpp"

#include <algorithm>
#include <cmath>

namespace mhlc {

uint64_t RngState::next_u64() {
  // splitmix64 of (seed + golden-ratio stride * counter).
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (++counter);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

float RngState::next_f32() {
  // 24 random bits over [0, 1).
  return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
}

namespace {

[[noreturn]] void eval_error(const std::string& msg) { throw RuntimeError("eval error: " + msg); }

const TensorValue& tensor_of(const Value& v, const char* what) {
  if (!v.is_tensor()) eval_error(std::string(what) + " must be a tensor");
  return v.tensor();
}

bool scalar_pred_of(const Value& v, const char* what) {
  const TensorValue& t = tensor_of(v, what);
  if (t.type.elem != ElementType::Pred || t.type.rank() != 0)
    eval_error(std::string(what) + " must be a pred scalar");
  return t.pred[0] != 0;
}

TensorValue scalar_slice(const TensorValue& t, int64_t i) {
  TensorValue s = TensorValue::zeros(TensorType{t.type.elem, {}});
  switch (t.type.elem) {
    case ElementType::F32:
      s.f32[0] = t.f32[static_cast<size_t>(i)];
      break;
    case ElementType::S64:
      s.s64[0] = t.s64[static_cast<size_t>(i)];
      break;
    case ElementType::Pred:
      s.pred[0] = t.pred[static_cast<size_t>(i)];
      break;
  }
  return s;
}

TensorValue eval_binary(HloOpKind k, const TensorValue& a, const TensorValue& b) {
  if (a.type != b.type) eval_error(std::string(kind_name(k)) + " operand types differ");
  bool compare = k == HloOpKind::Lt || k == HloOpKind::Le;
  if (a.type.elem == ElementType::Pred) eval_error("arithmetic on pred");
  TensorValue out = TensorValue::zeros(
      TensorType{compare ? ElementType::Pred : a.type.elem, a.type.shape});
  int64_t n = a.element_count();
  for (int64_t i = 0; i < n; ++i) {
    size_t u = static_cast<size_t>(i);
    if (a.type.elem == ElementType::F32) {
      float x = a.f32[u], y = b.f32[u];
      switch (k) {
        case HloOpKind::Add:
          out.f32[u] = x + y;
          break;
        case HloOpKind::Subtract:
          out.f32[u] = x - y;
          break;
        case HloOpKind::Multiply:
          out.f32[u] = x * y;
          break;
        case HloOpKind::Divide:
          out.f32[u] = x / y;
          break;
        case HloOpKind::Maximum:
          out.f32[u] = std::max(x, y);
          break;
        case HloOpKind::Lt:
          out.pred[u] = x < y;
          break;
        case HloOpKind::Le:
          out.pred[u] = x <= y;
          break;
        default:
          eval_error("not a binary op");
      }
    } else {
      int64_t x = a.s64[u], y = b.s64[u];
      switch (k) {
        case HloOpKind::Add:
          out.s64[u] = x + y;
          break;
        case HloOpKind::Subtract:
          out.s64[u] = x - y;
          break;
        case HloOpKind::Multiply:
          out.s64[u] = x * y;
          break;
        case HloOpKind::Divide:
          if (y == 0) eval_error("integer division by zero");
          out.s64[u] = x / y;
          break;
        case HloOpKind::Maximum:
          out.s64[u] = std::max(x, y);
          break;
        case HloOpKind::Lt:
          out.pred[u] = x < y;
          break;
        case HloOpKind::Le:
          out.pred[u] = x <= y;
          break;
        default:
          eval_error("not a binary op");
      }
    }
  }
  return out;
}

Value eval_dot(const DimNums& d, const TensorValue& lhs, const TensorValue& rhs) {
  if (lhs.type.elem != rhs.type.elem || lhs.type.elem == ElementType::Pred)
    eval_error("dot operand element types invalid");
  auto extent = [](const TensorValue& t, int64_t dim) {
    return t.type.shape[static_cast<size_t>(dim)];
  };
  std::vector<int64_t> lhs_free, rhs_free;
  for (int64_t i = 0; i < lhs.type.rank(); ++i)
    if (!std::count(d.lhs_contracting.begin(), d.lhs_contracting.end(), i) &&
        !std::count(d.lhs_batch.begin(), d.lhs_batch.end(), i))
      lhs_free.push_back(i);
  for (int64_t i = 0; i < rhs.type.rank(); ++i)
    if (!std::count(d.rhs_contracting.begin(), d.rhs_contracting.end(), i) &&
        !std::count(d.rhs_batch.begin(), d.rhs_batch.end(), i))
      rhs_free.push_back(i);

  std::vector<int64_t> out_shape, contr_shape;
  for (int64_t b : d.lhs_batch) out_shape.push_back(extent(lhs, b));
  for (int64_t f : lhs_free) out_shape.push_back(extent(lhs, f));
  for (int64_t f : rhs_free) out_shape.push_back(extent(rhs, f));
  for (size_t i = 0; i < d.lhs_contracting.size(); ++i) {
    if (extent(lhs, d.lhs_contracting[i]) != extent(rhs, d.rhs_contracting[i]))
      eval_error("dot contracting extents differ");
    contr_shape.push_back(extent(lhs, d.lhs_contracting[i]));
  }

  TensorValue out = TensorValue::zeros(TensorType{lhs.type.elem, out_shape});
  std::vector<int64_t> lhs_strides = strides_of(lhs.type.shape);
  std::vector<int64_t> rhs_strides = strides_of(rhs.type.shape);
  std::vector<int64_t> out_idx(out_shape.size(), 0);
  std::vector<int64_t> lhs_idx(static_cast<size_t>(lhs.type.rank()), 0);
  std::vector<int64_t> rhs_idx(static_cast<size_t>(rhs.type.rank()), 0);
  size_t nb = d.lhs_batch.size();
  int64_t flat = 0;
  do {
    for (size_t i = 0; i < nb; ++i) {
      lhs_idx[static_cast<size_t>(d.lhs_batch[i])] = out_idx[i];
      rhs_idx[static_cast<size_t>(d.rhs_batch[i])] = out_idx[i];
    }
    for (size_t i = 0; i < lhs_free.size(); ++i)
      lhs_idx[static_cast<size_t>(lhs_free[i])] = out_idx[nb + i];
    for (size_t i = 0; i < rhs_free.size(); ++i)
      rhs_idx[static_cast<size_t>(rhs_free[i])] = out_idx[nb + lhs_free.size() + i];
    double facc = 0;
    int64_t iacc = 0;
    std::vector<int64_t> c_idx(contr_shape.size(), 0);
    do {
      for (size_t i = 0; i < contr_shape.size(); ++i) {
        lhs_idx[static_cast<size_t>(d.lhs_contracting[i])] = c_idx[i];
        rhs_idx[static_cast<size_t>(d.rhs_contracting[i])] = c_idx[i];
      }
      int64_t lf = flat_index(lhs_idx, lhs_strides);
      int64_t rf = flat_index(rhs_idx, rhs_strides);
      if (lhs.type.elem == ElementType::F32)
        facc += static_cast<double>(lhs.f32[static_cast<size_t>(lf)]) *
                static_cast<double>(rhs.f32[static_cast<size_t>(rf)]);
      else
        iacc += lhs.s64[static_cast<size_t>(lf)] * rhs.s64[static_cast<size_t>(rf)];
    } while (next_index(c_idx, contr_shape));
    if (lhs.type.elem == ElementType::F32)
      out.f32[static_cast<size_t>(flat)] = static_cast<float>(facc);
    else
      out.s64[static_cast<size_t>(flat)] = iacc;
    ++flat;
  } while (next_index(out_idx, out_shape));
  return out;
}

ElementType callback_elem(const EvalContext& ctx, int comp) {
  const HloComputation& cb = ctx.module->computations[static_cast<size_t>(comp)];
  const ValueType& root = cb.root_instruction().type;
  if (!root.is_tensor() || root.tensor.rank() != 0) eval_error("callback root must be scalar");
  return root.tensor.elem;
}

Value eval_map(const EvalContext& ctx, const HloOpConfig& config,
               const std::vector<Value>& operands) {
  if (operands.empty()) eval_error("map needs operands");
  if (!ctx.module) eval_error("map requires a module context");
  std::vector<const TensorValue*> ins;
  for (const Value& v : operands) ins.push_back(&tensor_of(v, "map operand"));
  for (const TensorValue* t : ins)
    if (t->type.shape != ins[0]->type.shape) eval_error("map operand shapes differ");
  TensorValue out =
      TensorValue::zeros(TensorType{callback_elem(ctx, config.to_apply), ins[0]->type.shape});
  int64_t n = ins[0]->element_count();
  for (int64_t i = 0; i < n; ++i) {
    std::vector<Value> args;
    args.reserve(ins.size());
    for (const TensorValue* t : ins) args.push_back(Value(scalar_slice(*t, i)));
    Value r = evaluate_computation(ctx, config.to_apply, args);
    const TensorValue& rt = tensor_of(r, "map callback result");
    if (rt.type.rank() != 0 || rt.type.elem != out.type.elem)
      eval_error("map callback result type mismatch");
    switch (out.type.elem) {
      case ElementType::F32:
        out.f32[static_cast<size_t>(i)] = rt.f32[0];
        break;
      case ElementType::S64:
        out.s64[static_cast<size_t>(i)] = rt.s64[0];
        break;
      case ElementType::Pred:
        out.pred[static_cast<size_t>(i)] = rt.pred[0];
        break;
    }
  }
  return out;
}

Value eval_reduce(const EvalContext& ctx, const HloOpConfig& config,
                  const std::vector<Value>& operands) {
  if (operands.size() != 2) eval_error("reduce expects 2 operands");
  if (!ctx.module) eval_error("reduce requires a module context");
  const TensorValue& in = tensor_of(operands[0], "reduce operand");
  const TensorValue& init = tensor_of(operands[1], "reduce init");
  if (init.type.rank() != 0 || init.type.elem != in.type.elem)
    eval_error("reduce init must be a scalar of the operand element type");
  std::vector<int64_t> out_shape;
  std::vector<size_t> kept;
  for (int64_t i = 0; i < in.type.rank(); ++i) {
    if (std::count(config.dimensions.begin(), config.dimensions.end(), i)) continue;
    out_shape.push_back(in.type.shape[static_cast<size_t>(i)]);
    kept.push_back(static_cast<size_t>(i));
  }
  // Accumulators, one per output element, seeded with init.
  TensorValue out = TensorValue::zeros(TensorType{in.type.elem, out_shape});
  std::vector<Value> acc(static_cast<size_t>(out.element_count()), Value(init));
  std::vector<int64_t> out_strides = strides_of(out_shape);
  std::vector<int64_t> idx(static_cast<size_t>(in.type.rank()), 0);
  std::vector<int64_t> in_strides = strides_of(in.type.shape);
  if (in.element_count() > 0) {
    do {
      std::vector<int64_t> out_idx;
      for (size_t k : kept) out_idx.push_back(idx[k]);
      size_t o = static_cast<size_t>(flat_index(out_idx, out_strides));
      Value elem = Value(scalar_slice(in, flat_index(idx, in_strides)));
      acc[o] = evaluate_computation(ctx, config.to_apply, {acc[o], elem});
    } while (next_index(idx, in.type.shape));
  }
  for (size_t o = 0; o < acc.size(); ++o) {
    const TensorValue& a = tensor_of(acc[o], "reduce accumulator");
    if (a.type.rank() != 0 || a.type.elem != in.type.elem)
      eval_error("reduce callback result type mismatch");
    switch (in.type.elem) {
      case ElementType::F32:
        out.f32[o] = a.f32[0];
        break;
      case ElementType::S64:
        out.s64[o] = a.s64[0];
        break;
      case ElementType::Pred:
        out.pred[o] = a.pred[0];
        break;
    }
  }
  return out;
}

Value eval_broadcast(const HloOpConfig& config, const TensorValue& in) {
  if (config.dimensions.size() != static_cast<size_t>(in.type.rank()))
    eval_error("broadcast dimensions size must equal operand rank");
  TensorValue out = TensorValue::zeros(TensorType{in.type.elem, config.shape});
  std::vector<int64_t> in_strides = strides_of(in.type.shape);
  std::vector<int64_t> out_idx(config.shape.size(), 0);
  std::vector<int64_t> in_idx(static_cast<size_t>(in.type.rank()), 0);
  int64_t flat = 0;
  if (out.element_count() == 0) return out;
  do {
    for (size_t i = 0; i < config.dimensions.size(); ++i)
      in_idx[i] = out_idx[static_cast<size_t>(config.dimensions[i])];
    int64_t src = flat_index(in_idx, in_strides);
    switch (in.type.elem) {
      case ElementType::F32:
        out.f32[static_cast<size_t>(flat)] = in.f32[static_cast<size_t>(src)];
        break;
      case ElementType::S64:
        out.s64[static_cast<size_t>(flat)] = in.s64[static_cast<size_t>(src)];
        break;
      case ElementType::Pred:
        out.pred[static_cast<size_t>(flat)] = in.pred[static_cast<size_t>(src)];
        break;
    }
    ++flat;
  } while (next_index(out_idx, config.shape));
  return out;
}

Value eval_transpose(const HloOpConfig& config, const TensorValue& in) {
  if (config.permutation.size() != static_cast<size_t>(in.type.rank()))
    eval_error("bad permutation length");
  std::vector<int64_t> out_shape;
  for (int64_t p : config.permutation) out_shape.push_back(in.type.shape[static_cast<size_t>(p)]);
  TensorValue out = TensorValue::zeros(TensorType{in.type.elem, out_shape});
  std::vector<int64_t> in_strides = strides_of(in.type.shape);
  std::vector<int64_t> out_idx(out_shape.size(), 0);
  std::vector<int64_t> in_idx(out_shape.size(), 0);
  int64_t flat = 0;
  if (out.element_count() == 0) return out;
  do {
    for (size_t i = 0; i < out_shape.size(); ++i)
      in_idx[static_cast<size_t>(config.permutation[i])] = out_idx[i];
    int64_t src = flat_index(in_idx, in_strides);
    switch (in.type.elem) {
      case ElementType::F32:
        out.f32[static_cast<size_t>(flat)] = in.f32[static_cast<size_t>(src)];
        break;
      case ElementType::S64:
        out.s64[static_cast<size_t>(flat)] = in.s64[static_cast<size_t>(src)];
        break;
      case ElementType::Pred:
        out.pred[static_cast<size_t>(flat)] = in.pred[static_cast<size_t>(src)];
        break;
    }
    ++flat;
  } while (next_index(out_idx, out_shape));
  return out;
}

}  // namespace

Value evaluate_op(const EvalContext& ctx, const HloOpConfig& config,
                  const std::vector<Value>& operands) {
  switch (config.kind) {
    case HloOpKind::Parameter:
      eval_error("parameter has no evaluation rule");
    case HloOpKind::Constant:
      return Value(config.literal);
    case HloOpKind::Rng: {
      if (!ctx.rng) eval_error("rng requires a generator");
      if (config.elem != ElementType::F32) eval_error("rng supports f32 only");
      TensorValue out = TensorValue::zeros(TensorType{ElementType::F32, config.shape});
      for (float& x : out.f32) x = ctx.rng->next_f32();
      return out;
    }
    case HloOpKind::Dot:
      if (operands.size() != 2) eval_error("dot expects 2 operands");
      return eval_dot(config.dnums, tensor_of(operands[0], "dot lhs"),
                      tensor_of(operands[1], "dot rhs"));
    case HloOpKind::Map:
      return eval_map(ctx, config, operands);
    case HloOpKind::Reduce:
      return eval_reduce(ctx, config, operands);
    case HloOpKind::Broadcast:
      if (operands.size() != 1) eval_error("broadcast expects 1 operand");
      return eval_broadcast(config, tensor_of(operands[0], "broadcast operand"));
    case HloOpKind::Transpose:
      if (operands.size() != 1) eval_error("transpose expects 1 operand");
      return eval_transpose(config, tensor_of(operands[0], "transpose operand"));
    case HloOpKind::Reshape: {
      if (operands.size() != 1) eval_error("reshape expects 1 operand");
      TensorValue out = tensor_of(operands[0], "reshape operand");
      int64_t n = 1;
      for (int64_t d : config.shape) n *= d;
      if (n != out.element_count()) eval_error("reshape element count mismatch");
      out.type.shape = config.shape;
      return out;
    }
    case HloOpKind::Tuple:
      return Value(std::vector<Value>(operands.begin(), operands.end()));
    case HloOpKind::GetTupleElement: {
      if (operands.size() != 1 || !operands[0].is_tuple())
        eval_error("get-tuple-element expects one tuple operand");
      const std::vector<Value>& elems = operands[0].elements();
      if (config.index < 0 || config.index >= static_cast<int>(elems.size()))
        eval_error("get-tuple-element index out of range");
      return elems[static_cast<size_t>(config.index)];
    }
    case HloOpKind::Conditional: {
      if (operands.size() != 3) eval_error("conditional expects 3 operands");
      bool p = scalar_pred_of(operands[0], "conditional predicate");
      int comp = p ? config.true_comp : config.false_comp;
      return evaluate_computation(ctx, comp, {operands[p ? 1 : 2]});
    }
    case HloOpKind::While: {
      if (operands.size() != 1) eval_error("while expects 1 operand");
      Value state = operands[0];
      for (int64_t iter = 0;; ++iter) {
        if (iter >= ctx.while_cap) eval_error("while iteration cap exceeded");
        Value c = evaluate_computation(ctx, config.cond_comp, {state});
        if (!scalar_pred_of(c, "while condition result")) break;
        state = evaluate_computation(ctx, config.body_comp, {state});
      }
      return state;
    }
    case HloOpKind::Exponential: {
      if (operands.size() != 1) eval_error("exponential expects 1 operand");
      TensorValue out = tensor_of(operands[0], "exponential operand");
      if (out.type.elem != ElementType::F32) eval_error("exponential requires f32");
      for (float& x : out.f32) x = std::exp(x);
      return out;
    }
    case HloOpKind::Select: {
      if (operands.size() != 3) eval_error("select expects 3 operands");
      const TensorValue& p = tensor_of(operands[0], "select predicate");
      const TensorValue& a = tensor_of(operands[1], "select operand");
      const TensorValue& b = tensor_of(operands[2], "select operand");
      if (p.type.elem != ElementType::Pred || p.type.shape != a.type.shape || a.type != b.type)
        eval_error("select operand mismatch");
      TensorValue out = a;
      for (int64_t i = 0; i < out.element_count(); ++i) {
        size_t u = static_cast<size_t>(i);
        if (!p.pred[u]) {
          switch (out.type.elem) {
            case ElementType::F32:
              out.f32[u] = b.f32[u];
              break;
            case ElementType::S64:
              out.s64[u] = b.s64[u];
              break;
            case ElementType::Pred:
              out.pred[u] = b.pred[u];
              break;
          }
        }
      }
      return out;
    }
    case HloOpKind::Add:
    case HloOpKind::Subtract:
    case HloOpKind::Multiply:
    case HloOpKind::Divide:
    case HloOpKind::Maximum:
    case HloOpKind::Lt:
    case HloOpKind::Le:
      if (operands.size() != 2) eval_error("binary op expects 2 operands");
      return eval_binary(config.kind, tensor_of(operands[0], "operand"),
                         tensor_of(operands[1], "operand"));
  }
  eval_error("unhandled kind");
}

Value evaluate_computation(const EvalContext& ctx, int computation,
                           const std::vector<Value>& args) {
  if (!ctx.module || computation < 0 ||
      computation >= static_cast<int>(ctx.module->computations.size()))
    eval_error("bad computation reference");
  const HloComputation& comp = ctx.module->computations[static_cast<size_t>(computation)];
  if (static_cast<int>(args.size()) != comp.num_parameters())
    eval_error("computation '" + comp.name + "' expects " +
               std::to_string(comp.num_parameters()) + " arguments, got " +
               std::to_string(args.size()));
  std::vector<Value> vals;
  vals.reserve(comp.instructions.size());
  for (const HloInstruction& in : comp.instructions) {
    if (in.config.kind == HloOpKind::Parameter) {
      vals.push_back(args[static_cast<size_t>(in.config.index)]);
      continue;
    }
    std::vector<Value> ops;
    ops.reserve(in.operands.size());
    for (int o : in.operands) ops.push_back(vals[static_cast<size_t>(o)]);
    vals.push_back(evaluate_op(ctx, in.config, ops));
  }
  return vals[static_cast<size_t>(comp.root)];
}

DeviceHandle Device::transfer(Value v) {
  std::lock_guard<std::mutex> lock(mu_);
  DeviceHandle h = next_handle_++;
  live_.emplace(h, std::move(v));
  ++stats_.transfers_in;
  stats_.live_allocations = static_cast<int64_t>(live_.size());
  return h;
}

Value Device::lookup(DeviceHandle h) const {
  auto it = live_.find(h);
  if (it == live_.end()) throw RuntimeError("unknown device handle " + std::to_string(h));
  return it->second;
}

Value Device::fetch(DeviceHandle h) {
  std::lock_guard<std::mutex> lock(mu_);
  Value v = lookup(h);
  ++stats_.transfers_out;
  return v;
}

void Device::release(DeviceHandle h) {
  std::lock_guard<std::mutex> lock(mu_);
  if (live_.erase(h) == 0) throw RuntimeError("unknown device handle " + std::to_string(h));
  stats_.live_allocations = static_cast<int64_t>(live_.size());
}

DeviceHandle Device::execute_op(const HloModule& m, const HloOpConfig& config,
                                const std::vector<DeviceHandle>& operands) {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Value> ops;
  std::vector<ValueType> op_types;
  for (DeviceHandle h : operands) {
    ops.push_back(lookup(h));
    op_types.push_back(ops.back().type());
  }
  EvalContext ctx;
  ctx.module = &m;
  ctx.rng = &rng_;
  Value result = evaluate_op(ctx, config, ops);
  ValueType expected = shape_infer(m, config, op_types);
  if (!(result.type() == expected))
    throw RuntimeError("device op produced " + to_string(result.type()) + ", expected " +
                       to_string(expected));
  ++stats_.executions;
  DeviceHandle h = next_handle_++;
  live_.emplace(h, std::move(result));
  stats_.live_allocations = static_cast<int64_t>(live_.size());
  return h;
}

DeviceHandle Device::execute_module(const HloModule& m, const std::vector<DeviceHandle>& args) {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Value> vals;
  for (DeviceHandle h : args) vals.push_back(lookup(h));
  EvalContext ctx;
  ctx.module = &m;
  ctx.rng = &rng_;
  Value result = evaluate_computation(ctx, m.entry, vals);
  ++stats_.executions;
  DeviceHandle h = next_handle_++;
  live_.emplace(h, std::move(result));
  stats_.live_allocations = static_cast<int64_t>(live_.size());
  return h;
}

DeviceStats Device::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  return stats_;
}

Value run_module(Device& dev, const HloModule& m, const std::vector<Value>& args) {
  std::vector<DeviceHandle> handles;
  for (const Value& a : args) handles.push_back(dev.transfer(a));
  DeviceHandle r = dev.execute_module(m, handles);
  Value result = dev.fetch(r);
  for (DeviceHandle h : handles) dev.release(h);
  dev.release(r);
  return result;
}

}  // namespace mhlc
