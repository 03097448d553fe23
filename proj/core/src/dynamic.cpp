// SPDX-License-Identifier: Apache-2.0

#include "mhlc/dynamic.hpp"

#include <map>
#include <sstream>

#include "mhlc/builtins.hpp"
#include "mhlc/infer.hpp"

namespace mhlc {

namespace {

constexpr int kMaxCallDepth = 64;

TensorValue capture_value(const CapturedLiteral& c) {
  switch (c.elem) {
    case ElementType::F32:
      return TensorValue::scalar_f32(static_cast<float>(c.f));
    case ElementType::S64:
      return TensorValue::scalar_s64(c.i);
    case ElementType::Pred:
      return TensorValue::scalar_pred(c.i != 0);
  }
  throw RuntimeError("bad capture");
}

/// Emitter that runs each op on the device as soon as it is lowered.
/// Refs index a table of (handle, type) pairs. Constants transfer to the
/// device instead of executing.
class DeviceEmitter : public OpEmitter {
 public:
  DeviceEmitter(const FrontendModule& m, Device& dev, const DynamicOptions& opts)
      : dev_(dev), opts_(opts) {
    ctx_.src = &m;
  }

  int add_value(Value v) {
    ValueType t = v.type();
    handles_.push_back(dev_.transfer(std::move(v)));
    types_.push_back(std::move(t));
    return static_cast<int>(handles_.size()) - 1;
  }

  int emit(const HloOpConfig& config, const std::vector<int>& operands) override {
    if (config.kind == HloOpKind::Constant) return add_value(Value(config.literal));
    std::vector<DeviceHandle> hs;
    std::vector<ValueType> ts;
    for (int r : operands) {
      hs.push_back(handles_.at(static_cast<size_t>(r)));
      ts.push_back(types_.at(static_cast<size_t>(r)));
    }
    ValueType t = shape_infer(ctx_.module, config, ts);
    DeviceHandle h = dev_.execute_op(ctx_.module, config, hs);
    if (opts_.trace) {
      std::ostringstream os;
      os << "execute " << kind_name(config.kind) << '(';
      for (size_t i = 0; i < hs.size(); ++i) os << (i ? ", " : "") << 'h' << hs[i];
      os << ") -> h" << h << " : " << to_string(t);
      opts_.trace(os.str());
    }
    handles_.push_back(h);
    types_.push_back(std::move(t));
    return static_cast<int>(handles_.size()) - 1;
  }

  ValueType type_of(int ref) override { return types_.at(static_cast<size_t>(ref)); }

  int callback(const FnRefType& fn, const std::vector<ValueType>& scalar_params) override {
    return compile_scalar_callback(ctx_, fn, scalar_params);
  }

  Value fetch(int ref) { return dev_.fetch(handles_.at(static_cast<size_t>(ref))); }

  void release_all() {
    for (DeviceHandle h : handles_) dev_.release(h);
    handles_.clear();
    types_.clear();
  }

  const FrontendModule& src() const { return *ctx_.src; }

 private:
  HloEmitContext ctx_;
  Device& dev_;
  const DynamicOptions& opts_;
  std::vector<DeviceHandle> handles_;
  std::vector<ValueType> types_;
};

struct DynamicRunner {
  DeviceEmitter& em;
  const DynamicOptions& opts;
  int depth = 0;
  int64_t steps = 0;

  BuiltinArg operand_arg(const std::map<std::string, BuiltinArg>& env, const Operand& op,
                         const std::string& fn_name) {
    switch (op.kind) {
      case Operand::Kind::Value: {
        auto it = env.find(op.name);
        if (it == env.end())
          throw RuntimeError("in '" + fn_name + "': value '%" + op.name + "' is undefined here");
        return it->second;
      }
      case Operand::Kind::FnRef:
        return {AbstractValue::fnref(FnRefType{op.name, op.captures}), -1};
      case Operand::Kind::AllDims:
        return {AbstractValue::constant_of(TensorValue::scalar_s64(0), true), -1};
    }
    throw RuntimeError("bad operand");
  }

  BuiltinArg eval_function(const FrontendFunction& fn, const std::vector<BuiltinArg>& args) {
    if (++depth > kMaxCallDepth) throw RuntimeError("call depth limit exceeded");
    if (args.size() != fn.params.size())
      throw RuntimeError("function '@" + fn.name + "' expects " +
                         std::to_string(fn.params.size()) + " arguments, got " +
                         std::to_string(args.size()));
    std::map<std::string, BuiltinArg> env;
    for (size_t i = 0; i < fn.params.size(); ++i) env[fn.params[i].name] = args[i];

    int cur = 0, prev = -1;
    while (true) {
      if (++steps > opts.step_cap) throw RuntimeError("dynamic evaluation step cap exceeded");
      const BasicBlock& blk = fn.blocks[static_cast<size_t>(cur)];

      // φ nodes read their incomings in parallel before any binding lands.
      std::vector<std::pair<std::string, BuiltinArg>> phi_updates;
      for (const Instruction& in : blk.instructions) {
        if (in.kind != Instruction::Kind::Phi) continue;
        const std::string& from = fn.blocks[static_cast<size_t>(prev)].label;
        const PhiIncoming* match = nullptr;
        for (const PhiIncoming& inc : in.incomings)
          if (inc.block == from) match = &inc;
        if (!match)
          throw RuntimeError("in '" + fn.name + "': phi '%" + in.result +
                             "' has no incoming from '" + from + "'");
        auto it = env.find(match->value);
        if (it == env.end())
          throw RuntimeError("in '" + fn.name + "': phi incoming '%" + match->value +
                             "' is undefined");
        phi_updates.emplace_back(in.result, it->second);
      }
      for (auto& [name, arg] : phi_updates) env[name] = std::move(arg);

      for (const Instruction& in : blk.instructions) {
        switch (in.kind) {
          case Instruction::Kind::Phi:
            break;
          case Instruction::Kind::Const:
            env[in.result] = {AbstractValue::constant_of(in.const_value, in.all_marker), -1};
            break;
          case Instruction::Kind::Call: {
            std::vector<BuiltinArg> call_args;
            std::vector<AbstractValue> infos;
            for (const Operand& op : in.args) {
              call_args.push_back(operand_arg(env, op, fn.name));
              infos.push_back(call_args.back().info);
            }
            int ref;
            try {
              ref = lower_builtin_call(em, in.callee, call_args);
            } catch (const CompileError& e) {
              throw RuntimeError(std::string(e.what()));
            }
            AbstractValue info = builtin_transfer(em.src(), in.callee, infos);
            if (!info.is_const()) info = AbstractValue::from_type(em.type_of(ref));
            env[in.result] = {std::move(info), ref};
            break;
          }
          case Instruction::Kind::CallFn: {
            const FrontendFunction* callee = em.src().find(in.callee);
            if (!callee)
              throw RuntimeError("in '" + fn.name + "': unknown function '@" + in.callee + "'");
            std::vector<BuiltinArg> call_args;
            for (const CapturedLiteral& c : in.captures)
              call_args.push_back({AbstractValue::constant_of(capture_value(c)), -1});
            for (const Operand& op : in.args) call_args.push_back(operand_arg(env, op, fn.name));
            env[in.result] = eval_function(*callee, call_args);
            break;
          }
          case Instruction::Kind::MakeTuple: {
            std::vector<int> refs;
            std::vector<AbstractValue> infos;
            for (const Operand& op : in.args) {
              BuiltinArg a = operand_arg(env, op, fn.name);
              refs.push_back(materialize(em, a));
              infos.push_back(std::move(a.info));
            }
            env[in.result] = {AbstractValue::tuple(std::move(infos)),
                              em.emit(HloOpConfig::tuple(), refs)};
            break;
          }
          case Instruction::Kind::GetElement: {
            BuiltinArg t = operand_arg(env, in.args.at(0), fn.name);
            int ref = em.emit(HloOpConfig::get_tuple_element(static_cast<int>(in.index)),
                              {materialize(em, t)});
            AbstractValue info = AbstractValue::from_type(em.type_of(ref));
            if (t.info.kind == AbstractValue::Kind::Tuple && in.index >= 0 &&
                in.index < static_cast<int64_t>(t.info.elements.size()))
              info = t.info.elements[static_cast<size_t>(in.index)];
            env[in.result] = {std::move(info), ref};
            break;
          }
        }
      }

      const Terminator& t = blk.term;
      switch (t.kind) {
        case Terminator::Kind::Jmp:
          prev = cur;
          cur = fn.block_index(t.target_true);
          break;
        case Terminator::Kind::Br: {
          auto it = env.find(t.cond);
          if (it == env.end())
            throw RuntimeError("in '" + fn.name + "': branch condition '%" + t.cond +
                               "' is undefined");
          const BuiltinArg& c = it->second;
          Value v;
          if (c.info.is_const())
            v = Value(c.info.constant);
          else if (c.ref >= 0)
            v = em.fetch(c.ref);
          else
            throw RuntimeError("in '" + fn.name + "': branch on unmaterialized value");
          if (!v.is_tensor() || v.tensor().type.elem != ElementType::Pred ||
              v.tensor().type.rank() != 0)
            throw RuntimeError("in '" + fn.name + "': branch on non-pred value");
          prev = cur;
          cur = fn.block_index(v.tensor().pred[0] ? t.target_true : t.target_false);
          break;
        }
        case Terminator::Kind::Return: {
          auto it = env.find(t.value);
          if (it == env.end())
            throw RuntimeError("in '" + fn.name + "': return value '%" + t.value +
                               "' is undefined");
          --depth;
          return it->second;
        }
      }
      if (cur < 0) throw RuntimeError("in '" + fn.name + "': jump to unknown block");
    }
  }
};

}  // namespace

Value dynamic_eval(const FrontendModule& m, const std::string& entry,
                   const std::vector<Value>& inputs, Device& dev, const DynamicOptions& opts) {
  const FrontendFunction* fn = m.find(entry);
  if (!fn) throw RuntimeError("unknown function '@" + entry + "'");
  if (inputs.size() != fn->params.size())
    throw RuntimeError("function '@" + entry + "' expects " + std::to_string(fn->params.size()) +
                       " arguments, got " + std::to_string(inputs.size()));

  DeviceEmitter em(m, dev, opts);
  std::vector<BuiltinArg> args;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const std::optional<ValueType>& declared = fn->params[i].type;
    if (declared && !(*declared == inputs[i].type()))
      throw RuntimeError("argument " + std::to_string(i) + " of '@" + entry + "' expects " +
                         to_string(*declared) + ", got " + to_string(inputs[i].type()));
    args.push_back({AbstractValue::from_value(inputs[i]), em.add_value(inputs[i])});
  }

  try {
    BuiltinArg result = DynamicRunner{em, opts}.eval_function(*fn, args);
    Value out = em.fetch(materialize(em, result));
    em.release_all();
    return out;
  } catch (...) {
    em.release_all();
    throw;
  }
}

}  // namespace mhlc
