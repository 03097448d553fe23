// SPDX-License-Identifier: Apache-2.0

#include "mhlc/infer.hpp"

#include <set>
#include <sstream>

#include "mhlc/builtins.hpp"
#include "mhlc/interp.hpp"

namespace mhlc {

namespace {

bool is_const_deep(const AbstractValue& v) {
  if (v.is_const()) return true;
  if (v.kind != AbstractValue::Kind::Tuple) return false;
  for (const AbstractValue& e : v.elements)
    if (!is_const_deep(e)) return false;
  return true;
}

AbstractValue operand_abstract(const std::map<std::string, AbstractValue>& values,
                               const Operand& op) {
  switch (op.kind) {
    case Operand::Kind::Value: {
      auto it = values.find(op.name);
      return it == values.end() ? AbstractValue::bottom() : it->second;
    }
    case Operand::Kind::FnRef:
      return AbstractValue::fnref(FnRefType{op.name, op.captures});
    case Operand::Kind::AllDims:
      return AbstractValue::constant_of(TensorValue::scalar_s64(0), true);
  }
  return AbstractValue::top();
}

}  // namespace

AbstractValue builtin_transfer(const FrontendModule& m, const std::string& name,
                               const std::vector<AbstractValue>& args) {
  const BuiltinSig* sig = builtin_sig(name);
  if (!sig) return AbstractValue::top();
  if (sig->arity >= 0) {
    if (static_cast<int>(args.size()) != sig->arity)
      throw CompileError("builtin '" + name + "' expects " + std::to_string(sig->arity) +
                         " arguments, got " + std::to_string(args.size()));
  } else if (args.size() < 2) {
    throw CompileError("builtin '" + name + "' expects at least 2 arguments");
  }

  bool all_const = true;
  for (size_t i = 0; i < args.size(); ++i) {
    const AbstractValue& a = args[i];
    if (a.is_bottom()) return AbstractValue::bottom();
    bool is_static = std::count(sig->static_args.begin(), sig->static_args.end(), static_cast<int>(i));
    bool is_fnref = std::count(sig->fnref_args.begin(), sig->fnref_args.end(), static_cast<int>(i));
    if (is_static) {
      if (!a.is_const()) return AbstractValue::top();
    } else if (is_fnref) {
      if (a.kind != AbstractValue::Kind::FnRef) return AbstractValue::top();
    } else {
      if (!a.fully_typed()) return AbstractValue::top();
      if (!is_const_deep(a)) all_const = false;
    }
  }
  bool fold = all_const && name != "rng";

  try {
    HloEmitContext ctx;
    ctx.src = &m;
    ctx.type_probe = !fold;  // folding evaluates, so every value must be exact
    ComputationBuilder b(ctx.module, "probe");
    BuilderEmitter em(ctx, b);
    std::vector<BuiltinArg> call_args;
    int pidx = 0;
    for (const AbstractValue& a : args) {
      if (fold || a.kind == AbstractValue::Kind::FnRef || is_const_deep(a)) {
        call_args.push_back({a, -1});
      } else {
        int ref = b.add_parameter(pidx++, *a.type_of());
        call_args.push_back({a, ref});
      }
    }
    int ref = lower_builtin_call(em, name, call_args);
    b.set_root(ref);
    if (fold) {
      EvalContext ectx;
      ectx.module = &ctx.module;
      Value v = evaluate_computation(ectx, b.comp_index(), {});
      return AbstractValue::from_value(v);
    }
    return AbstractValue::from_type(b.type_of(ref));
  } catch (const CompileError&) {
    return AbstractValue::top();
  } catch (const RuntimeError&) {
    return AbstractValue::top();
  }
}

namespace {

struct InferEngine {
  const FrontendModule& m;
  InferOptions opts;
  int depth = 0;
  std::map<std::string, AbstractValue> memo;
  std::set<std::string> in_progress;

  std::string call_key(const std::string& fn, const std::vector<AbstractValue>& args) {
    std::ostringstream os;
    os << fn << '(';
    for (const AbstractValue& a : args) os << to_string(a) << ';';
    os << ')';
    return os.str();
  }

  AbstractValue infer_call(const std::string& callee, const std::vector<AbstractValue>& args) {
    for (const AbstractValue& a : args)
      if (a.is_bottom()) return AbstractValue::bottom();
    const FrontendFunction* f = m.find(callee);
    if (!f) return AbstractValue::top();
    if (args.size() != f->params.size()) return AbstractValue::top();
    std::string key = call_key(callee, args);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    if (in_progress.count(key) || depth >= opts.recursion_depth_limit)
      return AbstractValue::top();
    in_progress.insert(key);
    ++depth;
    InferenceResult r = run(*f, args);
    --depth;
    in_progress.erase(key);
    memo[key] = r.return_value;
    return r.return_value;
  }

  AbstractValue transfer(const Instruction& in, const std::map<std::string, AbstractValue>& values,
                         const std::vector<bool>& reachable, const FrontendFunction& fn) {
    switch (in.kind) {
      case Instruction::Kind::Const:
        return AbstractValue::constant_of(in.const_value, in.all_marker);
      case Instruction::Kind::Call: {
        std::vector<AbstractValue> args;
        for (const Operand& op : in.args) args.push_back(operand_abstract(values, op));
        return builtin_transfer(m, in.callee, args);
      }
      case Instruction::Kind::CallFn: {
        std::vector<AbstractValue> args;
        for (const CapturedLiteral& c : in.captures) {
          TensorValue v = c.elem == ElementType::F32 ? TensorValue::scalar_f32(static_cast<float>(c.f))
                          : c.elem == ElementType::S64 ? TensorValue::scalar_s64(c.i)
                                                       : TensorValue::scalar_pred(c.i != 0);
          args.push_back(AbstractValue::constant_of(std::move(v)));
        }
        for (const Operand& op : in.args) args.push_back(operand_abstract(values, op));
        return infer_call(in.callee, args);
      }
      case Instruction::Kind::MakeTuple: {
        std::vector<AbstractValue> elems;
        for (const Operand& op : in.args) elems.push_back(operand_abstract(values, op));
        return AbstractValue::tuple(std::move(elems));
      }
      case Instruction::Kind::GetElement: {
        AbstractValue t = operand_abstract(values, in.args.at(0));
        if (t.is_bottom()) return AbstractValue::bottom();
        if (t.kind == AbstractValue::Kind::Tuple && in.index >= 0 &&
            in.index < static_cast<int64_t>(t.elements.size()))
          return t.elements[static_cast<size_t>(in.index)];
        return AbstractValue::top();
      }
      case Instruction::Kind::Phi: {
        AbstractValue v = AbstractValue::bottom();
        for (const PhiIncoming& inc : in.incomings) {
          int b = fn.block_index(inc.block);
          if (b < 0 || !reachable[static_cast<size_t>(b)]) continue;
          auto it = values.find(inc.value);
          if (it != values.end()) v = join(v, it->second);
        }
        return v;
      }
    }
    return AbstractValue::top();
  }

  InferenceResult run(const FrontendFunction& fn, const std::vector<AbstractValue>& args) {
    InferenceResult res;
    res.block_reachable.assign(fn.blocks.size(), false);
    if (!fn.blocks.empty()) res.block_reachable[0] = true;
    for (size_t i = 0; i < fn.params.size() && i < args.size(); ++i)
      res.values[fn.params[i].name] = args[i];

    size_t instr_count = 0;
    for (const BasicBlock& b : fn.blocks) instr_count += b.instructions.size() + 1;
    int max_iterations = static_cast<int>(4 * instr_count + 8);

    bool changed = true;
    while (changed && res.fixpoint_iterations < max_iterations) {
      changed = false;
      for (size_t bi = 0; bi < fn.blocks.size(); ++bi) {
        if (!res.block_reachable[bi]) continue;
        const BasicBlock& blk = fn.blocks[bi];
        for (const Instruction& in : blk.instructions) {
          AbstractValue nv = transfer(in, res.values, res.block_reachable, fn);
          AbstractValue& slot = res.values[in.result];
          AbstractValue joined = join(slot, nv);
          if (!(joined == slot)) {
            slot = std::move(joined);
            changed = true;
          }
        }
        // Successor reachability, with constant-branch pruning.
        const Terminator& t = blk.term;
        auto mark = [&](const std::string& label) {
          int b = fn.block_index(label);
          if (b >= 0 && !res.block_reachable[static_cast<size_t>(b)]) {
            res.block_reachable[static_cast<size_t>(b)] = true;
            changed = true;
          }
        };
        if (t.kind == Terminator::Kind::Jmp) {
          mark(t.target_true);
        } else if (t.kind == Terminator::Kind::Br) {
          auto it = res.values.find(t.cond);
          AbstractValue c = it == res.values.end() ? AbstractValue::bottom() : it->second;
          if (c.is_bottom()) continue;
          if (c.is_const() && c.constant.type.elem == ElementType::Pred &&
              c.constant.type.rank() == 0) {
            mark(c.constant.pred[0] ? t.target_true : t.target_false);
          } else {
            mark(t.target_true);
            mark(t.target_false);
          }
        }
      }
      // Count only sweeps that refined the state; the final quiescent
      // sweep merely confirms the fixpoint.
      if (changed) ++res.fixpoint_iterations;
    }

    res.return_value = AbstractValue::bottom();
    for (size_t bi = 0; bi < fn.blocks.size(); ++bi) {
      if (!res.block_reachable[bi]) continue;
      const Terminator& t = fn.blocks[bi].term;
      if (t.kind != Terminator::Kind::Return) continue;
      auto it = res.values.find(t.value);
      if (it != res.values.end()) res.return_value = join(res.return_value, it->second);
    }
    return res;
  }
};

}  // namespace

InferenceResult infer(const FrontendModule& m, const FrontendFunction& fn,
                      const std::vector<AbstractValue>& args, const InferOptions& opts) {
  InferEngine engine{m, opts};
  return engine.run(fn, args);
}

const char* to_string(OffloadFailureReason r) {
  switch (r) {
    case OffloadFailureReason::UnresolvedStaticOperand:
      return "unresolved-static-operand";
    case OffloadFailureReason::UninferredShape:
      return "uninferred-shape";
    case OffloadFailureReason::UnsupportedBuiltin:
      return "unsupported-builtin";
    case OffloadFailureReason::DynamicCallTarget:
      return "dynamic-call-target";
  }
  return "?";
}

OffloadReport check_offloadable(const FrontendModule& m, const FrontendFunction& fn,
                                const InferenceResult& res) {
  OffloadReport report;
  auto fail = [&](const std::string& block, const std::string& instr, OffloadFailureReason r) {
    report.failures.push_back({instr, block, r});
  };
  for (size_t bi = 0; bi < fn.blocks.size(); ++bi) {
    if (bi < res.block_reachable.size() && !res.block_reachable[bi]) continue;
    const BasicBlock& blk = fn.blocks[bi];
    for (const Instruction& in : blk.instructions) {
      size_t before = report.failures.size();
      if (in.kind == Instruction::Kind::Call) {
        const BuiltinSig* sig = builtin_sig(in.callee);
        bool bad_arity =
            sig && ((sig->arity >= 0 && static_cast<int>(in.args.size()) != sig->arity) ||
                    (sig->arity < 0 && in.args.size() < 2));
        if (!sig || bad_arity) {
          fail(blk.label, in.result, OffloadFailureReason::UnsupportedBuiltin);
        } else {
          for (size_t i = 0; i < in.args.size(); ++i) {
            AbstractValue a = operand_abstract(res.values, in.args[i]);
            bool is_static =
                std::count(sig->static_args.begin(), sig->static_args.end(), static_cast<int>(i));
            bool is_fnref =
                std::count(sig->fnref_args.begin(), sig->fnref_args.end(), static_cast<int>(i));
            if (is_static) {
              if (!a.is_const())
                fail(blk.label, in.result, OffloadFailureReason::UnresolvedStaticOperand);
            } else if (is_fnref) {
              if (a.kind != AbstractValue::Kind::FnRef)
                fail(blk.label, in.result, OffloadFailureReason::DynamicCallTarget);
            } else if (!a.fully_typed() || a.kind == AbstractValue::Kind::FnRef) {
              fail(blk.label, in.result, OffloadFailureReason::UninferredShape);
            }
          }
        }
      } else if (in.kind == Instruction::Kind::CallFn) {
        if (!m.find(in.callee)) {
          fail(blk.label, in.result, OffloadFailureReason::DynamicCallTarget);
        } else {
          for (const Operand& op : in.args) {
            AbstractValue a = operand_abstract(res.values, op);
            if (!a.fully_typed()) fail(blk.label, in.result, OffloadFailureReason::UninferredShape);
          }
        }
      }
      if (report.failures.size() == before) {
        auto it = res.values.find(in.result);
        if (it == res.values.end() || !it->second.fully_typed())
          fail(blk.label, in.result, OffloadFailureReason::UninferredShape);
      }
    }
  }
  report.offloadable = report.failures.empty();
  return report;
}

}  // namespace mhlc
