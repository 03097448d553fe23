// SPDX-License-Identifier: Apache-2.0

#include "mhlc/lower.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "mhlc/builtins.hpp"
#include "mhlc/structurize.hpp"

namespace mhlc {

namespace {

std::string offload_message(const std::string& fn, const OffloadReport& report) {
  std::ostringstream os;
  os << "function '" << fn << "' is not offloadable:";
  for (const OffloadFailure& f : report.failures)
    os << "\n  %" << f.instruction << " (" << f.block << "): " << to_string(f.reason);
  return os.str();
}

}  // namespace

OffloadError::OffloadError(const std::string& fn, OffloadReport report)
    : CompileError(offload_message(fn, report)), report_(std::move(report)) {}

namespace {

bool is_const_deep(const AbstractValue& v) {
  if (v.is_const()) return true;
  if (v.kind != AbstractValue::Kind::Tuple) return false;
  for (const AbstractValue& e : v.elements)
    if (!is_const_deep(e)) return false;
  return true;
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

/// Ordered unique collection of SSA value names.
struct UseCollector {
  std::vector<std::string> order;
  std::set<std::string> seen;
  void add(const std::string& name) {
    if (seen.insert(name).second) order.push_back(name);
  }
  void add_operand(const Operand& op) {
    if (op.kind == Operand::Kind::Value) add(op.name);
  }
};

struct FunctionLowerer {
  HloEmitContext& ctx;
  const FrontendFunction& fn;
  const InferenceResult& inf;

  struct Scope {
    std::map<std::string, BuiltinArg> env;
    ComputationBuilder* b = nullptr;
    bool is_entry = false;
  };
  std::map<std::string, std::pair<int, ValueType>> lazy_params;  // unmaterialized entry params

  [[noreturn]] void fail(const std::string& msg) const {
    throw CompileError("in function '" + fn.name + "': " + msg);
  }

  BuiltinArg& lookup(Scope& s, const std::string& name) {
    auto it = s.env.find(name);
    if (it == s.env.end()) fail("value '%" + name + "' is not available in this region");
    BuiltinArg& arg = it->second;
    if (arg.ref < 0 && s.is_entry) {
      auto lp = lazy_params.find(name);
      if (lp != lazy_params.end())
        arg.ref = s.b->add_parameter(lp->second.first, lp->second.second);
    }
    return arg;
  }

  AbstractValue info_of(const std::string& result, ComputationBuilder& b, int ref) const {
    auto it = inf.values.find(result);
    if (it != inf.values.end() && it->second.fully_typed()) return it->second;
    return AbstractValue::from_type(b.type_of(ref));
  }

  BuiltinArg operand_arg(Scope& s, const Operand& op) {
    switch (op.kind) {
      case Operand::Kind::Value:
        return lookup(s, op.name);
      case Operand::Kind::FnRef:
        return {AbstractValue::fnref(FnRefType{op.name, op.captures}), -1};
      case Operand::Kind::AllDims:
        return {AbstractValue::constant_of(TensorValue::scalar_s64(0), true), -1};
    }
    fail("bad operand");
  }

  /// Copies rematerializable bindings (constants, function refs) into a
  /// fresh scope for a nested computation; refs do not cross computations.
  void seed_nested_scope(const Scope& outer, Scope& inner) {
    for (const auto& [name, arg] : outer.env)
      if (is_const_deep(arg.info) || arg.info.kind == AbstractValue::Kind::FnRef)
        inner.env[name] = {arg.info, -1};
  }

  // -- use/def analysis over regions ---------------------------------------

  void collect_block_uses(int bi, UseCollector& uses, bool phi_latch_only,
                          const std::set<int>& loop_members) const {
    const BasicBlock& blk = fn.blocks[static_cast<size_t>(bi)];
    for (const Instruction& in : blk.instructions) {
      if (in.kind == Instruction::Kind::Phi) {
        for (const PhiIncoming& inc : in.incomings) {
          int from = fn.block_index(inc.block);
          if (phi_latch_only && !loop_members.count(from)) continue;
          uses.add(inc.value);
        }
        continue;
      }
      for (const Operand& op : in.args) uses.add_operand(op);
    }
    const Terminator& t = blk.term;
    if (t.kind == Terminator::Kind::Br) uses.add(t.cond);
    if (t.kind == Terminator::Kind::Return) uses.add(t.value);
  }

  void collect_seq_uses(const std::vector<Region>& seq, UseCollector& uses, bool phi_latch_only,
                        const std::set<int>& loop_members) const {
    std::vector<int> blocks;
    collect_region_blocks(seq, blocks);
    for (int b : blocks) collect_block_uses(b, uses, phi_latch_only, loop_members);
  }

  void collect_defs(const std::vector<int>& blocks, std::set<std::string>& defs) const {
    for (int b : blocks)
      for (const Instruction& in : fn.blocks[static_cast<size_t>(b)].instructions)
        defs.insert(in.result);
  }

  /// Live-in values of a region: used inside, defined outside, carried by
  /// value (constants are rematerialized instead).
  std::vector<std::string> live_ins(const UseCollector& uses, const std::set<std::string>& defs,
                                    Scope& outer) {
    std::vector<std::string> live;
    for (const std::string& name : uses.order) {
      if (defs.count(name)) continue;
      auto it = outer.env.find(name);
      if (it == outer.env.end()) continue;
      if (is_const_deep(it->second.info) || it->second.info.kind == AbstractValue::Kind::FnRef)
        continue;
      live.push_back(name);
    }
    return live;
  }

  // -- instruction lowering -------------------------------------------------

  void lower_instruction(Scope& s, const Instruction& in) {
    BuilderEmitter em(ctx, *s.b);
    BuiltinArg result;
    switch (in.kind) {
      case Instruction::Kind::Const:
        result = {AbstractValue::constant_of(in.const_value, in.all_marker), -1};
        break;
      case Instruction::Kind::Call: {
        std::vector<BuiltinArg> args;
        for (const Operand& op : in.args) args.push_back(operand_arg(s, op));
        int ref = lower_builtin_call(em, in.callee, args);
        result = {info_of(in.result, *s.b, ref), ref};
        break;
      }
      case Instruction::Kind::CallFn: {
        const FrontendFunction* callee = ctx.src->find(in.callee);
        if (!callee) fail("unknown function '@" + in.callee + "'");
        std::vector<BuiltinArg> args;
        for (const CapturedLiteral& c : in.captures)
          args.push_back({AbstractValue::constant_of(capture_value(c)), -1});
        for (const Operand& op : in.args) args.push_back(operand_arg(s, op));
        result = emit_inline_call(ctx, *s.b, *callee, args);
        break;
      }
      case Instruction::Kind::MakeTuple: {
        std::vector<int> refs;
        std::vector<AbstractValue> infos;
        for (const Operand& op : in.args) {
          BuiltinArg a = operand_arg(s, op);
          refs.push_back(materialize(em, a));
          infos.push_back(std::move(a.info));
        }
        result = {AbstractValue::tuple(std::move(infos)), s.b->add(HloOpConfig::tuple(), refs)};
        break;
      }
      case Instruction::Kind::GetElement: {
        BuiltinArg t = operand_arg(s, in.args.at(0));
        int ref =
            s.b->add(HloOpConfig::get_tuple_element(static_cast<int>(in.index)), {materialize(em, t)});
        if (t.info.kind == AbstractValue::Kind::Tuple && in.index >= 0 &&
            in.index < static_cast<int64_t>(t.info.elements.size()))
          result = {t.info.elements[static_cast<size_t>(in.index)], ref};
        else
          result = {info_of(in.result, *s.b, ref), ref};
        break;
      }
      case Instruction::Kind::Phi:
        fail("phi reached instruction lowering");  // handled by the caller
    }
    s.env[in.result] = std::move(result);
  }

  /// Lowers a block's instructions; returns the return-value ref when the
  /// block ends in `return`.
  std::optional<int> lower_block(Scope& s, int bi) {
    const BasicBlock& blk = fn.blocks[static_cast<size_t>(bi)];
    for (const Instruction& in : blk.instructions) {
      if (in.kind == Instruction::Kind::Phi) {
        if (s.env.count(in.result)) continue;  // bound by If/Loop outlining
        // A φ with one reachable incoming is a plain copy.
        std::vector<const PhiIncoming*> live;
        for (const PhiIncoming& inc : in.incomings) {
          int from = fn.block_index(inc.block);
          if (from >= 0 && (static_cast<size_t>(from) >= inf.block_reachable.size() ||
                            inf.block_reachable[static_cast<size_t>(from)]))
            live.push_back(&inc);
        }
        if (live.size() == 1)
          s.env[in.result] = lookup(s, live[0]->value);
        else
          fail("phi at '" + blk.label + "' was not captured by a structured region");
        continue;
      }
      lower_instruction(s, in);
    }
    if (blk.term.kind == Terminator::Kind::Return) {
      BuilderEmitter em(ctx, *s.b);
      return materialize(em, lookup(s, blk.term.value));
    }
    return std::nullopt;
  }

  std::optional<int> lower_seq(Scope& s, const std::vector<Region>& seq) {
    for (const Region& r : seq) {
      std::optional<int> ret;
      switch (r.kind) {
        case Region::Kind::Block:
          ret = lower_block(s, r.block);
          break;
        case Region::Kind::If:
          ret = lower_if(s, r);
          break;
        case Region::Kind::Loop:
          ret = lower_loop(s, r);
          break;
      }
      if (ret) return ret;
    }
    return std::nullopt;
  }

  // -- conditionals ----------------------------------------------------------

  const Instruction* phi_list(int block, std::vector<const Instruction*>& phis) const {
    for (const Instruction& in : fn.blocks[static_cast<size_t>(block)].instructions)
      if (in.kind == Instruction::Kind::Phi) phis.push_back(&in);
    return nullptr;
  }

  /// The φ incoming contributed by an arm (arm blocks, or the branch
  /// block itself for an empty arm).
  const PhiIncoming& arm_incoming(const Instruction& phi, const std::set<int>& arm_blocks,
                                  int cond_block, bool arm_empty) const {
    for (const PhiIncoming& inc : phi.incomings) {
      int from = fn.block_index(inc.block);
      if (arm_blocks.count(from)) return inc;
      if (arm_empty && from == cond_block) return inc;
    }
    fail("phi '%" + phi.result + "' has no incoming from a conditional arm");
  }

  std::optional<int> lower_if(Scope& s, const Region& r) {
    const Terminator& t = fn.blocks[static_cast<size_t>(r.block)].term;
    BuiltinArg cond = lookup(s, t.cond);
    std::vector<const Instruction*> phis;
    if (r.merge_block >= 0) phi_list(r.merge_block, phis);

    // Constant condition: only the taken arm exists after inference.
    if (cond.info.is_const() && cond.info.constant.type.elem == ElementType::Pred &&
        cond.info.constant.type.rank() == 0) {
      bool taken = cond.info.constant.pred[0] != 0;
      const std::vector<Region>& arm = taken ? r.then_region : r.else_region;
      std::optional<int> ret = lower_seq(s, arm);
      if (ret) {
        if (r.merge_block == -1) return ret;
        fail("return inside a conditional arm is unsupported");
      }
      if (r.merge_block == -1) fail("conditional arm fell through without a return");
      std::vector<int> arm_blocks_v;
      collect_region_blocks(arm, arm_blocks_v);
      std::set<int> arm_blocks(arm_blocks_v.begin(), arm_blocks_v.end());
      for (const Instruction* phi : phis) {
        const PhiIncoming& inc = arm_incoming(*phi, arm_blocks, r.block, arm.empty());
        s.env[phi->result] = lookup(s, inc.value);
      }
      return std::nullopt;
    }

    bool returns = r.merge_block == -1;
    BuilderEmitter em(ctx, *s.b);
    int cond_ref = materialize(em, cond);

    struct Arm {
      int comp = -1;
      int operand = -1;  // live-in tuple in the outer computation
    };
    auto build_arm = [&](const std::vector<Region>& arm) {
      UseCollector uses;
      std::set<int> no_loop;
      collect_seq_uses(arm, uses, false, no_loop);
      if (!returns) {
        std::vector<int> arm_blocks_v;
        collect_region_blocks(arm, arm_blocks_v);
        std::set<int> arm_blocks(arm_blocks_v.begin(), arm_blocks_v.end());
        for (const Instruction* phi : phis)
          uses.add(arm_incoming(*phi, arm_blocks, r.block, arm.empty()).value);
      }
      std::vector<int> arm_blocks_v;
      collect_region_blocks(arm, arm_blocks_v);
      std::set<std::string> defs;
      collect_defs(arm_blocks_v, defs);
      std::vector<std::string> live = live_ins(uses, defs, s);

      std::vector<int> live_refs;
      for (const std::string& name : live) live_refs.push_back(materialize(em, lookup(s, name)));
      int operand = s.b->add(HloOpConfig::tuple(), live_refs);

      ComputationBuilder ab(ctx.module, "c" + std::to_string(ctx.module.computations.size()));
      Scope as;
      as.b = &ab;
      seed_nested_scope(s, as);
      int param = ab.add_parameter(0, s.b->type_of(operand));
      for (size_t i = 0; i < live.size(); ++i) {
        int ref = ab.add(HloOpConfig::get_tuple_element(static_cast<int>(i)), {param});
        as.env[live[i]] = {lookup(s, live[i]).info, ref};
      }
      std::optional<int> ret = lower_seq(as, arm);
      int root;
      if (returns) {
        if (!ret) fail("conditional arm fell through without a return");
        root = *ret;
      } else {
        if (ret) fail("return inside a conditional arm is unsupported");
        std::set<int> arm_blocks(arm_blocks_v.begin(), arm_blocks_v.end());
        BuilderEmitter aem(ctx, ab);
        std::vector<int> contrib;
        for (const Instruction* phi : phis) {
          const PhiIncoming& inc = arm_incoming(*phi, arm_blocks, r.block, arm.empty());
          contrib.push_back(materialize(aem, lookup(as, inc.value)));
        }
        if (contrib.size() == 1)
          root = contrib[0];
        else
          root = ab.add(HloOpConfig::tuple(), contrib);
      }
      ab.set_root(root);
      return Arm{ab.comp_index(), operand};
    };

    Arm then_arm = build_arm(r.then_region);
    Arm else_arm = build_arm(r.else_region);
    int result = s.b->add(HloOpConfig::conditional(then_arm.comp, else_arm.comp),
                          {cond_ref, then_arm.operand, else_arm.operand});
    if (returns) return result;

    if (phis.size() == 1) {
      s.env[phis[0]->result] = {info_of(phis[0]->result, *s.b, result), result};
    } else {
      for (size_t i = 0; i < phis.size(); ++i) {
        int ref = s.b->add(HloOpConfig::get_tuple_element(static_cast<int>(i)), {result});
        s.env[phis[i]->result] = {info_of(phis[i]->result, *s.b, ref), ref};
      }
    }
    return std::nullopt;
  }

  // -- loops -----------------------------------------------------------------

  std::optional<int> lower_loop(Scope& s, const Region& r) {
    const BasicBlock& header = fn.blocks[static_cast<size_t>(r.block)];
    std::vector<int> member_blocks;
    member_blocks.push_back(r.block);
    collect_region_blocks(r.body, member_blocks);
    std::set<int> members(member_blocks.begin(), member_blocks.end());

    std::vector<const Instruction*> phis;
    std::vector<const Instruction*> header_rest;
    for (const Instruction& in : header.instructions) {
      if (in.kind == Instruction::Kind::Phi)
        phis.push_back(&in);
      else
        header_rest.push_back(&in);
    }

    auto incoming_of = [&](const Instruction& phi, bool inside) -> const PhiIncoming& {
      for (const PhiIncoming& inc : phi.incomings) {
        int from = fn.block_index(inc.block);
        if (members.count(from) == static_cast<size_t>(inside)) return inc;
      }
      fail("loop phi '%" + phi.result + "' lacks an " +
           (inside ? std::string("in-loop") : std::string("entry")) + " incoming");
    };

    // Uses inside the loop: header instructions (φ backedge values only),
    // body blocks, and the header branch condition.
    UseCollector uses;
    collect_block_uses(r.block, uses, true, members);
    collect_seq_uses(r.body, uses, true, members);
    std::set<std::string> defs;
    collect_defs(member_blocks, defs);
    std::vector<std::string> live = live_ins(uses, defs, s);

    // Iteration state: carried φs in source order, then live-ins.
    BuilderEmitter em(ctx, *s.b);
    std::vector<int> init_refs;
    for (const Instruction* phi : phis)
      init_refs.push_back(materialize(em, lookup(s, incoming_of(*phi, false).value)));
    for (const std::string& name : live) init_refs.push_back(materialize(em, lookup(s, name)));
    int init_tuple = s.b->add(HloOpConfig::tuple(), init_refs);
    ValueType state_type = s.b->type_of(init_tuple);

    auto open_state_scope = [&](ComputationBuilder& nb, Scope& ns) {
      ns.b = &nb;
      seed_nested_scope(s, ns);
      int param = nb.add_parameter(0, state_type);
      for (size_t i = 0; i < phis.size(); ++i) {
        int ref = nb.add(HloOpConfig::get_tuple_element(static_cast<int>(i)), {param});
        ns.env[phis[i]->result] = {info_of(phis[i]->result, nb, ref), ref};
      }
      for (size_t i = 0; i < live.size(); ++i) {
        int ref =
            nb.add(HloOpConfig::get_tuple_element(static_cast<int>(phis.size() + i)), {param});
        ns.env[live[i]] = {lookup(s, live[i]).info, ref};
      }
    };

    const Terminator& ht = header.term;

    // Condition computation: header straight-line code ending in the
    // branch condition, negated when the true edge leaves the loop.
    ComputationBuilder cb(ctx.module, "c" + std::to_string(ctx.module.computations.size()));
    {
      Scope cs;
      open_state_scope(cb, cs);
      for (const Instruction* in : header_rest) lower_instruction(cs, *in);
      BuilderEmitter cem(ctx, cb);
      int cond = materialize(cem, lookup(cs, ht.cond));
      if (!r.continue_on_true) {
        int f = cb.add(HloOpConfig::constant(TensorValue::scalar_pred(false)), {});
        int tr = cb.add(HloOpConfig::constant(TensorValue::scalar_pred(true)), {});
        cond = cb.add(HloOpConfig::elementwise(HloOpKind::Select), {cond, f, tr});
      }
      cb.set_root(cond);
    }

    // Body computation: header code, then the body regions, then the
    // next iteration state.
    ComputationBuilder bb(ctx.module, "c" + std::to_string(ctx.module.computations.size()));
    {
      Scope bs;
      open_state_scope(bb, bs);
      for (const Instruction* in : header_rest) lower_instruction(bs, *in);
      std::optional<int> ret = lower_seq(bs, r.body);
      if (ret) fail("return inside a loop body is unsupported");
      BuilderEmitter bem(ctx, bb);
      std::vector<int> next;
      for (const Instruction* phi : phis)
        next.push_back(materialize(bem, lookup(bs, incoming_of(*phi, true).value)));
      for (const std::string& name : live) next.push_back(materialize(bem, lookup(bs, name)));
      bb.set_root(bb.add(HloOpConfig::tuple(), next));
    }

    int w = s.b->add(HloOpConfig::while_loop(cb.comp_index(), bb.comp_index()), {init_tuple});
    for (size_t i = 0; i < phis.size(); ++i) {
      int ref = s.b->add(HloOpConfig::get_tuple_element(static_cast<int>(i)), {w});
      s.env[phis[i]->result] = {info_of(phis[i]->result, *s.b, ref), ref};
    }
    return std::nullopt;
  }
};

}  // namespace

HloModule compile(const FrontendModule& m, const FrontendFunction& fn,
                  const std::vector<ValueType>& arg_types) {
  if (arg_types.size() != fn.params.size())
    throw CompileError("function '" + fn.name + "' expects " + std::to_string(fn.params.size()) +
                       " arguments, got " + std::to_string(arg_types.size()));
  std::vector<AbstractValue> args;
  for (const ValueType& t : arg_types) args.push_back(AbstractValue::from_type(t));
  InferenceResult res = infer(m, fn, args);
  OffloadReport report = check_offloadable(m, fn, res);
  if (!report.offloadable) throw OffloadError(fn.name, std::move(report));

  std::vector<Region> regions = detect_regions(fn);

  HloEmitContext ctx;
  ctx.src = &m;
  ComputationBuilder b(ctx.module, fn.name);
  ctx.module.entry = b.comp_index();

  FunctionLowerer lowerer{ctx, fn, res};
  FunctionLowerer::Scope scope;
  scope.b = &b;
  scope.is_entry = true;
  for (size_t i = 0; i < fn.params.size(); ++i) {
    scope.env[fn.params[i].name] = {args[i], -1};
    lowerer.lazy_params[fn.params[i].name] = {static_cast<int>(i), arg_types[i]};
  }

  std::optional<int> ret = lowerer.lower_seq(scope, regions);
  if (!ret) throw CompileError("function '" + fn.name + "' does not return");

  // Parameters are created on first use; materialize any unused ones so
  // the parameter list stays dense.
  for (const auto& [name, ip] : lowerer.lazy_params)
    b.add_parameter(ip.first, ip.second);

  b.set_root(*ret);
  return std::move(ctx.module);
}

HloModule compile(const FrontendModule& m, const std::string& entry,
                  const std::vector<ValueType>& arg_types) {
  const FrontendFunction* fn = m.find(entry);
  if (!fn) throw CompileError("unknown function '@" + entry + "'");
  return compile(m, *fn, arg_types);
}

}  // namespace mhlc
