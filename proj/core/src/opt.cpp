// SPDX-License-Identifier: Apache-2.0

#include "mhlc/opt.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mhlc/interp.hpp"

namespace mhlc {

namespace {

std::vector<int*> comp_ref_slots(HloOpConfig& c) {
  std::vector<int*> slots;
  switch (c.kind) {
    case HloOpKind::Map:
    case HloOpKind::Reduce:
      slots.push_back(&c.to_apply);
      break;
    case HloOpKind::While:
      slots.push_back(&c.cond_comp);
      slots.push_back(&c.body_comp);
      break;
    case HloOpKind::Conditional:
      slots.push_back(&c.true_comp);
      slots.push_back(&c.false_comp);
      break;
    default:
      break;
  }
  return slots;
}

/// Drops computations not reachable from the entry and renumbers
/// references.
void remove_unreferenced_computations(HloModule& m) {
  std::vector<bool> live(m.computations.size(), false);
  std::vector<int> work{m.entry};
  live[static_cast<size_t>(m.entry)] = true;
  while (!work.empty()) {
    int c = work.back();
    work.pop_back();
    for (HloInstruction& in : m.computations[static_cast<size_t>(c)].instructions)
      for (int* slot : comp_ref_slots(in.config))
        if (*slot >= 0 && !live[static_cast<size_t>(*slot)]) {
          live[static_cast<size_t>(*slot)] = true;
          work.push_back(*slot);
        }
  }
  std::vector<int> remap(m.computations.size(), -1);
  std::vector<HloComputation> kept;
  for (size_t i = 0; i < m.computations.size(); ++i) {
    if (!live[i]) continue;
    remap[i] = static_cast<int>(kept.size());
    kept.push_back(std::move(m.computations[i]));
  }
  for (HloComputation& c : kept)
    for (HloInstruction& in : c.instructions)
      for (int* slot : comp_ref_slots(in.config))
        if (*slot >= 0) *slot = remap[static_cast<size_t>(*slot)];
  m.computations = std::move(kept);
  m.entry = remap[static_cast<size_t>(m.entry)];
}

std::vector<bool> live_from_root(const HloComputation& c) {
  std::vector<bool> live(c.instructions.size(), false);
  std::vector<int> work{c.root};
  if (c.root >= 0) live[static_cast<size_t>(c.root)] = true;
  while (!work.empty()) {
    int i = work.back();
    work.pop_back();
    for (int op : c.instructions[static_cast<size_t>(i)].operands)
      if (!live[static_cast<size_t>(op)]) {
        live[static_cast<size_t>(op)] = true;
        work.push_back(op);
      }
  }
  return live;
}

/// Removes instructions whose keep flag is false, renumbering operands.
void compact(HloComputation& c, const std::vector<bool>& keep) {
  std::vector<int> remap(c.instructions.size(), -1);
  std::vector<HloInstruction> kept;
  for (size_t i = 0; i < c.instructions.size(); ++i) {
    if (!keep[i]) continue;
    remap[i] = static_cast<int>(kept.size());
    kept.push_back(std::move(c.instructions[i]));
  }
  for (HloInstruction& in : kept)
    for (int& op : in.operands) op = remap[static_cast<size_t>(op)];
  c.instructions = std::move(kept);
  c.root = remap[static_cast<size_t>(c.root)];
}

}  // namespace

HloModule fold_constants(HloModule m) {
  RngState rng(0);
  EvalContext ctx{&m, &rng};
  for (HloComputation& c : m.computations) {
    for (HloInstruction& in : c.instructions) {
      if (in.config.kind == HloOpKind::Constant || in.config.kind == HloOpKind::Parameter ||
          in.config.kind == HloOpKind::Rng)
        continue;
      bool all_const = true;
      std::vector<Value> args;
      for (int op : in.operands) {
        const HloInstruction& d = c.instructions[static_cast<size_t>(op)];
        if (d.config.kind != HloOpKind::Constant) {
          all_const = false;
          break;
        }
        args.emplace_back(d.config.literal);
      }
      if (!all_const) continue;
      try {
        Value v = evaluate_op(ctx, in.config, args);
        if (!v.is_tensor()) continue;  // no literal form for tuples
        in.config = HloOpConfig::constant(v.tensor());
        in.operands.clear();
      } catch (const RuntimeError&) {
        // Leave traps (e.g. integer division by zero) to runtime.
      }
    }
  }
  return m;
}

HloModule simplify_tuples(HloModule m) {
  for (HloComputation& c : m.computations) {
    // Forward through get-tuple-element(tuple(...)) chains.
    std::function<int(int)> resolve = [&](int i) -> int {
      const HloInstruction& in = c.instructions[static_cast<size_t>(i)];
      if (in.config.kind != HloOpKind::GetTupleElement) return i;
      const HloInstruction& src = c.instructions[static_cast<size_t>(in.operands[0])];
      if (src.config.kind != HloOpKind::Tuple) return i;
      return resolve(src.operands[static_cast<size_t>(in.config.index)]);
    };
    for (HloInstruction& in : c.instructions)
      for (int& op : in.operands) op = resolve(op);
    c.root = resolve(c.root);
    // Drop tuple plumbing that became dead.
    std::vector<bool> live = live_from_root(c);
    std::vector<bool> keep(c.instructions.size());
    for (size_t i = 0; i < c.instructions.size(); ++i) {
      HloOpKind k = c.instructions[i].config.kind;
      bool droppable = k == HloOpKind::Tuple || k == HloOpKind::GetTupleElement;
      keep[i] = live[i] || !droppable;
    }
    compact(c, keep);
  }
  return m;
}

HloModule inline_maps(HloModule m) {
  auto inlinable = [&](int comp) {
    for (const HloInstruction& in : m.computations[static_cast<size_t>(comp)].instructions) {
      HloOpKind k = in.config.kind;
      if (k != HloOpKind::Parameter && k != HloOpKind::Constant && !is_elementwise(k))
        return false;
    }
    return true;
  };

  for (size_t ci = 0; ci < m.computations.size(); ++ci) {
    HloComputation& c = m.computations[ci];
    bool any = false;
    for (const HloInstruction& in : c.instructions)
      if (in.config.kind == HloOpKind::Map && inlinable(in.config.to_apply)) any = true;
    if (!any) continue;

    std::set<std::string> names;
    for (const HloInstruction& in : c.instructions) names.insert(in.name);
    int name_counter = static_cast<int>(c.instructions.size());
    auto fresh_name = [&](HloOpKind k) {
      std::string n;
      do {
        n = "c" + std::to_string(ci) + kind_mnemonic(k) + std::to_string(name_counter++);
      } while (!names.insert(n).second);
      return n;
    };

    std::vector<HloInstruction> out;
    std::vector<int> remap(c.instructions.size(), -1);
    auto append = [&](HloOpConfig config, std::vector<int> operands) {
      std::vector<ValueType> ts;
      for (int op : operands) ts.push_back(out[static_cast<size_t>(op)].type);
      HloInstruction in;
      in.type = shape_infer(m, config, ts);
      in.name = fresh_name(config.kind);
      in.config = std::move(config);
      in.operands = std::move(operands);
      out.push_back(std::move(in));
      return static_cast<int>(out.size()) - 1;
    };

    for (size_t i = 0; i < c.instructions.size(); ++i) {
      HloInstruction in = c.instructions[i];
      if (in.config.kind == HloOpKind::Map && inlinable(in.config.to_apply)) {
        const HloComputation& cb = m.computations[static_cast<size_t>(in.config.to_apply)];
        // Copy: `out` may reallocate while the callback body is appended.
        const std::vector<int64_t> shape =
            out[static_cast<size_t>(remap[static_cast<size_t>(in.operands[0])])]
                .type.tensor.shape;
        std::vector<int> cb_map(cb.instructions.size(), -1);
        for (size_t j = 0; j < cb.instructions.size(); ++j) {
          const HloInstruction& cin = cb.instructions[j];
          if (cin.config.kind == HloOpKind::Parameter) {
            cb_map[j] = remap[static_cast<size_t>(
                in.operands[static_cast<size_t>(cin.config.index)])];
          } else if (cin.config.kind == HloOpKind::Constant) {
            // Emit the already-broadcast literal so a prior constant
            // fold could not have produced anything simpler.
            HloOpConfig cfg = cin.config;
            if (!shape.empty()) {
              EvalContext ectx{&m, nullptr};
              Value v = evaluate_op(ectx, HloOpConfig::broadcast(shape, {}),
                                    {Value(cin.config.literal)});
              cfg = HloOpConfig::constant(v.tensor());
            }
            cb_map[j] = append(cfg, {});
          } else {
            std::vector<int> ops;
            for (int op : cin.operands) ops.push_back(cb_map[static_cast<size_t>(op)]);
            cb_map[j] = append(cin.config, std::move(ops));
          }
        }
        remap[i] = cb_map[static_cast<size_t>(cb.root)];
        continue;
      }
      for (int& op : in.operands) op = remap[static_cast<size_t>(op)];
      out.push_back(std::move(in));
      remap[i] = static_cast<int>(out.size()) - 1;
    }
    c.instructions = std::move(out);
    c.root = remap[static_cast<size_t>(c.root)];
  }
  remove_unreferenced_computations(m);
  return m;
}

HloModule dce(HloModule m) {
  for (HloComputation& c : m.computations) {
    std::vector<bool> live = live_from_root(c);
    for (size_t i = 0; i < c.instructions.size(); ++i)
      if (c.instructions[i].config.kind == HloOpKind::Parameter) live[i] = true;
    compact(c, live);
  }
  remove_unreferenced_computations(m);
  return m;
}

HloModule dedup_computations(HloModule m) {
  size_t n = m.computations.size();
  std::vector<int> rep(n);
  for (size_t i = 0; i < n; ++i) rep[i] = static_cast<int>(i);

  auto equal = [&](int a, int b) {
    const HloComputation& ca = m.computations[static_cast<size_t>(a)];
    const HloComputation& cb = m.computations[static_cast<size_t>(b)];
    if (ca.instructions.size() != cb.instructions.size() || ca.root != cb.root) return false;
    for (size_t i = 0; i < ca.instructions.size(); ++i) {
      const HloInstruction& x = ca.instructions[i];
      const HloInstruction& y = cb.instructions[i];
      if (x.operands != y.operands || !(x.type == y.type)) return false;
      HloOpConfig cx = x.config, cy = y.config;
      for (int* slot : comp_ref_slots(cx))
        if (*slot >= 0) *slot = rep[static_cast<size_t>(*slot)];
      for (int* slot : comp_ref_slots(cy))
        if (*slot >= 0) *slot = rep[static_cast<size_t>(*slot)];
      if (cx.kind != cy.kind || cx.index != cy.index || !(cx.param_type == cy.param_type) ||
          !(cx.literal == cy.literal) || !(cx.dnums == cy.dnums) ||
          cx.dimensions != cy.dimensions || cx.permutation != cy.permutation ||
          cx.shape != cy.shape || cx.elem != cy.elem || cx.to_apply != cy.to_apply ||
          cx.cond_comp != cy.cond_comp || cx.body_comp != cy.body_comp ||
          cx.true_comp != cy.true_comp || cx.false_comp != cy.false_comp)
        return false;
    }
    return true;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t j = 0; j < n; ++j) {
      if (rep[j] != static_cast<int>(j) || static_cast<int>(j) == m.entry) continue;
      for (size_t i = 0; i < j; ++i) {
        if (rep[i] != static_cast<int>(i)) continue;
        if (equal(static_cast<int>(i), static_cast<int>(j))) {
          rep[j] = static_cast<int>(i);
          changed = true;
          break;
        }
      }
    }
  }
  for (HloComputation& c : m.computations)
    for (HloInstruction& in : c.instructions)
      for (int* slot : comp_ref_slots(in.config))
        if (*slot >= 0) *slot = rep[static_cast<size_t>(*slot)];
  remove_unreferenced_computations(m);
  return m;
}

const std::vector<std::string>& default_passes() {
  static const std::vector<std::string> order = {"fold_constants", "simplify_tuples",
                                                 "inline_maps", "dce", "dedup_computations"};
  return order;
}

HloModule run_pipeline(HloModule m, const std::vector<std::string>& passes) {
  for (const std::string& p : passes) {
    if (p == "fold_constants")
      m = fold_constants(std::move(m));
    else if (p == "simplify_tuples")
      m = simplify_tuples(std::move(m));
    else if (p == "inline_maps")
      m = inline_maps(std::move(m));
    else if (p == "dce")
      m = dce(std::move(m));
    else if (p == "dedup_computations")
      m = dedup_computations(std::move(m));
    else
      throw CompileError("unknown pass '" + p + "'");
  }
  return m;
}

CountReport count_instructions(const HloModule& m) {
  std::map<std::string, KindCount> by_kind;
  CountReport r;
  for (size_t ci = 0; ci < m.computations.size(); ++ci) {
    bool entry = static_cast<int>(ci) == m.entry;
    for (const HloInstruction& in : m.computations[ci].instructions) {
      KindCount& k = by_kind[kind_name(in.config.kind)];
      k.kind = kind_name(in.config.kind);
      ++k.total;
      ++r.grand_total;
      if (entry) {
        ++k.entry;
        ++r.entry_total;
      }
    }
  }
  for (auto& [name, k] : by_kind) r.kinds.push_back(k);
  return r;
}

std::string to_text(const CountReport& r) {
  size_t width = std::string("total").size();
  for (const KindCount& k : r.kinds) width = std::max(width, k.kind.size());
  std::ostringstream os;
  os << std::string(width, ' ') << "  entry  total\n";
  auto cell = [](int64_t v, size_t w) {
    std::string s = std::to_string(v);
    return s.size() < w ? std::string(w - s.size(), ' ') + s : s;
  };
  auto row = [&](const std::string& name, int64_t e, int64_t t) {
    os << name << std::string(width - name.size(), ' ') << "  " << cell(e, 5) << "  "
       << cell(t, 5) << '\n';
  };
  for (const KindCount& k : r.kinds) row(k.kind, k.entry, k.total);
  row("total", r.entry_total, r.grand_total);
  return os.str();
}

}  // namespace mhlc
