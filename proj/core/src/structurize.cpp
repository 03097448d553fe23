// SPDX-License-Identifier: Apache-2.0

#include "mhlc/structurize.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mhlc {

namespace {

struct Structurizer {
  const FrontendFunction& fn;
  std::vector<std::vector<int>> succ;

  explicit Structurizer(const FrontendFunction& f) : fn(f) {
    for (int b = 0; b < static_cast<int>(fn.blocks.size()); ++b)
      succ.push_back(successors(fn, b));
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw CompileError("control flow in '" + fn.name + "': " + msg);
  }

  /// SCC component ids of the subgraph induced by `scope` (Tarjan).
  std::map<int, int> scc_ids(const std::set<int>& scope) const {
    std::map<int, int> comp;
    std::map<int, int> index, low;
    std::vector<int> stack;
    std::set<int> on_stack;
    int next_index = 0, next_comp = 0;
    std::function<void(int)> strongconnect = [&](int v) {
      index[v] = low[v] = next_index++;
      stack.push_back(v);
      on_stack.insert(v);
      for (int w : succ[static_cast<size_t>(v)]) {
        if (!scope.count(w)) continue;
        if (!index.count(w)) {
          strongconnect(w);
          low[v] = std::min(low[v], low[w]);
        } else if (on_stack.count(w)) {
          low[v] = std::min(low[v], index[w]);
        }
      }
      if (low[v] == index[v]) {
        int c = next_comp++;
        while (true) {
          int w = stack.back();
          stack.pop_back();
          on_stack.erase(w);
          comp[w] = c;
          if (w == v) break;
        }
      }
    };
    for (int v : scope)
      if (!index.count(v)) strongconnect(v);
    return comp;
  }

  bool has_self_edge(int b) const {
    return std::count(succ[static_cast<size_t>(b)].begin(), succ[static_cast<size_t>(b)].end(), b);
  }

  /// Immediate postdominator of `c` within `scope`, where edges leaving
  /// the scope (or to `stop`) and returns act as exits. -1 when the arms
  /// only rejoin at the exit.
  int ipostdom(int c, int stop, const std::set<int>& scope) const {
    std::map<int, std::set<int>> pdom;
    std::set<int> universe(scope.begin(), scope.end());
    for (int b : scope) pdom[b] = universe;
    bool changed = true;
    while (changed) {
      changed = false;
      for (int b : scope) {
        std::set<int> inter;
        bool first = true;
        bool exits = fn.blocks[static_cast<size_t>(b)].term.kind == Terminator::Kind::Return;
        for (int s : succ[static_cast<size_t>(b)]) {
          if (!scope.count(s) || s == stop) {
            exits = true;
            continue;
          }
          if (first) {
            inter = pdom.at(s);
            first = false;
          } else {
            std::set<int> next;
            std::set_intersection(inter.begin(), inter.end(), pdom.at(s).begin(),
                                  pdom.at(s).end(), std::inserter(next, next.begin()));
            inter = std::move(next);
          }
        }
        if (exits) inter.clear();
        inter.insert(b);
        if (inter != pdom[b]) {
          pdom[b] = std::move(inter);
          changed = true;
        }
      }
    }
    const std::set<int>& pc = pdom.at(c);
    int best = -1;
    size_t best_size = 0;
    for (int p : pc) {
      if (p == c) continue;
      if (pdom.at(p).size() >= best_size) {
        best_size = pdom.at(p).size();
        best = p;
      }
    }
    return best;
  }

  std::vector<Region> build_seq(int entry, int stop, const std::set<int>& scope) {
    std::vector<Region> seq;
    int cur = entry;
    std::map<int, int> comp = scc_ids(scope);
    while (cur >= 0 && cur != stop) {
      if (!scope.count(cur)) fail("irreducible control flow (branch into a structured region)");
      std::set<int> members;
      for (auto& [b, c] : comp)
        if (c == comp.at(cur)) members.insert(b);
      bool is_loop = members.size() > 1 || has_self_edge(cur);
      if (is_loop) {
        seq.push_back(build_loop(cur, members, scope));
        cur = seq.back().exit_block;
        continue;
      }
      const Terminator& t = fn.blocks[static_cast<size_t>(cur)].term;
      Region blk;
      blk.kind = Region::Kind::Block;
      blk.block = cur;
      seq.push_back(std::move(blk));
      switch (t.kind) {
        case Terminator::Kind::Return:
          cur = -1;
          break;
        case Terminator::Kind::Jmp:
          cur = fn.block_index(t.target_true);
          break;
        case Terminator::Kind::Br: {
          int bt = fn.block_index(t.target_true);
          int bf = fn.block_index(t.target_false);
          int merge = ipostdom(cur, stop, scope);
          Region r;
          r.kind = Region::Kind::If;
          r.block = cur;
          r.merge_block = merge;
          int arm_stop = merge >= 0 ? merge : stop;
          if (bt != merge) r.then_region = build_seq(bt, arm_stop, scope);
          if (bf != merge) r.else_region = build_seq(bf, arm_stop, scope);
          seq.push_back(std::move(r));
          cur = merge;
          break;
        }
      }
    }
    return seq;
  }

  Region build_loop(int entry, const std::set<int>& members, const std::set<int>& scope) {
    // The single entry from outside must be the header we arrived at.
    std::vector<std::vector<int>> preds = predecessors(fn);
    for (int b : members)
      for (int p : preds[static_cast<size_t>(b)]) {
        if (!scope.count(p)) continue;
        if (!members.count(p) && b != entry)
          fail("irreducible control flow (loop with multiple entries)");
      }
    int backedges = 0;
    for (int p : preds[static_cast<size_t>(entry)])
      if (members.count(p)) ++backedges;
    if (backedges != 1) fail("loop must have exactly one backedge");

    const Terminator& ht = fn.blocks[static_cast<size_t>(entry)].term;
    if (ht.kind != Terminator::Kind::Br) fail("loop exit must be the header branch");
    int bt = fn.block_index(ht.target_true);
    int bf = fn.block_index(ht.target_false);
    bool true_inside = members.count(bt) > 0;
    bool false_inside = members.count(bf) > 0;
    if (true_inside == false_inside) fail("loop header must branch once into and once out of the loop");

    // All other loop blocks must stay inside.
    for (int b : members) {
      if (b == entry) continue;
      for (int s : succ[static_cast<size_t>(b)])
        if (!members.count(s)) fail("loop has an exit away from the header (multiple exits)");
    }

    Region r;
    r.kind = Region::Kind::Loop;
    r.block = entry;
    r.continue_on_true = true_inside;
    r.exit_block = true_inside ? bf : bt;
    int body_entry = true_inside ? bt : bf;
    std::set<int> body_scope = members;
    body_scope.erase(entry);
    if (body_entry != entry) r.body = build_seq(body_entry, entry, body_scope);
    return r;
  }
};

void collect_blocks(const std::vector<Region>& seq, std::vector<int>& out) {
  for (const Region& r : seq) {
    if (r.block >= 0) out.push_back(r.block);
    collect_blocks(r.then_region, out);
    collect_blocks(r.else_region, out);
    collect_blocks(r.body, out);
  }
}

void print_seq(std::ostringstream& os, const FrontendFunction& fn, const std::vector<Region>& seq,
               int indent) {
  std::string pad(static_cast<size_t>(indent) * 2, ' ');
  for (const Region& r : seq) {
    switch (r.kind) {
      case Region::Kind::Block:
        os << pad << "block " << fn.blocks[static_cast<size_t>(r.block)].label << '\n';
        break;
      case Region::Kind::If:
        os << pad << "if " << fn.blocks[static_cast<size_t>(r.block)].label << " merge "
           << (r.merge_block >= 0 ? fn.blocks[static_cast<size_t>(r.merge_block)].label
                                  : std::string("<return>"))
           << '\n';
        os << pad << "then:\n";
        print_seq(os, fn, r.then_region, indent + 1);
        os << pad << "else:\n";
        print_seq(os, fn, r.else_region, indent + 1);
        break;
      case Region::Kind::Loop:
        os << pad << "loop " << fn.blocks[static_cast<size_t>(r.block)].label << '\n';
        print_seq(os, fn, r.body, indent + 1);
        break;
    }
  }
}

}  // namespace

void collect_region_blocks(const std::vector<Region>& seq, std::vector<int>& out) {
  collect_blocks(seq, out);
}

std::vector<Region> detect_regions(const FrontendFunction& fn) {
  Structurizer s(fn);
  std::vector<bool> reach = reachable_blocks(fn);
  std::set<int> scope;
  for (int b = 0; b < static_cast<int>(fn.blocks.size()); ++b)
    if (reach[static_cast<size_t>(b)]) scope.insert(b);
  if (scope.empty()) throw CompileError("function '" + fn.name + "' has no blocks");
  return s.build_seq(0, -2, scope);
}

std::string print_regions(const FrontendFunction& fn, const std::vector<Region>& seq) {
  std::ostringstream os;
  print_seq(os, fn, seq, 0);
  return os.str();
}

}  // namespace mhlc
