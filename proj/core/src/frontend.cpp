// SPDX-License-Identifier: Apache-2.0

#include "mhlc/frontend.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

namespace mhlc {

namespace {

struct Lexer {
  const std::string& text;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit Lexer(const std::string& t) : text(t) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, col, msg); }

  void advance() {
    if (pos < text.size()) {
      if (text[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++pos;
    }
  }

  void skip_ws() {
    for (;;) {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) advance();
      if (pos < text.size() && text[pos] == ';') {
        while (pos < text.size() && text[pos] != '\n') advance();
        continue;
      }
      break;
    }
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  bool try_punct(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      advance();
      return true;
    }
    return false;
  }

  void expect_punct(char c) {
    if (!try_punct(c)) fail(std::string("expected '") + c + "'");
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  std::string ident(const char* what) {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && ident_char(text[pos])) advance();
    if (pos == start) fail(std::string("expected ") + what);
    return text.substr(start, pos - start);
  }

  bool try_keyword(const std::string& kw) {
    skip_ws();
    size_t save_pos = pos;
    int save_line = line, save_col = col;
    size_t start = pos;
    while (pos < text.size() && ident_char(text[pos])) advance();
    if (text.substr(start, pos - start) == kw) return true;
    pos = save_pos;
    line = save_line;
    col = save_col;
    return false;
  }

  void expect_keyword(const std::string& kw) {
    if (!try_keyword(kw)) fail("expected '" + kw + "'");
  }

  /// Signed number token: digits with optional fraction/exponent, or
  /// inf/nan spellings.
  std::string number() {
    skip_ws();
    size_t start = pos;
    if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) advance();
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
            ((text[pos] == '-' || text[pos] == '+') && pos > start &&
             (text[pos - 1] == 'e' || text[pos - 1] == 'E'))))
      advance();
    if (pos == start) fail("expected number");
    return text.substr(start, pos - start);
  }

  SourcePos here() {
    skip_ws();
    return {line, col};
  }
};

bool looks_float(const std::string& tok) {
  return tok.find('.') != std::string::npos || tok.find('e') != std::string::npos ||
         tok.find('E') != std::string::npos || tok.find("inf") != std::string::npos ||
         tok.find("nan") != std::string::npos;
}

float parse_f32(Lexer& lx, const std::string& tok) {
  if (tok == "inf") return INFINITY;
  if (tok == "-inf") return -INFINITY;
  if (tok == "nan") return NAN;
  char* end = nullptr;
  float v = std::strtof(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) lx.fail("bad f32 literal '" + tok + "'");
  return v;
}

int64_t parse_s64(Lexer& lx, const std::string& tok) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) lx.fail("bad s64 literal '" + tok + "'");
  return v;
}

ValueType parse_type(Lexer& lx) {
  if (lx.try_keyword("tuple")) {
    lx.expect_punct('(');
    std::vector<ValueType> elems;
    if (!lx.try_punct(')')) {
      do {
        elems.push_back(parse_type(lx));
      } while (lx.try_punct(','));
      lx.expect_punct(')');
    }
    return ValueType::make_tuple(std::move(elems));
  }
  std::string e = lx.ident("element type");
  ElementType elem;
  if (e == "f32")
    elem = ElementType::F32;
  else if (e == "s64")
    elem = ElementType::S64;
  else if (e == "pred")
    elem = ElementType::Pred;
  else
    lx.fail("unknown type '" + e + "'");
  lx.expect_punct('[');
  std::vector<int64_t> shape;
  if (!lx.try_punct(']')) {
    do {
      std::string d = lx.ident("dimension");
      shape.push_back(parse_s64(lx, d));
      if (shape.back() < 0) lx.fail("negative dimension");
    } while (lx.try_punct(','));
    lx.expect_punct(']');
  }
  return ValueType::make_tensor(elem, std::move(shape));
}

void parse_dense(Lexer& lx, TensorValue& out, int dim, int64_t& flat) {
  const TensorType& t = out.type;
  if (dim == t.rank()) {
    std::string tok = lx.try_keyword("true") ? "true" : lx.try_keyword("false") ? "false" : lx.number();
    switch (t.elem) {
      case ElementType::F32:
        out.f32[static_cast<size_t>(flat)] = parse_f32(lx, tok);
        break;
      case ElementType::S64:
        out.s64[static_cast<size_t>(flat)] = parse_s64(lx, tok);
        break;
      case ElementType::Pred:
        if (tok == "true")
          out.pred[static_cast<size_t>(flat)] = 1;
        else if (tok == "false")
          out.pred[static_cast<size_t>(flat)] = 0;
        else
          lx.fail("bad pred literal '" + tok + "'");
        break;
    }
    ++flat;
    return;
  }
  lx.expect_punct('[');
  for (int64_t i = 0; i < t.shape[static_cast<size_t>(dim)]; ++i) {
    if (i) lx.expect_punct(',');
    parse_dense(lx, out, dim + 1, flat);
  }
  lx.expect_punct(']');
}

TensorValue parse_literal(Lexer& lx, const TensorType& type) {
  TensorValue v = TensorValue::zeros(type);
  int64_t flat = 0;
  parse_dense(lx, v, 0, flat);
  return v;
}

CapturedLiteral parse_capture(Lexer& lx) {
  CapturedLiteral c;
  if (lx.try_keyword("true")) {
    c.elem = ElementType::Pred;
    c.i = 1;
    return c;
  }
  if (lx.try_keyword("false")) {
    c.elem = ElementType::Pred;
    c.i = 0;
    return c;
  }
  std::string tok = lx.number();
  if (looks_float(tok)) {
    c.elem = ElementType::F32;
    c.f = parse_f32(lx, tok);
  } else {
    c.elem = ElementType::S64;
    c.i = parse_s64(lx, tok);
  }
  return c;
}

std::vector<CapturedLiteral> parse_capture_list(Lexer& lx) {
  std::vector<CapturedLiteral> caps;
  if (lx.try_punct('[')) {
    if (!lx.try_punct(']')) {
      do {
        caps.push_back(parse_capture(lx));
      } while (lx.try_punct(','));
      lx.expect_punct(']');
    }
  }
  return caps;
}

std::string parse_value_name(Lexer& lx) {
  lx.expect_punct('%');
  return lx.ident("value name");
}

Operand parse_operand(Lexer& lx) {
  if (lx.try_punct('%')) return Operand::value(lx.ident("value name"));
  if (lx.try_punct('@')) {
    std::string name = lx.ident("function name");
    return Operand::fnref(std::move(name), parse_capture_list(lx));
  }
  if (lx.try_keyword("all")) return Operand::all_dims();
  lx.fail("expected operand");
}

std::string parse_block_ref(Lexer& lx) {
  std::string b = lx.ident("block label");
  if (b.rfind("bb", 0) != 0) lx.fail("block labels start with 'bb'");
  return b;
}

Instruction parse_instruction(Lexer& lx, const std::string& result, SourcePos pos) {
  Instruction in;
  in.result = result;
  in.pos = pos;
  if (lx.try_keyword("const")) {
    in.kind = Instruction::Kind::Const;
    in.const_type = parse_type(lx);
    if (!in.const_type.is_tensor()) lx.fail("const literals must be tensors");
    if (lx.try_keyword("all")) {
      if (in.const_type.tensor.elem != ElementType::S64) lx.fail("'all' marker must have s64 type");
      in.all_marker = true;
      in.const_value = TensorValue::zeros(in.const_type.tensor);
    } else {
      in.const_value = parse_literal(lx, in.const_type.tensor);
    }
    return in;
  }
  if (lx.try_keyword("call_fn")) {
    in.kind = Instruction::Kind::CallFn;
    lx.expect_punct('@');
    in.callee = lx.ident("function name");
    in.captures = parse_capture_list(lx);
    lx.expect_punct('(');
    if (!lx.try_punct(')')) {
      do {
        in.args.push_back(parse_operand(lx));
      } while (lx.try_punct(','));
      lx.expect_punct(')');
    }
    return in;
  }
  if (lx.try_keyword("call")) {
    in.kind = Instruction::Kind::Call;
    in.callee = lx.ident("builtin name");
    lx.expect_punct('(');
    if (!lx.try_punct(')')) {
      do {
        in.args.push_back(parse_operand(lx));
      } while (lx.try_punct(','));
      lx.expect_punct(')');
    }
    return in;
  }
  if (lx.try_keyword("tuple")) {
    in.kind = Instruction::Kind::MakeTuple;
    lx.expect_punct('(');
    if (!lx.try_punct(')')) {
      do {
        in.args.push_back(parse_operand(lx));
      } while (lx.try_punct(','));
      lx.expect_punct(')');
    }
    return in;
  }
  if (lx.try_keyword("get")) {
    in.kind = Instruction::Kind::GetElement;
    in.args.push_back(Operand::value(parse_value_name(lx)));
    lx.expect_punct(',');
    in.index = parse_s64(lx, lx.ident("index"));
    if (in.index < 0) lx.fail("get index must be non-negative");
    return in;
  }
  if (lx.try_keyword("phi")) {
    in.kind = Instruction::Kind::Phi;
    lx.expect_punct('[');
    do {
      PhiIncoming inc;
      inc.block = parse_block_ref(lx);
      lx.expect_punct(':');
      inc.value = parse_value_name(lx);
      in.incomings.push_back(std::move(inc));
    } while (lx.try_punct(','));
    lx.expect_punct(']');
    return in;
  }
  lx.fail("expected instruction kind");
}

FrontendFunction parse_function(Lexer& lx) {
  FrontendFunction fn;
  fn.pos = lx.here();
  lx.expect_keyword("func");
  lx.expect_punct('@');
  fn.name = lx.ident("function name");
  lx.expect_punct('(');
  std::set<std::string> names;
  if (!lx.try_punct(')')) {
    do {
      Param p;
      p.name = parse_value_name(lx);
      if (!names.insert(p.name).second) lx.fail("duplicate value name '%" + p.name + "'");
      if (lx.try_punct(':')) p.type = parse_type(lx);
      fn.params.push_back(std::move(p));
    } while (lx.try_punct(','));
    lx.expect_punct(')');
  }
  lx.expect_punct('{');
  std::set<std::string> labels;
  while (!lx.try_punct('}')) {
    BasicBlock bb;
    bb.label = parse_block_ref(lx);
    lx.expect_punct(':');
    if (!labels.insert(bb.label).second) lx.fail("duplicate block label '" + bb.label + "'");
    bool terminated = false;
    for (;;) {
      SourcePos pos = lx.here();
      if (lx.try_keyword("br")) {
        bb.term = {Terminator::Kind::Br, pos, parse_value_name(lx), "", "", ""};
        lx.expect_punct(',');
        bb.term.target_true = parse_block_ref(lx);
        lx.expect_punct(',');
        bb.term.target_false = parse_block_ref(lx);
        terminated = true;
        break;
      }
      if (lx.try_keyword("jmp")) {
        bb.term = {Terminator::Kind::Jmp, pos, "", parse_block_ref(lx), "", ""};
        terminated = true;
        break;
      }
      if (lx.try_keyword("return")) {
        bb.term = {Terminator::Kind::Return, pos, "", "", "", parse_value_name(lx)};
        terminated = true;
        break;
      }
      if (lx.peek() == '}' || lx.eof()) break;
      // Next block label ends this one without a terminator.
      {
        size_t save_pos = lx.pos;
        int save_line = lx.line, save_col = lx.col;
        if (lx.peek() != '%') {
          std::string maybe = lx.ident("instruction");
          bool is_label = maybe.rfind("bb", 0) == 0 && lx.try_punct(':');
          lx.pos = save_pos;
          lx.line = save_line;
          lx.col = save_col;
          if (is_label) break;
          lx.fail("expected instruction or terminator");
        }
      }
      std::string result = parse_value_name(lx);
      if (!names.insert(result).second) lx.fail("duplicate value name '%" + result + "'");
      lx.expect_punct('=');
      bb.instructions.push_back(parse_instruction(lx, result, pos));
    }
    if (!terminated) lx.fail("block '" + bb.label + "' lacks a terminator");
    fn.blocks.push_back(std::move(bb));
  }
  if (fn.blocks.empty()) lx.fail("function '@" + fn.name + "' has no blocks");
  return fn;
}

}  // namespace

int FrontendFunction::block_index(const std::string& label) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label) return static_cast<int>(i);
  return -1;
}

const FrontendFunction* FrontendModule::find(const std::string& name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

FrontendModule parse_program(const std::string& text) {
  Lexer lx(text);
  FrontendModule m;
  std::set<std::string> names;
  while (!lx.eof()) {
    FrontendFunction fn = parse_function(lx);
    if (!names.insert(fn.name).second)
      throw ParseError(fn.pos.line, fn.pos.col, "duplicate function '@" + fn.name + "'");
    m.functions.push_back(std::move(fn));
  }
  return m;
}

ValueType parse_frontend_type(const std::string& text) {
  Lexer lx(text);
  ValueType t = parse_type(lx);
  if (!lx.eof()) lx.fail("trailing characters after type");
  return t;
}

TensorValue parse_literal_text(const std::string& text, const TensorType& type) {
  Lexer lx(text);
  TensorValue v = parse_literal(lx, type);
  if (!lx.eof()) lx.fail("trailing characters after literal");
  return v;
}

namespace {

std::string print_float_token(float v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

void print_operand(std::ostringstream& os, const Operand& op) {
  switch (op.kind) {
    case Operand::Kind::Value:
      os << '%' << op.name;
      break;
    case Operand::Kind::FnRef:
      os << '@' << op.name;
      if (!op.captures.empty()) {
        os << '[';
        for (size_t i = 0; i < op.captures.size(); ++i) {
          if (i) os << ", ";
          os << print_capture(op.captures[i]);
        }
        os << ']';
      }
      break;
    case Operand::Kind::AllDims:
      os << "all";
      break;
  }
}

void print_args(std::ostringstream& os, const std::vector<Operand>& args) {
  os << '(';
  for (size_t i = 0; i < args.size(); ++i) {
    if (i) os << ", ";
    print_operand(os, args[i]);
  }
  os << ')';
}

void print_instruction(std::ostringstream& os, const Instruction& in) {
  os << "  %" << in.result << " = ";
  switch (in.kind) {
    case Instruction::Kind::Const:
      os << "const " << to_string(in.const_type, TypeSyntax::Frontend) << ' '
         << (in.all_marker ? "all" : print_literal(in.const_value));
      break;
    case Instruction::Kind::Call:
      os << "call " << in.callee;
      print_args(os, in.args);
      break;
    case Instruction::Kind::CallFn: {
      os << "call_fn @" << in.callee;
      if (!in.captures.empty()) {
        os << '[';
        for (size_t i = 0; i < in.captures.size(); ++i) {
          if (i) os << ", ";
          os << print_capture(in.captures[i]);
        }
        os << ']';
      }
      print_args(os, in.args);
      break;
    }
    case Instruction::Kind::MakeTuple:
      os << "tuple";
      print_args(os, in.args);
      break;
    case Instruction::Kind::GetElement:
      os << "get %" << in.args[0].name << ", " << in.index;
      break;
    case Instruction::Kind::Phi:
      os << "phi [";
      for (size_t i = 0; i < in.incomings.size(); ++i) {
        if (i) os << ", ";
        os << in.incomings[i].block << ": %" << in.incomings[i].value;
      }
      os << ']';
      break;
  }
  os << '\n';
}

}  // namespace

std::string print_capture(const CapturedLiteral& c) {
  switch (c.elem) {
    case ElementType::F32: {
      std::string s = print_float_token(static_cast<float>(c.f));
      if (s.find_first_not_of("-0123456789") == std::string::npos) s += ".0";
      return s;
    }
    case ElementType::S64:
      return std::to_string(c.i);
    case ElementType::Pred:
      return c.i ? "true" : "false";
  }
  return "?";
}

std::string print_frontend(const FrontendFunction& fn) {
  std::ostringstream os;
  os << "func @" << fn.name << '(';
  for (size_t i = 0; i < fn.params.size(); ++i) {
    if (i) os << ", ";
    os << '%' << fn.params[i].name;
    if (fn.params[i].type) os << ": " << to_string(*fn.params[i].type, TypeSyntax::Frontend);
  }
  os << ") {\n";
  for (const BasicBlock& bb : fn.blocks) {
    os << bb.label << ":\n";
    for (const Instruction& in : bb.instructions) print_instruction(os, in);
    os << "  ";
    switch (bb.term.kind) {
      case Terminator::Kind::Br:
        os << "br %" << bb.term.cond << ", " << bb.term.target_true << ", " << bb.term.target_false;
        break;
      case Terminator::Kind::Jmp:
        os << "jmp " << bb.term.target_true;
        break;
      case Terminator::Kind::Return:
        os << "return %" << bb.term.value;
        break;
    }
    os << '\n';
  }
  os << "}\n";
  return os.str();
}

std::string print_frontend(const FrontendModule& m) {
  std::ostringstream os;
  for (size_t i = 0; i < m.functions.size(); ++i) {
    if (i) os << '\n';
    os << print_frontend(m.functions[i]);
  }
  return os.str();
}

bool structurally_equal(const FrontendModule& a, const FrontendModule& b) {
  return print_frontend(a) == print_frontend(b);
}

std::vector<int> successors(const FrontendFunction& f, int block) {
  const Terminator& t = f.blocks[static_cast<size_t>(block)].term;
  switch (t.kind) {
    case Terminator::Kind::Br:
      return {f.block_index(t.target_true), f.block_index(t.target_false)};
    case Terminator::Kind::Jmp:
      return {f.block_index(t.target_true)};
    case Terminator::Kind::Return:
      return {};
  }
  return {};
}

std::vector<std::vector<int>> predecessors(const FrontendFunction& f) {
  std::vector<std::vector<int>> preds(f.blocks.size());
  for (int b = 0; b < static_cast<int>(f.blocks.size()); ++b)
    for (int s : successors(f, b))
      if (s >= 0) preds[static_cast<size_t>(s)].push_back(b);
  return preds;
}

std::vector<bool> reachable_blocks(const FrontendFunction& f) {
  std::vector<bool> seen(f.blocks.size(), false);
  std::vector<int> work{0};
  seen[0] = true;
  while (!work.empty()) {
    int b = work.back();
    work.pop_back();
    for (int s : successors(f, b))
      if (s >= 0 && !seen[static_cast<size_t>(s)]) {
        seen[static_cast<size_t>(s)] = true;
        work.push_back(s);
      }
  }
  return seen;
}

namespace {

struct DefSite {
  int block = -1;  // -1: parameter
  int instr = -1;
};

/// Iterative dominator sets over reachable blocks.
std::vector<std::vector<bool>> dominators(const FrontendFunction& f) {
  size_t n = f.blocks.size();
  std::vector<bool> reach = reachable_blocks(f);
  auto preds = predecessors(f);
  std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, true));
  dom[0].assign(n, false);
  dom[0][0] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t b = 1; b < n; ++b) {
      if (!reach[b]) continue;
      std::vector<bool> d(n, true);
      bool any = false;
      for (int p : preds[b]) {
        if (!reach[static_cast<size_t>(p)]) continue;
        any = true;
        for (size_t i = 0; i < n; ++i) d[i] = d[i] && dom[static_cast<size_t>(p)][i];
      }
      if (!any) d.assign(n, false);
      d[b] = true;
      if (d != dom[b]) {
        dom[b] = d;
        changed = true;
      }
    }
  }
  return dom;
}

}  // namespace

std::vector<Diagnostic> validate(const FrontendModule& m) {
  std::vector<Diagnostic> diags;
  for (const FrontendFunction& fn : m.functions) {
    auto diag = [&](const std::string& block, const std::string& instr, const std::string& msg) {
      diags.push_back({fn.name, block, instr, msg});
    };
    // Def sites.
    std::map<std::string, DefSite> defs;
    for (const Param& p : fn.params) defs[p.name] = DefSite{-1, -1};
    for (int b = 0; b < static_cast<int>(fn.blocks.size()); ++b) {
      const BasicBlock& bb = fn.blocks[static_cast<size_t>(b)];
      for (int i = 0; i < static_cast<int>(bb.instructions.size()); ++i) {
        const std::string& r = bb.instructions[static_cast<size_t>(i)].result;
        if (defs.count(r))
          diag(bb.label, r, "duplicate value name '%" + r + "'");
        else
          defs[r] = DefSite{b, i};
      }
    }
    // Branch targets.
    bool targets_ok = true;
    for (const BasicBlock& bb : fn.blocks) {
      auto check_target = [&](const std::string& t) {
        if (!t.empty() && fn.block_index(t) < 0) {
          diag(bb.label, "<term>", "unknown block '" + t + "'");
          targets_ok = false;
        }
      };
      check_target(bb.term.target_true);
      check_target(bb.term.target_false);
    }
    if (!targets_ok) continue;

    std::vector<bool> reach = reachable_blocks(fn);
    auto preds = predecessors(fn);
    auto dom = dominators(fn);

    auto def_dominates_end_of = [&](const DefSite& d, int block) {
      if (d.block == -1) return true;
      return d.block == block || dom[static_cast<size_t>(block)][static_cast<size_t>(d.block)];
    };
    auto check_use = [&](const std::string& name, int block, int instr, const std::string& where,
                         const std::string& label) {
      auto it = defs.find(name);
      if (it == defs.end()) {
        diag(label, where, "use of undefined value '%" + name + "'");
        return;
      }
      if (!reach[static_cast<size_t>(block)]) return;
      const DefSite& d = it->second;
      bool ok;
      if (d.block == -1)
        ok = true;
      else if (d.block == block)
        ok = d.instr < instr;
      else
        ok = dom[static_cast<size_t>(block)][static_cast<size_t>(d.block)];
      if (!ok) diag(label, where, "use of '%" + name + "' not dominated by its definition");
    };

    for (int b = 0; b < static_cast<int>(fn.blocks.size()); ++b) {
      const BasicBlock& bb = fn.blocks[static_cast<size_t>(b)];
      bool seen_non_phi = false;
      for (int i = 0; i < static_cast<int>(bb.instructions.size()); ++i) {
        const Instruction& in = bb.instructions[static_cast<size_t>(i)];
        if (in.kind == Instruction::Kind::Phi) {
          if (seen_non_phi) diag(bb.label, in.result, "phi in non-head position");
          // One incoming per predecessor.
          std::set<int> inc_blocks;
          for (const PhiIncoming& inc : in.incomings) {
            int pb = fn.block_index(inc.block);
            if (pb < 0) {
              diag(bb.label, in.result, "phi references unknown block '" + inc.block + "'");
              continue;
            }
            if (!inc_blocks.insert(pb).second)
              diag(bb.label, in.result, "phi lists block '" + inc.block + "' twice");
            auto it = defs.find(inc.value);
            if (it == defs.end()) {
              diag(bb.label, in.result, "use of undefined value '%" + inc.value + "'");
            } else if (reach[static_cast<size_t>(pb)] && !def_dominates_end_of(it->second, pb)) {
              diag(bb.label, in.result,
                   "phi incoming '%" + inc.value + "' does not dominate predecessor '" + inc.block + "'");
            }
          }
          std::set<int> pred_set(preds[static_cast<size_t>(b)].begin(), preds[static_cast<size_t>(b)].end());
          if (inc_blocks != pred_set)
            diag(bb.label, in.result, "phi incoming blocks do not match predecessors");
        } else {
          seen_non_phi = true;
          for (const Operand& op : in.args)
            if (op.kind == Operand::Kind::Value) check_use(op.name, b, i, in.result, bb.label);
          if (in.kind == Instruction::Kind::CallFn && m.find(in.callee) == nullptr)
            diag(bb.label, in.result, "call_fn references unknown function '@" + in.callee + "'");
        }
      }
      int end = static_cast<int>(bb.instructions.size());
      if (bb.term.kind == Terminator::Kind::Br) check_use(bb.term.cond, b, end, "<term>", bb.label);
      if (bb.term.kind == Terminator::Kind::Return) check_use(bb.term.value, b, end, "<term>", bb.label);
    }
  }
  return diags;
}

}  // namespace mhlc
