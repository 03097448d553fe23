// SPDX-License-Identifier: Apache-2.0
//
// The mini tensor language: textual SSA IR with basic blocks, phi nodes,
// builtin calls and function references. Modules are immutable after
// parsing and safely shareable across threads.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mhlc/errors.hpp"
#include "mhlc/types.hpp"
#include "mhlc/value.hpp"

namespace mhlc {

struct SourcePos {
  int line = 0;
  int col = 0;
};

/// Call argument: an SSA value, an inline function reference
/// (`@name` or `@name[captures]`), or the all-dims marker `all`.
struct Operand {
  enum class Kind : uint8_t { Value, FnRef, AllDims };
  Kind kind = Kind::Value;
  std::string name;  // value id (without %) or function name (without @)
  std::vector<CapturedLiteral> captures;

  static Operand value(std::string n) { return {Kind::Value, std::move(n), {}}; }
  static Operand fnref(std::string n, std::vector<CapturedLiteral> caps = {}) {
    return {Kind::FnRef, std::move(n), std::move(caps)};
  }
  static Operand all_dims() { return {Kind::AllDims, {}, {}}; }
};

struct PhiIncoming {
  std::string block;
  std::string value;
};

struct Instruction {
  enum class Kind : uint8_t { Const, Call, CallFn, MakeTuple, GetElement, Phi };
  Kind kind = Kind::Const;
  std::string result;
  SourcePos pos;

  // Const
  ValueType const_type;
  TensorValue const_value;
  bool all_marker = false;  // `const s64[0] all`

  // Call / CallFn / MakeTuple
  std::string callee;                     // builtin or function name
  std::vector<CapturedLiteral> captures;  // CallFn
  std::vector<Operand> args;

  // GetElement
  int64_t index = 0;

  // Phi
  std::vector<PhiIncoming> incomings;
};

struct Terminator {
  enum class Kind : uint8_t { Br, Jmp, Return };
  Kind kind = Kind::Return;
  SourcePos pos;
  std::string cond;          // Br
  std::string target_true;   // Br / Jmp
  std::string target_false;  // Br
  std::string value;         // Return
};

struct BasicBlock {
  std::string label;
  std::vector<Instruction> instructions;
  Terminator term;
};

struct Param {
  std::string name;
  std::optional<ValueType> type;
};

struct FrontendFunction {
  std::string name;
  std::vector<Param> params;
  std::vector<BasicBlock> blocks;  // blocks[0] is the entry
  SourcePos pos;

  int block_index(const std::string& label) const;
};

struct FrontendModule {
  std::vector<FrontendFunction> functions;

  const FrontendFunction* find(const std::string& name) const;
};

struct Diagnostic {
  std::string function;
  std::string block;
  std::string instruction;
  std::string message;
};

FrontendModule parse_program(const std::string& text);
std::string print_frontend(const FrontendModule& m);
std::string print_frontend(const FrontendFunction& f);
std::vector<Diagnostic> validate(const FrontendModule& m);

/// Structural equality, ignoring source positions.
bool structurally_equal(const FrontendModule& a, const FrontendModule& b);

/// Successor block indices of a block's terminator.
std::vector<int> successors(const FrontendFunction& f, int block);
/// Predecessor lists, indexed by block.
std::vector<std::vector<int>> predecessors(const FrontendFunction& f);
/// Blocks reachable from the entry.
std::vector<bool> reachable_blocks(const FrontendFunction& f);

/// Parses a type in frontend syntax (`f32[2,3]`, `tuple(f32[], s64[])`).
ValueType parse_frontend_type(const std::string& text);
/// Parses a literal in the frontend grammar against an expected type.
TensorValue parse_literal_text(const std::string& text, const TensorType& type);

std::string print_capture(const CapturedLiteral& c);

}  // namespace mhlc
