// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mhlc {

/// Syntax error in frontend or HLO text. Positions are 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int col, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ":" + std::to_string(col) + ": " + message),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

/// Structured failure while compiling a well-formed module: offload
/// failures in strict mode, unsupported control flow, missing VJP rules.
class CompileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runtime failure in the interpreter (dead handle, iteration cap, ...).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mhlc
