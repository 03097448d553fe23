// SPDX-License-Identifier: Apache-2.0
//
// Dataflow inference over the frontend CFG: constants, types and shapes
// propagated to a fixpoint with constant-branch pruning, plus the
// offloadability check that decides whether a function compiles as one
// static region.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mhlc/frontend.hpp"
#include "mhlc/lattice.hpp"

namespace mhlc {

struct InferOptions {
  int recursion_depth_limit = 64;
};

struct InferenceResult {
  std::map<std::string, AbstractValue> values;  // per SSA value id
  std::vector<bool> block_reachable;            // indexed by block
  AbstractValue return_value;
  int fixpoint_iterations = 0;
};

/// Transfer function of one builtin over abstract arguments. All-Const
/// arguments of pure builtins fold to Const; fully typed arguments give
/// a Typed result; anything unresolvable gives Top. Arity mismatches and
/// unknown builtins throw CompileError.
AbstractValue builtin_transfer(const FrontendModule& m, const std::string& name,
                               const std::vector<AbstractValue>& args);

/// Runs inference of `fn` applied to `args` to a fixpoint. Recursive
/// call_fn targets are inferred with memoization on (function, abstract
/// arguments); recursion beyond the depth limit yields Top.
InferenceResult infer(const FrontendModule& m, const FrontendFunction& fn,
                      const std::vector<AbstractValue>& args, const InferOptions& opts = {});

enum class OffloadFailureReason {
  UnresolvedStaticOperand,
  UninferredShape,
  UnsupportedBuiltin,
  DynamicCallTarget,
};

const char* to_string(OffloadFailureReason r);

struct OffloadFailure {
  std::string instruction;  // result id
  std::string block;
  OffloadFailureReason reason;
};

struct OffloadReport {
  bool offloadable = true;
  std::vector<OffloadFailure> failures;
};

/// Whole-function offloadability: every reachable call has Const static
/// operands, fully typed dynamic operands and known function-reference
/// targets.
OffloadReport check_offloadable(const FrontendModule& m, const FrontendFunction& fn,
                                const InferenceResult& res);

}  // namespace mhlc
