// SPDX-License-Identifier: Apache-2.0
//
// Builtin call lowering shared by the compiler, the inference engine's
// transfer functions and the dynamic evaluator. Lowering is expressed
// against an abstract op emitter so each client decides what "emit"
// means (build IR, probe shapes, or execute immediately).

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mhlc/frontend.hpp"
#include "mhlc/hlo.hpp"
#include "mhlc/lattice.hpp"

namespace mhlc {

/// Argument to a builtin call: the inferred abstract value plus the
/// emitter-level reference for already-materialized dynamic values.
/// `ref < 0` with a Const abstraction means "materialize on demand".
struct BuiltinArg {
  AbstractValue info;
  int ref = -1;
};

/// Signature constraints of a builtin.
struct BuiltinSig {
  int arity = -1;                 // -1: variadic (>= 2)
  std::vector<int> static_args;   // positions that must be Const
  std::vector<int> fnref_args;    // positions that must be function refs
};

/// Null when the builtin is unknown.
const BuiltinSig* builtin_sig(const std::string& name);

/// Scalar ops usable directly and as map/reduce callbacks.
bool is_scalar_builtin(const std::string& name);

/// Neutral element for reductions: add -> 0, multiply -> 1,
/// maximum -> smallest value of the element type. Throws CompileError
/// for other ops.
TensorValue neutral_element(const std::string& op, ElementType elem);

/// Where lowered ops go. Implementations: an IR builder, a shape/const
/// probe, or an execute-immediately device driver.
class OpEmitter {
 public:
  virtual ~OpEmitter() = default;
  virtual int emit(const HloOpConfig& config, const std::vector<int>& operands) = 0;
  virtual ValueType type_of(int ref) = 0;
  /// Compiles (or reuses) a scalar callback computation for `fn` applied
  /// to scalar parameters of the given types; returns its index.
  virtual int callback(const FnRefType& fn, const std::vector<ValueType>& scalar_params) = 0;
  /// True while the emitter only derives types (abstract interpretation).
  /// Value-affecting diagnostics, e.g. a reduction op without a neutral
  /// element, are then deferred to the real lowering so they surface
  /// with a precise message instead of a generic "shape unknown".
  virtual bool type_probe_only() const { return false; }
};

/// Lowers one builtin call through the emitter; returns the result ref.
/// Throws CompileError for unknown builtins, non-constant static
/// operands or shape mismatches.
int lower_builtin_call(OpEmitter& em, const std::string& name, const std::vector<BuiltinArg>& args);

/// Appends instructions to one computation of an HloModule, deriving
/// types via shape_infer and names via the c<K><mnemonic><J> scheme.
class ComputationBuilder {
 public:
  /// Appends a new computation named c<index> and builds into it.
  ComputationBuilder(HloModule& m, const std::string& name);

  int add(const HloOpConfig& config, const std::vector<int>& operands);
  /// Creates the parameter instruction for `index` on first call.
  int add_parameter(int index, const ValueType& type);
  void set_root(int ref);
  int comp_index() const { return ci_; }
  ValueType type_of(int ref) const;
  HloModule& module() { return *m_; }

 private:
  HloModule* m_;
  int ci_;
  int counter_ = 0;
};

/// Shared state of one compilation: the module under construction and
/// the callback dedup cache keyed on (function, captures, signature).
struct HloEmitContext {
  const FrontendModule* src = nullptr;
  HloModule module;
  std::map<std::string, int> callback_cache;
  int depth = 0;  // recursion guard for nested callback compilation
  bool type_probe = false;
};

/// OpEmitter that appends to a ComputationBuilder.
class BuilderEmitter : public OpEmitter {
 public:
  BuilderEmitter(HloEmitContext& ctx, ComputationBuilder& b) : ctx_(ctx), b_(b) {}
  int emit(const HloOpConfig& config, const std::vector<int>& operands) override {
    return b_.add(config, operands);
  }
  ValueType type_of(int ref) override { return b_.type_of(ref); }
  int callback(const FnRefType& fn, const std::vector<ValueType>& scalar_params) override;
  bool type_probe_only() const override { return ctx_.type_probe; }

 private:
  HloEmitContext& ctx_;
  ComputationBuilder& b_;
};

/// Compiles `fn` into a computation over scalar parameters, reusing a
/// previously compiled computation for the same (fn, captures,
/// signature). Builtin scalar ops compile to a two-line computation; a
/// frontend function must be straight-line, and a single aggregate
/// parameter is packed from the scalar parameters with tuple /
/// get-tuple-element instructions. Captures materialize as Constants.
int compile_scalar_callback(HloEmitContext& ctx, const FnRefType& fn,
                            const std::vector<ValueType>& scalar_params);

/// Inlines the straight-line body of `f` into the current builder,
/// binding parameters to `args`. Used for callbacks and call_fn.
BuiltinArg emit_inline_call(HloEmitContext& ctx, ComputationBuilder& b, const FrontendFunction& f,
                            const std::vector<BuiltinArg>& args);

/// Materializes a BuiltinArg into an emitter ref (emitting a Constant
/// when needed).
int materialize(OpEmitter& em, const BuiltinArg& arg);

/// Interprets a Const abstract value holding dims: scalar -> (n),
/// vector -> the list, all-marker -> 0..rank-1.
std::vector<int64_t> dims_from_const(const AbstractValue& v, int rank);

}  // namespace mhlc
