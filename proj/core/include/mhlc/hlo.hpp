// SPDX-License-Identifier: Apache-2.0
//
// The target linear-algebra IR: modules of computations of instructions,
// each instruction a kind plus static operands fixed at construction.
// Includes per-op shape transfer functions, a validator and a textual
// printer/parser that round-trips bit-identically.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhlc/errors.hpp"
#include "mhlc/frontend.hpp"
#include "mhlc/types.hpp"
#include "mhlc/value.hpp"

namespace mhlc {

enum class HloOpKind : uint8_t {
  Parameter,
  Constant,
  Dot,
  Map,
  Reduce,
  Broadcast,
  Transpose,
  Reshape,
  Tuple,
  GetTupleElement,
  Conditional,
  While,
  Rng,
  Add,
  Subtract,
  Multiply,
  Divide,
  Maximum,
  Exponential,
  Lt,
  Le,
  Select,
};

/// Text name, e.g. "get-tuple-element".
const char* kind_name(HloOpKind k);
/// Short instruction-name mnemonic, e.g. "gte".
const char* kind_mnemonic(HloOpKind k);
bool is_elementwise(HloOpKind k);

/// Dot dimension numbers.
struct DimNums {
  std::vector<int64_t> lhs_contracting;
  std::vector<int64_t> rhs_contracting;
  std::vector<int64_t> lhs_batch;
  std::vector<int64_t> rhs_batch;
  bool operator==(const DimNums&) const = default;
};

/// Kind plus kind-specific static operands, immutable once constructed.
struct HloOpConfig {
  HloOpKind kind = HloOpKind::Parameter;

  ValueType param_type;              // Parameter
  int index = 0;                     // Parameter, GetTupleElement
  TensorValue literal;               // Constant
  DimNums dnums;                     // Dot
  std::vector<int64_t> dimensions;   // Map, Reduce, Broadcast
  std::vector<int64_t> permutation;  // Transpose
  std::vector<int64_t> shape;        // Broadcast result / Reshape target / Rng shape
  ElementType elem = ElementType::F32;  // Rng
  int to_apply = -1;                 // Map, Reduce
  int cond_comp = -1;                // While
  int body_comp = -1;                // While
  int true_comp = -1;                // Conditional
  int false_comp = -1;               // Conditional

  static HloOpConfig parameter(int index, ValueType type);
  static HloOpConfig constant(TensorValue literal);
  static HloOpConfig dot(DimNums dnums);
  static HloOpConfig map(int to_apply, std::vector<int64_t> dimensions);
  static HloOpConfig reduce(int to_apply, std::vector<int64_t> dimensions);
  static HloOpConfig broadcast(std::vector<int64_t> result_shape, std::vector<int64_t> dimensions);
  static HloOpConfig transpose(std::vector<int64_t> permutation);
  static HloOpConfig reshape(std::vector<int64_t> target_shape);
  static HloOpConfig tuple();
  static HloOpConfig get_tuple_element(int index);
  static HloOpConfig conditional(int true_comp, int false_comp);
  static HloOpConfig while_loop(int cond_comp, int body_comp);
  static HloOpConfig rng(ElementType elem, std::vector<int64_t> shape);
  static HloOpConfig elementwise(HloOpKind kind);
};

struct HloInstruction {
  std::string name;
  ValueType type;
  HloOpConfig config;
  std::vector<int> operands;  // indices into the owning computation
};

struct HloComputation {
  std::string name;
  std::vector<HloInstruction> instructions;  // def-before-use order
  int root = -1;

  int num_parameters() const;
  ValueType parameter_type(int index) const;
  const HloInstruction& root_instruction() const { return instructions[static_cast<size_t>(root)]; }
};

struct HloModule {
  std::vector<HloComputation> computations;
  int entry = -1;

  const HloComputation& entry_computation() const {
    return computations[static_cast<size_t>(entry)];
  }
};

/// Shape transfer function: exact result type of `config` applied to
/// operands of the given types. Throws CompileError on invalid input.
/// `m` supplies callee computations for Map/Reduce/While/Conditional.
ValueType shape_infer(const HloModule& m, const HloOpConfig& config,
                      const std::vector<ValueType>& operand_types);

std::vector<Diagnostic> validate_hlo(const HloModule& m);

std::string print_hlo(const HloModule& m);
HloModule parse_hlo(const std::string& text);

/// Parses a type in HLO syntax (`f32[10,10]{0,1}`, `(f32[], s64[2]{0})`).
ValueType parse_hlo_type(const std::string& text);
/// Comma-separated list of HLO types, used for CLI signature strings.
std::vector<ValueType> parse_signature(const std::string& text);

/// Graph isomorphism rooted at the entry computations: kinds, types,
/// static operands and operand edges match; instruction and computation
/// names are ignored. Requires matched computations to have equal
/// instruction counts, so dead instructions count as differences.
bool structurally_equal(const HloModule& a, const HloModule& b);

}  // namespace mhlc
