// SPDX-License-Identifier: Apache-2.0

#include "mhlc/hlo.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mhlc {

const char* kind_name(HloOpKind k) {
  switch (k) {
    case HloOpKind::Parameter:
      return "parameter";
    case HloOpKind::Constant:
      return "constant";
    case HloOpKind::Dot:
      return "dot";
    case HloOpKind::Map:
      return "map";
    case HloOpKind::Reduce:
      return "reduce";
    case HloOpKind::Broadcast:
      return "broadcast";
    case HloOpKind::Transpose:
      return "transpose";
    case HloOpKind::Reshape:
      return "reshape";
    case HloOpKind::Tuple:
      return "tuple";
    case HloOpKind::GetTupleElement:
      return "get-tuple-element";
    case HloOpKind::Conditional:
      return "conditional";
    case HloOpKind::While:
      return "while";
    case HloOpKind::Rng:
      return "rng";
    case HloOpKind::Add:
      return "add";
    case HloOpKind::Subtract:
      return "subtract";
    case HloOpKind::Multiply:
      return "multiply";
    case HloOpKind::Divide:
      return "divide";
    case HloOpKind::Maximum:
      return "maximum";
    case HloOpKind::Exponential:
      return "exponential";
    case HloOpKind::Lt:
      return "less-than";
    case HloOpKind::Le:
      return "less-than-or-equal-to";
    case HloOpKind::Select:
      return "select";
  }
  return "?";
}

const char* kind_mnemonic(HloOpKind k) {
  switch (k) {
    case HloOpKind::Parameter:
      return "p";
    case HloOpKind::Constant:
      return "c";
    case HloOpKind::Dot:
      return "d";
    case HloOpKind::Map:
      return "m";
    case HloOpKind::Reduce:
      return "r";
    case HloOpKind::Broadcast:
      return "b";
    case HloOpKind::Transpose:
      return "tr";
    case HloOpKind::Reshape:
      return "rsh";
    case HloOpKind::Tuple:
      return "t";
    case HloOpKind::GetTupleElement:
      return "gte";
    case HloOpKind::Conditional:
      return "cond";
    case HloOpKind::While:
      return "w";
    case HloOpKind::Rng:
      return "rng";
    case HloOpKind::Add:
      return "a";
    case HloOpKind::Subtract:
      return "sub";
    case HloOpKind::Multiply:
      return "mul";
    case HloOpKind::Divide:
      return "d";
    case HloOpKind::Maximum:
      return "max";
    case HloOpKind::Exponential:
      return "e";
    case HloOpKind::Lt:
      return "lt";
    case HloOpKind::Le:
      return "le";
    case HloOpKind::Select:
      return "s";
  }
  return "?";
}

bool is_elementwise(HloOpKind k) {
  switch (k) {
    case HloOpKind::Add:
    case HloOpKind::Subtract:
    case HloOpKind::Multiply:
    case HloOpKind::Divide:
    case HloOpKind::Maximum:
    case HloOpKind::Exponential:
    case HloOpKind::Lt:
    case HloOpKind::Le:
    case HloOpKind::Select:
      return true;
    default:
      return false;
  }
}

HloOpConfig HloOpConfig::parameter(int index, ValueType type) {
  HloOpConfig c;
  c.kind = HloOpKind::Parameter;
  c.index = index;
  c.param_type = std::move(type);
  return c;
}
HloOpConfig HloOpConfig::constant(TensorValue literal) {
  HloOpConfig c;
  c.kind = HloOpKind::Constant;
  c.literal = std::move(literal);
  return c;
}
HloOpConfig HloOpConfig::dot(DimNums dnums) {
  HloOpConfig c;
  c.kind = HloOpKind::Dot;
  c.dnums = std::move(dnums);
  return c;
}
HloOpConfig HloOpConfig::map(int to_apply, std::vector<int64_t> dimensions) {
  HloOpConfig c;
  c.kind = HloOpKind::Map;
  c.to_apply = to_apply;
  c.dimensions = std::move(dimensions);
  return c;
}
HloOpConfig HloOpConfig::reduce(int to_apply, std::vector<int64_t> dimensions) {
  HloOpConfig c;
  c.kind = HloOpKind::Reduce;
  c.to_apply = to_apply;
  c.dimensions = std::move(dimensions);
  return c;
}
HloOpConfig HloOpConfig::broadcast(std::vector<int64_t> result_shape, std::vector<int64_t> dimensions) {
  HloOpConfig c;
  c.kind = HloOpKind::Broadcast;
  c.shape = std::move(result_shape);
  c.dimensions = std::move(dimensions);
  return c;
}
HloOpConfig HloOpConfig::transpose(std::vector<int64_t> permutation) {
  HloOpConfig c;
  c.kind = HloOpKind::Transpose;
  c.permutation = std::move(permutation);
  return c;
}
HloOpConfig HloOpConfig::reshape(std::vector<int64_t> target_shape) {
  HloOpConfig c;
  c.kind = HloOpKind::Reshape;
  c.shape = std::move(target_shape);
  return c;
}
HloOpConfig HloOpConfig::tuple() {
  HloOpConfig c;
  c.kind = HloOpKind::Tuple;
  return c;
}
HloOpConfig HloOpConfig::get_tuple_element(int index) {
  HloOpConfig c;
  c.kind = HloOpKind::GetTupleElement;
  c.index = index;
  return c;
}
HloOpConfig HloOpConfig::conditional(int true_comp, int false_comp) {
  HloOpConfig c;
  c.kind = HloOpKind::Conditional;
  c.true_comp = true_comp;
  c.false_comp = false_comp;
  return c;
}
HloOpConfig HloOpConfig::while_loop(int cond_comp, int body_comp) {
  HloOpConfig c;
  c.kind = HloOpKind::While;
  c.cond_comp = cond_comp;
  c.body_comp = body_comp;
  return c;
}
HloOpConfig HloOpConfig::rng(ElementType elem, std::vector<int64_t> shape) {
  HloOpConfig c;
  c.kind = HloOpKind::Rng;
  c.elem = elem;
  c.shape = std::move(shape);
  return c;
}
HloOpConfig HloOpConfig::elementwise(HloOpKind kind) {
  HloOpConfig c;
  c.kind = kind;
  return c;
}

int HloComputation::num_parameters() const {
  int n = 0;
  for (const HloInstruction& in : instructions)
    if (in.config.kind == HloOpKind::Parameter) ++n;
  return n;
}

ValueType HloComputation::parameter_type(int index) const {
  for (const HloInstruction& in : instructions)
    if (in.config.kind == HloOpKind::Parameter && in.config.index == index) return in.type;
  throw CompileError("computation '" + name + "' has no parameter " + std::to_string(index));
}

namespace {

[[noreturn]] void shape_error(const std::string& msg) { throw CompileError("shape error: " + msg); }

const TensorType& as_tensor(const ValueType& t, const char* what) {
  if (!t.is_tensor()) shape_error(std::string(what) + " must be a tensor");
  return t.tensor;
}

void check_comp_index(const HloModule& m, int c, const char* what) {
  if (c < 0 || c >= static_cast<int>(m.computations.size()))
    shape_error(std::string(what) + " computation reference out of range");
}

std::vector<ValueType> computation_param_types(const HloComputation& comp) {
  std::vector<ValueType> types;
  int n = comp.num_parameters();
  for (int i = 0; i < n; ++i) types.push_back(comp.parameter_type(i));
  return types;
}

}  // namespace

ValueType shape_infer(const HloModule& m, const HloOpConfig& config,
                      const std::vector<ValueType>& operand_types) {
  auto arity = [&](size_t n) {
    if (operand_types.size() != n)
      shape_error(std::string(kind_name(config.kind)) + " expects " + std::to_string(n) +
                  " operands, got " + std::to_string(operand_types.size()));
  };
  switch (config.kind) {
    case HloOpKind::Parameter:
      arity(0);
      return config.param_type;
    case HloOpKind::Constant:
      arity(0);
      return ValueType(config.literal.type);
    case HloOpKind::Rng:
      arity(0);
      if (config.elem != ElementType::F32) shape_error("rng supports f32 only");
      return ValueType::make_tensor(config.elem, config.shape);
    case HloOpKind::Dot: {
      arity(2);
      const TensorType& lhs = as_tensor(operand_types[0], "dot lhs");
      const TensorType& rhs = as_tensor(operand_types[1], "dot rhs");
      if (lhs.elem != rhs.elem) shape_error("dot operand element types differ");
      if (lhs.elem == ElementType::Pred) shape_error("dot on pred");
      const DimNums& d = config.dnums;
      if (d.lhs_contracting.size() != d.rhs_contracting.size())
        shape_error("dot contracting dim counts differ");
      if (d.lhs_batch.size() != d.rhs_batch.size()) shape_error("dot batch dim counts differ");
      auto dim_of = [&](const TensorType& t, int64_t i, const char* side) {
        if (i < 0 || i >= t.rank()) shape_error(std::string("dot ") + side + " dim out of range");
        return t.shape[static_cast<size_t>(i)];
      };
      for (size_t i = 0; i < d.lhs_contracting.size(); ++i)
        if (dim_of(lhs, d.lhs_contracting[i], "lhs") != dim_of(rhs, d.rhs_contracting[i], "rhs"))
          shape_error("dot contracting extents differ");
      std::vector<int64_t> result;
      for (size_t i = 0; i < d.lhs_batch.size(); ++i) {
        if (dim_of(lhs, d.lhs_batch[i], "lhs") != dim_of(rhs, d.rhs_batch[i], "rhs"))
          shape_error("dot batch extents differ");
        result.push_back(dim_of(lhs, d.lhs_batch[i], "lhs"));
      }
      auto free_dims = [](const TensorType& t, const std::vector<int64_t>& contracting,
                          const std::vector<int64_t>& batch, std::vector<int64_t>& out) {
        for (int64_t i = 0; i < t.rank(); ++i) {
          bool used = std::count(contracting.begin(), contracting.end(), i) ||
                      std::count(batch.begin(), batch.end(), i);
          if (!used) out.push_back(t.shape[static_cast<size_t>(i)]);
        }
      };
      free_dims(lhs, d.lhs_contracting, d.lhs_batch, result);
      free_dims(rhs, d.rhs_contracting, d.rhs_batch, result);
      return ValueType::make_tensor(lhs.elem, std::move(result));
    }
    case HloOpKind::Map: {
      if (operand_types.empty()) shape_error("map needs at least one operand");
      check_comp_index(m, config.to_apply, "map");
      const HloComputation& cb = m.computations[static_cast<size_t>(config.to_apply)];
      std::vector<ValueType> params = computation_param_types(cb);
      if (params.size() != operand_types.size()) shape_error("map callback arity mismatch");
      const TensorType& first = as_tensor(operand_types[0], "map operand");
      for (size_t i = 0; i < operand_types.size(); ++i) {
        const TensorType& t = as_tensor(operand_types[i], "map operand");
        if (t.shape != first.shape) shape_error("map operand shapes differ");
        const TensorType& p = as_tensor(params[i], "map callback parameter");
        if (p.rank() != 0 || p.elem != t.elem) shape_error("map callback parameter type mismatch");
      }
      const TensorType& root = as_tensor(cb.root_instruction().type, "map callback root");
      if (root.rank() != 0) shape_error("map callback root must be scalar");
      std::vector<int64_t> expected(static_cast<size_t>(first.rank()));
      for (size_t i = 0; i < expected.size(); ++i) expected[i] = static_cast<int64_t>(i);
      if (config.dimensions != expected) shape_error("map dimensions must cover all dims in order");
      return ValueType::make_tensor(root.elem, first.shape);
    }
    case HloOpKind::Reduce: {
      arity(2);
      check_comp_index(m, config.to_apply, "reduce");
      const HloComputation& cb = m.computations[static_cast<size_t>(config.to_apply)];
      const TensorType& in = as_tensor(operand_types[0], "reduce operand");
      const TensorType& init = as_tensor(operand_types[1], "reduce init");
      if (init.rank() != 0) shape_error("reduce init must be scalar");
      if (init.elem != in.elem) shape_error("reduce init element type mismatch");
      std::vector<ValueType> params = computation_param_types(cb);
      if (params.size() != 2) shape_error("reduce callback must take 2 parameters");
      for (const ValueType& p : params) {
        const TensorType& pt = as_tensor(p, "reduce callback parameter");
        if (pt.rank() != 0 || pt.elem != in.elem) shape_error("reduce callback parameter mismatch");
      }
      const TensorType& root = as_tensor(cb.root_instruction().type, "reduce callback root");
      if (root.rank() != 0 || root.elem != in.elem) shape_error("reduce callback root mismatch");
      std::set<int64_t> dims;
      for (int64_t d : config.dimensions) {
        if (d < 0 || d >= in.rank()) shape_error("reduce dimension out of range");
        if (!dims.insert(d).second) shape_error("duplicate reduce dimension");
      }
      std::vector<int64_t> shape;
      for (int64_t i = 0; i < in.rank(); ++i)
        if (!dims.count(i)) shape.push_back(in.shape[static_cast<size_t>(i)]);
      return ValueType::make_tensor(in.elem, std::move(shape));
    }
    case HloOpKind::Broadcast: {
      arity(1);
      const TensorType& in = as_tensor(operand_types[0], "broadcast operand");
      if (static_cast<int>(config.dimensions.size()) != in.rank())
        shape_error("broadcast dimensions size must equal operand rank");
      int64_t prev = -1;
      for (size_t i = 0; i < config.dimensions.size(); ++i) {
        int64_t d = config.dimensions[i];
        if (d <= prev) shape_error("broadcast dimensions must be strictly increasing");
        if (d >= static_cast<int64_t>(config.shape.size())) shape_error("broadcast dimension out of range");
        if (in.shape[i] != config.shape[static_cast<size_t>(d)])
          shape_error("broadcast extent mismatch");
        prev = d;
      }
      return ValueType::make_tensor(in.elem, config.shape);
    }
    case HloOpKind::Transpose: {
      arity(1);
      const TensorType& in = as_tensor(operand_types[0], "transpose operand");
      if (static_cast<int>(config.permutation.size()) != in.rank())
        shape_error("bad permutation length");
      std::vector<bool> seen(static_cast<size_t>(in.rank()), false);
      std::vector<int64_t> shape;
      for (int64_t p : config.permutation) {
        if (p < 0 || p >= in.rank() || seen[static_cast<size_t>(p)]) shape_error("bad permutation");
        seen[static_cast<size_t>(p)] = true;
        shape.push_back(in.shape[static_cast<size_t>(p)]);
      }
      return ValueType::make_tensor(in.elem, std::move(shape));
    }
    case HloOpKind::Reshape: {
      arity(1);
      const TensorType& in = as_tensor(operand_types[0], "reshape operand");
      int64_t n = 1;
      for (int64_t d : config.shape) n *= d;
      if (n != in.element_count()) shape_error("reshape element count mismatch");
      return ValueType::make_tensor(in.elem, config.shape);
    }
    case HloOpKind::Tuple:
      return ValueType::make_tuple(operand_types);
    case HloOpKind::GetTupleElement: {
      arity(1);
      if (!operand_types[0].is_tuple()) shape_error("get-tuple-element operand must be a tuple");
      if (config.index < 0 || config.index >= static_cast<int>(operand_types[0].elements.size()))
        shape_error("get-tuple-element index out of range");
      return operand_types[0].elements[static_cast<size_t>(config.index)];
    }
    case HloOpKind::Conditional: {
      arity(3);
      const TensorType& pred = as_tensor(operand_types[0], "conditional predicate");
      if (pred.elem != ElementType::Pred || pred.rank() != 0)
        shape_error("conditional predicate must be pred[]");
      check_comp_index(m, config.true_comp, "conditional");
      check_comp_index(m, config.false_comp, "conditional");
      const HloComputation& tc = m.computations[static_cast<size_t>(config.true_comp)];
      const HloComputation& fc = m.computations[static_cast<size_t>(config.false_comp)];
      if (tc.num_parameters() != 1 || fc.num_parameters() != 1)
        shape_error("conditional branch computations must be unary");
      if (!(tc.parameter_type(0) == operand_types[1]))
        shape_error("conditional true operand type mismatch");
      if (!(fc.parameter_type(0) == operand_types[2]))
        shape_error("conditional false operand type mismatch");
      if (!(tc.root_instruction().type == fc.root_instruction().type))
        shape_error("conditional branch result types differ");
      return tc.root_instruction().type;
    }
    case HloOpKind::While: {
      arity(1);
      check_comp_index(m, config.cond_comp, "while");
      check_comp_index(m, config.body_comp, "while");
      const HloComputation& cond = m.computations[static_cast<size_t>(config.cond_comp)];
      const HloComputation& body = m.computations[static_cast<size_t>(config.body_comp)];
      const ValueType& state = operand_types[0];
      if (cond.num_parameters() != 1 || !(cond.parameter_type(0) == state))
        shape_error("while condition signature mismatch");
      const TensorType& croot = as_tensor(cond.root_instruction().type, "while condition root");
      if (croot.elem != ElementType::Pred || croot.rank() != 0)
        shape_error("while condition must produce pred[]");
      if (body.num_parameters() != 1 || !(body.parameter_type(0) == state) ||
          !(body.root_instruction().type == state))
        shape_error("while body signature mismatch");
      return state;
    }
    case HloOpKind::Exponential: {
      arity(1);
      const TensorType& in = as_tensor(operand_types[0], "exponential operand");
      if (in.elem != ElementType::F32) shape_error("exponential requires f32");
      return operand_types[0];
    }
    case HloOpKind::Select: {
      arity(3);
      const TensorType& pred = as_tensor(operand_types[0], "select predicate");
      const TensorType& a = as_tensor(operand_types[1], "select operand");
      const TensorType& b = as_tensor(operand_types[2], "select operand");
      if (pred.elem != ElementType::Pred) shape_error("select predicate must be pred");
      if (pred.shape != a.shape || !(a == b)) shape_error("select operand mismatch");
      return operand_types[1];
    }
    case HloOpKind::Add:
    case HloOpKind::Subtract:
    case HloOpKind::Multiply:
    case HloOpKind::Divide:
    case HloOpKind::Maximum:
    case HloOpKind::Lt:
    case HloOpKind::Le: {
      arity(2);
      const TensorType& a = as_tensor(operand_types[0], "elementwise operand");
      const TensorType& b = as_tensor(operand_types[1], "elementwise operand");
      if (!(a == b)) shape_error(std::string(kind_name(config.kind)) + " operand types differ");
      if (a.elem == ElementType::Pred) shape_error("arithmetic on pred");
      if (config.kind == HloOpKind::Lt || config.kind == HloOpKind::Le)
        return ValueType::make_tensor(ElementType::Pred, a.shape);
      return operand_types[0];
    }
  }
  shape_error("unhandled kind");
}

std::vector<Diagnostic> validate_hlo(const HloModule& m) {
  std::vector<Diagnostic> diags;
  auto diag = [&](const std::string& comp, const std::string& instr, const std::string& msg) {
    diags.push_back({"", comp, instr, msg});
  };
  if (m.entry < 0 || m.entry >= static_cast<int>(m.computations.size())) {
    diag("<module>", "", "missing entry computation");
    return diags;
  }
  for (const HloComputation& comp : m.computations) {
    if (comp.root < 0 || comp.root >= static_cast<int>(comp.instructions.size())) {
      diag(comp.name, "", "invalid root");
      continue;
    }
    // Parameters dense in index.
    std::set<int> param_indices;
    for (const HloInstruction& in : comp.instructions)
      if (in.config.kind == HloOpKind::Parameter)
        if (!param_indices.insert(in.config.index).second)
          diag(comp.name, in.name, "duplicate parameter index");
    for (int i = 0; i < static_cast<int>(param_indices.size()); ++i)
      if (!param_indices.count(i)) diag(comp.name, "", "parameter indices not dense");
    std::set<std::string> names;
    for (int i = 0; i < static_cast<int>(comp.instructions.size()); ++i) {
      const HloInstruction& in = comp.instructions[static_cast<size_t>(i)];
      if (!names.insert(in.name).second) diag(comp.name, in.name, "duplicate instruction name");
      std::vector<ValueType> operand_types;
      bool order_ok = true;
      for (int op : in.operands) {
        if (op < 0 || op >= i) {
          diag(comp.name, in.name, "operand does not precede its use");
          order_ok = false;
          break;
        }
        operand_types.push_back(comp.instructions[static_cast<size_t>(op)].type);
      }
      if (!order_ok) continue;
      try {
        ValueType derived = shape_infer(m, in.config, operand_types);
        if (!(derived == in.type))
          diag(comp.name, in.name,
               "stored type " + to_string(in.type) + " does not re-derive (shape_infer says " +
                   to_string(derived) + ")");
      } catch (const CompileError& e) {
        diag(comp.name, in.name, e.what());
      }
    }
  }
  // Computation reference graph must be acyclic.
  std::vector<int> state(m.computations.size(), 0);
  auto refs_of = [&](int c) {
    std::vector<int> refs;
    for (const HloInstruction& in : m.computations[static_cast<size_t>(c)].instructions)
      for (int r : {in.config.to_apply, in.config.cond_comp, in.config.body_comp, in.config.true_comp,
                    in.config.false_comp})
        if (r >= 0 && r < static_cast<int>(m.computations.size())) refs.push_back(r);
    return refs;
  };
  std::function<bool(int)> has_cycle = [&](int c) -> bool {
    if (state[static_cast<size_t>(c)] == 1) return true;
    if (state[static_cast<size_t>(c)] == 2) return false;
    state[static_cast<size_t>(c)] = 1;
    for (int r : refs_of(c))
      if (has_cycle(r)) return true;
    state[static_cast<size_t>(c)] = 2;
    return false;
  };
  for (int c = 0; c < static_cast<int>(m.computations.size()); ++c)
    if (state[static_cast<size_t>(c)] == 0 && has_cycle(c)) {
      diag(m.computations[static_cast<size_t>(c)].name, "", "computation reference cycle");
      break;
    }
  return diags;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string print_float_token(float v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string hlo_type_string(const ValueType& t) {
  if (t.is_tuple()) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < t.elements.size(); ++i) {
      if (i) os << ", ";
      os << hlo_type_string(t.elements[i]);
    }
    os << ')';
    return os.str();
  }
  std::ostringstream os;
  os << to_string(t.tensor);
  if (t.tensor.rank() > 0) {
    os << '{';
    for (int i = 0; i < t.tensor.rank(); ++i) {
      if (i) os << ',';
      os << i;
    }
    os << '}';
  }
  return os.str();
}

std::string dims_string(const std::vector<int64_t>& dims) {
  std::ostringstream os;
  os << '{';
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << '}';
  return os.str();
}

std::string hlo_element_string(const TensorValue& v, int64_t i) {
  switch (v.type.elem) {
    case ElementType::F32:
      return print_float_token(v.f32[static_cast<size_t>(i)]);
    case ElementType::S64:
      return std::to_string(v.s64[static_cast<size_t>(i)]);
    case ElementType::Pred:
      return v.pred[static_cast<size_t>(i)] ? "true" : "false";
  }
  return "?";
}

void hlo_dense_string(std::ostringstream& os, const TensorValue& v, int dim, int64_t& flat) {
  if (dim == v.type.rank()) {
    os << hlo_element_string(v, flat++);
    return;
  }
  os << '{';
  for (int64_t i = 0; i < v.type.shape[static_cast<size_t>(dim)]; ++i) {
    if (i) os << ',';
    hlo_dense_string(os, v, dim + 1, flat);
  }
  os << '}';
}

std::string hlo_literal_string(const TensorValue& v) {
  std::ostringstream os;
  int64_t flat = 0;
  hlo_dense_string(os, v, 0, flat);
  return os.str();
}

void print_instruction(std::ostringstream& os, const HloModule& m, const HloComputation& comp,
                       const HloInstruction& in, bool is_root) {
  os << "  ";
  if (is_root) os << "ROOT ";
  os << in.name << " = " << hlo_type_string(in.type) << ' ' << kind_name(in.config.kind) << '(';
  if (in.config.kind == HloOpKind::Parameter) {
    os << in.config.index;
  } else if (in.config.kind == HloOpKind::Constant) {
    os << hlo_literal_string(in.config.literal);
  } else {
    for (size_t i = 0; i < in.operands.size(); ++i) {
      if (i) os << ", ";
      os << comp.instructions[static_cast<size_t>(in.operands[i])].name;
    }
  }
  os << ')';
  auto comp_name = [&](int c) { return m.computations[static_cast<size_t>(c)].name; };
  switch (in.config.kind) {
    case HloOpKind::Dot:
      os << ", lhs_contracting_dims=" << dims_string(in.config.dnums.lhs_contracting)
         << ", rhs_contracting_dims=" << dims_string(in.config.dnums.rhs_contracting);
      if (!in.config.dnums.lhs_batch.empty())
        os << ", lhs_batch_dims=" << dims_string(in.config.dnums.lhs_batch)
           << ", rhs_batch_dims=" << dims_string(in.config.dnums.rhs_batch);
      break;
    case HloOpKind::Map:
    case HloOpKind::Reduce:
      os << ", dimensions=" << dims_string(in.config.dimensions)
         << ", to_apply=" << comp_name(in.config.to_apply);
      break;
    case HloOpKind::Broadcast:
      os << ", dimensions=" << dims_string(in.config.dimensions);
      break;
    case HloOpKind::Transpose:
      os << ", permutation=" << dims_string(in.config.permutation);
      break;
    case HloOpKind::GetTupleElement:
      os << ", index=" << in.config.index;
      break;
    case HloOpKind::While:
      os << ", condition=" << comp_name(in.config.cond_comp)
         << ", body=" << comp_name(in.config.body_comp);
      break;
    case HloOpKind::Conditional:
      os << ", true_computation=" << comp_name(in.config.true_comp)
         << ", false_computation=" << comp_name(in.config.false_comp);
      break;
    default:
      break;
  }
  os << '\n';
}

void print_computation(std::ostringstream& os, const HloModule& m, int c) {
  const HloComputation& comp = m.computations[static_cast<size_t>(c)];
  if (c == m.entry) os << "ENTRY ";
  os << comp.name << " {\n";
  for (int i = 0; i < static_cast<int>(comp.instructions.size()); ++i)
    print_instruction(os, m, comp, comp.instructions[static_cast<size_t>(i)], i == comp.root);
  os << "}\n";
}

}  // namespace

std::string print_hlo(const HloModule& m) {
  std::ostringstream os;
  bool first = true;
  for (int c = 0; c < static_cast<int>(m.computations.size()); ++c) {
    if (c == m.entry) continue;
    if (!first) os << '\n';
    first = false;
    print_computation(os, m, c);
  }
  if (m.entry >= 0) {
    if (!first) os << '\n';
    print_computation(os, m, m.entry);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct HloLexer {
  const std::string& text;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit HloLexer(const std::string& t) : text(t) {}

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
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) advance();
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
  /// Identifier that may contain hyphens (op kind names).
  std::string kind_ident() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && (ident_char(text[pos]) || text[pos] == '-')) advance();
    if (pos == start) fail("expected op kind");
    return text.substr(start, pos - start);
  }
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
  int64_t integer(const char* what) {
    std::string tok = number();
    int64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) fail(std::string("bad ") + what);
    return v;
  }
};

std::vector<int64_t> parse_dim_list(HloLexer& lx) {
  lx.expect_punct('{');
  std::vector<int64_t> dims;
  if (!lx.try_punct('}')) {
    do {
      dims.push_back(lx.integer("dimension"));
    } while (lx.try_punct(','));
    lx.expect_punct('}');
  }
  return dims;
}

ValueType parse_type(HloLexer& lx) {
  if (lx.try_punct('(')) {
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
    lx.fail("unknown element type '" + e + "'");
  lx.expect_punct('[');
  std::vector<int64_t> shape;
  if (!lx.try_punct(']')) {
    do {
      shape.push_back(lx.integer("dimension"));
    } while (lx.try_punct(','));
    lx.expect_punct(']');
  }
  if (!shape.empty() && lx.peek() == '{') parse_dim_list(lx);  // layout, default only
  return ValueType::make_tensor(elem, std::move(shape));
}

float parse_f32_token(HloLexer& lx, const std::string& tok) {
  if (tok == "inf") return INFINITY;
  if (tok == "-inf") return -INFINITY;
  if (tok == "nan") return NAN;
  char* end = nullptr;
  float v = std::strtof(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) lx.fail("bad f32 literal '" + tok + "'");
  return v;
}

void parse_dense(HloLexer& lx, TensorValue& out, int dim, int64_t& flat) {
  const TensorType& t = out.type;
  if (dim == t.rank()) {
    std::string tok;
    if (lx.peek() == 't' || lx.peek() == 'f')
      tok = lx.ident("literal");
    else
      tok = lx.number();
    switch (t.elem) {
      case ElementType::F32:
        out.f32[static_cast<size_t>(flat)] = parse_f32_token(lx, tok);
        break;
      case ElementType::S64: {
        int64_t v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) lx.fail("bad s64 literal");
        out.s64[static_cast<size_t>(flat)] = v;
        break;
      }
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
  lx.expect_punct('{');
  for (int64_t i = 0; i < t.shape[static_cast<size_t>(dim)]; ++i) {
    if (i) lx.expect_punct(',');
    parse_dense(lx, out, dim + 1, flat);
  }
  lx.expect_punct('}');
}

HloOpKind kind_from_name(HloLexer& lx, const std::string& name) {
  static const std::map<std::string, HloOpKind> kinds = {
      {"parameter", HloOpKind::Parameter},
      {"constant", HloOpKind::Constant},
      {"dot", HloOpKind::Dot},
      {"map", HloOpKind::Map},
      {"reduce", HloOpKind::Reduce},
      {"broadcast", HloOpKind::Broadcast},
      {"transpose", HloOpKind::Transpose},
      {"reshape", HloOpKind::Reshape},
      {"tuple", HloOpKind::Tuple},
      {"get-tuple-element", HloOpKind::GetTupleElement},
      {"conditional", HloOpKind::Conditional},
      {"while", HloOpKind::While},
      {"rng", HloOpKind::Rng},
      {"add", HloOpKind::Add},
      {"subtract", HloOpKind::Subtract},
      {"multiply", HloOpKind::Multiply},
      {"divide", HloOpKind::Divide},
      {"maximum", HloOpKind::Maximum},
      {"exponential", HloOpKind::Exponential},
      {"less-than", HloOpKind::Lt},
      {"less-than-or-equal-to", HloOpKind::Le},
      {"select", HloOpKind::Select},
  };
  auto it = kinds.find(name);
  if (it == kinds.end()) lx.fail("unknown op kind '" + name + "'");
  return it->second;
}

}  // namespace

HloModule parse_hlo(const std::string& text) {
  // First pass: collect computation names (to_apply may reference forward).
  std::map<std::string, int> comp_index;
  std::vector<std::string> comp_names;
  {
    HloLexer lx(text);
    while (!lx.eof()) {
      std::string name = lx.ident("computation name");
      if (name == "ENTRY") name = lx.ident("computation name");
      if (comp_index.count(name)) lx.fail("duplicate computation '" + name + "'");
      comp_index[name] = static_cast<int>(comp_names.size());
      comp_names.push_back(name);
      lx.expect_punct('{');
      int depth = 1;
      while (depth > 0) {
        if (lx.eof()) lx.fail("unterminated computation '" + name + "'");
        char c = lx.peek();
        if (c == '{') depth++;
        if (c == '}') depth--;
        lx.advance();
      }
    }
  }

  HloModule m;
  m.computations.resize(comp_names.size());
  for (size_t i = 0; i < comp_names.size(); ++i) m.computations[i].name = comp_names[i];

  HloLexer lx(text);
  int ci = -1;
  while (!lx.eof()) {
    ++ci;
    std::string name = lx.ident("computation name");
    bool entry = name == "ENTRY";
    if (entry) name = lx.ident("computation name");
    if (entry) {
      if (m.entry >= 0) lx.fail("multiple ENTRY computations");
      m.entry = ci;
    }
    HloComputation& comp = m.computations[static_cast<size_t>(ci)];
    std::map<std::string, int> instr_index;
    lx.expect_punct('{');
    while (!lx.try_punct('}')) {
      bool root = false;
      std::string iname = lx.ident("instruction name");
      if (iname == "ROOT") {
        root = true;
        iname = lx.ident("instruction name");
      }
      if (instr_index.count(iname)) lx.fail("duplicate instruction '" + iname + "'");
      lx.expect_punct('=');
      ValueType type = parse_type(lx);
      std::string kname = lx.kind_ident();
      HloInstruction in;
      in.name = iname;
      in.type = type;
      in.config.kind = kind_from_name(lx, kname);
      lx.expect_punct('(');
      if (in.config.kind == HloOpKind::Parameter) {
        in.config.index = static_cast<int>(lx.integer("parameter index"));
        in.config.param_type = type;
        lx.expect_punct(')');
      } else if (in.config.kind == HloOpKind::Constant) {
        if (!type.is_tensor()) lx.fail("constant type must be a tensor");
        in.config.literal = TensorValue::zeros(type.tensor);
        int64_t flat = 0;
        parse_dense(lx, in.config.literal, 0, flat);
        lx.expect_punct(')');
      } else if (!lx.try_punct(')')) {
        do {
          std::string opname = lx.ident("operand");
          auto it = instr_index.find(opname);
          if (it == instr_index.end()) lx.fail("unknown operand '" + opname + "'");
          in.operands.push_back(it->second);
        } while (lx.try_punct(','));
        lx.expect_punct(')');
      }
      // Attributes.
      while (lx.try_punct(',')) {
        std::string attr = lx.ident("attribute");
        lx.expect_punct('=');
        auto comp_ref = [&]() {
          std::string n = lx.ident("computation name");
          auto it = comp_index.find(n);
          if (it == comp_index.end()) lx.fail("unknown computation '" + n + "'");
          return it->second;
        };
        if (attr == "dimensions")
          in.config.dimensions = parse_dim_list(lx);
        else if (attr == "permutation")
          in.config.permutation = parse_dim_list(lx);
        else if (attr == "lhs_contracting_dims")
          in.config.dnums.lhs_contracting = parse_dim_list(lx);
        else if (attr == "rhs_contracting_dims")
          in.config.dnums.rhs_contracting = parse_dim_list(lx);
        else if (attr == "lhs_batch_dims")
          in.config.dnums.lhs_batch = parse_dim_list(lx);
        else if (attr == "rhs_batch_dims")
          in.config.dnums.rhs_batch = parse_dim_list(lx);
        else if (attr == "index")
          in.config.index = static_cast<int>(lx.integer("index"));
        else if (attr == "to_apply")
          in.config.to_apply = comp_ref();
        else if (attr == "condition")
          in.config.cond_comp = comp_ref();
        else if (attr == "body")
          in.config.body_comp = comp_ref();
        else if (attr == "true_computation")
          in.config.true_comp = comp_ref();
        else if (attr == "false_computation")
          in.config.false_comp = comp_ref();
        else
          lx.fail("unknown attribute '" + attr + "'");
      }
      if (in.config.kind == HloOpKind::Broadcast || in.config.kind == HloOpKind::Reshape ||
          in.config.kind == HloOpKind::Rng) {
        if (!type.is_tensor()) lx.fail("result type must be a tensor");
        in.config.shape = type.tensor.shape;
        in.config.elem = type.tensor.elem;
      }
      instr_index[iname] = static_cast<int>(comp.instructions.size());
      if (root) {
        if (comp.root >= 0) lx.fail("multiple ROOT instructions");
        comp.root = static_cast<int>(comp.instructions.size());
      }
      comp.instructions.push_back(std::move(in));
    }
    if (comp.root < 0) lx.fail("computation '" + name + "' has no ROOT");
  }
  if (m.entry < 0) throw ParseError(1, 1, "no ENTRY computation");
  return m;
}

ValueType parse_hlo_type(const std::string& text) {
  HloLexer lx(text);
  ValueType t = parse_type(lx);
  if (!lx.eof()) lx.fail("trailing characters after type");
  return t;
}

std::vector<ValueType> parse_signature(const std::string& text) {
  HloLexer lx(text);
  std::vector<ValueType> types;
  if (lx.eof()) return types;
  do {
    types.push_back(parse_type(lx));
  } while (lx.try_punct(','));
  if (!lx.eof()) lx.fail("trailing characters after signature");
  return types;
}

// ---------------------------------------------------------------------------
// Structural isomorphism

namespace {

struct IsoState {
  const HloModule& a;
  const HloModule& b;
  std::map<int, int> comp_map;  // a comp -> b comp
  std::map<std::pair<int, int>, int> instr_map;  // (a comp, a instr) -> b instr

  bool match_computation(int ca, int cb);

  bool match_config(int ca, const HloOpConfig& x, const HloOpConfig& y) {
    (void)ca;
    if (x.kind != y.kind) return false;
    if (x.index != y.index) return false;
    if (!(x.param_type == y.param_type)) return false;
    if (!(x.literal == y.literal)) return false;
    if (!(x.dnums == y.dnums)) return false;
    if (x.dimensions != y.dimensions || x.permutation != y.permutation || x.shape != y.shape)
      return false;
    if (x.elem != y.elem) return false;
    const std::pair<int, int> ref_pairs[] = {{x.to_apply, y.to_apply},
                                             {x.cond_comp, y.cond_comp},
                                             {x.body_comp, y.body_comp},
                                             {x.true_comp, y.true_comp},
                                             {x.false_comp, y.false_comp}};
    for (auto [ra, rb] : ref_pairs) {
      if ((ra < 0) != (rb < 0)) return false;
      if (ra >= 0 && !match_computation(ra, rb)) return false;
    }
    return true;
  }

  bool match_instruction(int ca, int cb, int ia, int ib) {
    auto key = std::make_pair(ca, ia);
    auto it = instr_map.find(key);
    if (it != instr_map.end()) return it->second == ib;
    const HloInstruction& x = a.computations[static_cast<size_t>(ca)].instructions[static_cast<size_t>(ia)];
    const HloInstruction& y = b.computations[static_cast<size_t>(cb)].instructions[static_cast<size_t>(ib)];
    if (!(x.type == y.type)) return false;
    if (x.operands.size() != y.operands.size()) return false;
    instr_map[key] = ib;  // optimistic; graphs are DAGs so cycles cannot occur
    if (!match_config(ca, x.config, y.config)) return false;
    for (size_t i = 0; i < x.operands.size(); ++i)
      if (!match_instruction(ca, cb, x.operands[i], y.operands[i])) return false;
    return true;
  }
};

bool IsoState::match_computation(int ca, int cb) {
  auto it = comp_map.find(ca);
  if (it != comp_map.end()) return it->second == cb;
  const HloComputation& x = a.computations[static_cast<size_t>(ca)];
  const HloComputation& y = b.computations[static_cast<size_t>(cb)];
  if (x.instructions.size() != y.instructions.size()) return false;
  if (x.num_parameters() != y.num_parameters()) return false;
  comp_map[ca] = cb;
  if (!match_instruction(ca, cb, x.root, y.root)) return false;
  // Parameters must correspond even if dead.
  for (int i = 0; i < static_cast<int>(x.instructions.size()); ++i) {
    if (x.instructions[static_cast<size_t>(i)].config.kind != HloOpKind::Parameter) continue;
    int idx = x.instructions[static_cast<size_t>(i)].config.index;
    if (!(x.instructions[static_cast<size_t>(i)].type == y.parameter_type(idx))) return false;
  }
  return true;
}

}  // namespace

bool structurally_equal(const HloModule& a, const HloModule& b) {
  if (a.entry < 0 || b.entry < 0) return false;
  IsoState st{a, b, {}, {}};
  if (!st.match_computation(a.entry, b.entry)) return false;
  // The instruction match must be injective per computation.
  for (auto& [ca, cb] : st.comp_map) {
    std::set<int> targets;
    size_t count = 0;
    for (auto& [key, ib] : st.instr_map) {
      if (key.first != ca) continue;
      ++count;
      if (!targets.insert(ib).second) return false;
    }
    (void)cb;
    (void)count;
  }
  return true;
}

}  // namespace mhlc
