// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: compile, run, optimize, count, differentiate and
// trace programs of the mini tensor language.
//
// Exit codes: 0 success; 1 parse error or input mismatch; 2 offload
// failure under --strict or unsupported gradient; 3 internal error.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhlc/dynamic.hpp"
#include "mhlc/frontend.hpp"
#include "mhlc/grad.hpp"
#include "mhlc/infer.hpp"
#include "mhlc/interp.hpp"
#include "mhlc/lower.hpp"
#include "mhlc/opt.hpp"

using nlohmann::json;
using namespace mhlc;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Shared options across subcommands.
struct Options {
  std::string file;
  std::string entry;
  std::string sig;
  std::string passes;
  std::string format = "text";
  std::string emit = "frontend";
  std::string output;
  std::vector<std::string> inputs;
  bool opt = false;
  bool strict = false;
  bool stats = false;
  bool dynamic = false;
  uint64_t seed = 0;
};

FrontendModule load(const Options& o) { return parse_program(read_file(o.file)); }

const FrontendFunction& pick_entry(const FrontendModule& m, const Options& o) {
  if (!o.entry.empty()) {
    const FrontendFunction* f = m.find(o.entry);
    if (!f) throw UsageError("unknown function '@" + o.entry + "'");
    return *f;
  }
  if (m.functions.size() == 1) return m.functions[0];
  throw UsageError("--entry is required when the module has several functions");
}

std::vector<ValueType> signature(const FrontendFunction& fn, const Options& o) {
  if (!o.sig.empty()) {
    std::vector<ValueType> types = parse_signature(o.sig);
    if (types.size() != fn.params.size())
      throw UsageError("--sig lists " + std::to_string(types.size()) + " types, '@" + fn.name +
                       "' has " + std::to_string(fn.params.size()) + " parameters");
    return types;
  }
  std::vector<ValueType> types;
  for (const Param& p : fn.params) {
    if (!p.type)
      throw UsageError("parameter '%" + p.name + "' of '@" + fn.name +
                       "' has no declared type; pass --sig");
    types.push_back(*p.type);
  }
  return types;
}

std::vector<std::string> pass_list(const Options& o) {
  if (o.passes.empty()) return default_passes();
  std::vector<std::string> passes;
  std::stringstream ss(o.passes);
  std::string p;
  while (std::getline(ss, p, ',')) passes.push_back(p);
  return passes;
}

// -- input literals ----------------------------------------------------------

void fill_tensor(const json& j, const TensorType& t, TensorValue& out, int dim, int64_t base) {
  if (dim == t.rank()) {
    int64_t i = base;
    switch (t.elem) {
      case ElementType::F32:
        if (!j.is_number()) throw UsageError("expected a number literal");
        out.f32[static_cast<size_t>(i)] = j.get<float>();
        break;
      case ElementType::S64:
        if (!j.is_number_integer()) throw UsageError("expected an integer literal");
        out.s64[static_cast<size_t>(i)] = j.get<int64_t>();
        break;
      case ElementType::Pred:
        if (!j.is_boolean()) throw UsageError("expected a boolean literal");
        out.pred[static_cast<size_t>(i)] = j.get<bool>() ? 1 : 0;
        break;
    }
    return;
  }
  if (!j.is_array() || static_cast<int64_t>(j.size()) != t.shape[static_cast<size_t>(dim)])
    throw UsageError("literal does not match shape " + to_string(t));
  std::vector<int64_t> strides = strides_of(t.shape);
  for (size_t k = 0; k < j.size(); ++k)
    fill_tensor(j[k], t, out, dim + 1,
                base + static_cast<int64_t>(k) * strides[static_cast<size_t>(dim)]);
}

Value parse_input(const json& j, const ValueType& t) {
  if (t.kind == ValueType::Kind::Tuple) {
    if (!j.is_array() || j.size() != t.elements.size())
      throw UsageError("tuple literal does not match " + to_string(t));
    std::vector<Value> elems;
    for (size_t i = 0; i < j.size(); ++i) elems.push_back(parse_input(j[i], t.elements[i]));
    return Value(std::move(elems));
  }
  if (t.kind != ValueType::Kind::Tensor) throw UsageError("cannot pass a function reference");
  TensorValue v = TensorValue::zeros(t.tensor);
  fill_tensor(j, t.tensor, v, 0, 0);
  return Value(std::move(v));
}

std::vector<Value> parse_inputs(const Options& o, const std::vector<ValueType>& types) {
  if (o.inputs.size() != types.size())
    throw UsageError("expected " + std::to_string(types.size()) + " input literals, got " +
                     std::to_string(o.inputs.size()));
  std::vector<Value> values;
  for (size_t i = 0; i < types.size(); ++i) {
    std::string text = o.inputs[i];
    if (!text.empty() && text[0] == '@') text = read_file(text.substr(1));
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw UsageError("input " + std::to_string(i) + ": " + e.what());
    }
    values.push_back(parse_input(j, types[i]));
  }
  return values;
}

// -- output formatting -------------------------------------------------------

json tensor_to_json(const TensorValue& v, int dim, int64_t base) {
  if (dim == v.type.rank()) {
    switch (v.type.elem) {
      case ElementType::F32:
        return v.f32[static_cast<size_t>(base)];
      case ElementType::S64:
        return v.s64[static_cast<size_t>(base)];
      case ElementType::Pred:
        return v.pred[static_cast<size_t>(base)] != 0;
    }
  }
  std::vector<int64_t> strides = strides_of(v.type.shape);
  json arr = json::array();
  for (int64_t k = 0; k < v.type.shape[static_cast<size_t>(dim)]; ++k)
    arr.push_back(tensor_to_json(v, dim + 1, base + k * strides[static_cast<size_t>(dim)]));
  return arr;
}

json value_to_json(const Value& v) {
  if (v.is_tensor()) return tensor_to_json(v.tensor(), 0, 0);
  json arr = json::array();
  for (const Value& e : v.elements()) arr.push_back(value_to_json(e));
  return arr;
}

json stats_to_json(const DeviceStats& s) {
  return json{{"executions", s.executions},
              {"transfers_in", s.transfers_in},
              {"transfers_out", s.transfers_out},
              {"live_allocations", s.live_allocations}};
}

json count_to_json(const CountReport& r) {
  json kinds = json::array();
  for (const KindCount& k : r.kinds)
    kinds.push_back(json{{"kind", k.kind}, {"entry", k.entry}, {"total", k.total}});
  return json{{"kinds", kinds}, {"entry_total", r.entry_total}, {"grand_total", r.grand_total}};
}

void emit_text(const Options& o, const std::string& text) {
  if (o.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(o.output, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + o.output + "'");
  out << text;
}

// -- commands ----------------------------------------------------------------

int cmd_compile(const Options& o, bool force_opt) {
  FrontendModule m = load(o);
  const FrontendFunction& fn = pick_entry(m, o);
  HloModule h = compile(m, fn, signature(fn, o));
  if (o.opt || force_opt) h = run_pipeline(std::move(h), pass_list(o));
  emit_text(o, print_hlo(h));
  return 0;
}

int cmd_run(const Options& o) {
  FrontendModule m = load(o);
  const FrontendFunction& fn = pick_entry(m, o);
  std::vector<ValueType> types = signature(fn, o);
  std::vector<Value> inputs = parse_inputs(o, types);
  Device dev(o.seed);
  Value result;
  if (o.dynamic) {
    result = dynamic_eval(m, fn.name, inputs, dev);
  } else {
    try {
      HloModule h = compile(m, fn, types);
      if (o.opt) h = run_pipeline(std::move(h), pass_list(o));
      result = run_module(dev, h, inputs);
    } catch (const OffloadError& e) {
      if (o.strict) throw;
      result = dynamic_eval(m, fn.name, inputs, dev);
    }
  }
  if (o.format == "json")
    std::cout << value_to_json(result).dump() << '\n';
  else
    std::cout << print_value(result) << '\n';
  if (o.stats) std::cout << stats_to_json(dev.stats()).dump() << '\n';
  return 0;
}

int cmd_opt(const Options& o) { return cmd_compile(o, true); }

int cmd_count(const Options& o) {
  FrontendModule m = load(o);
  const FrontendFunction& fn = pick_entry(m, o);
  HloModule h = compile(m, fn, signature(fn, o));
  CountReport unopt = count_instructions(h);
  CountReport opt = count_instructions(run_pipeline(std::move(h), pass_list(o)));
  if (o.format == "json") {
    std::cout << json{{"unopt", count_to_json(unopt)}, {"opt", count_to_json(opt)}}.dump()
              << '\n';
  } else {
    std::cout << "Unopt\n" << to_text(unopt) << "Opt\n" << to_text(opt);
  }
  return 0;
}

int cmd_grad(const Options& o) {
  FrontendModule m = load(o);
  const FrontendFunction& fn = pick_entry(m, o);
  GradRequest req;
  req.entry = fn.name;
  // Differentiate with respect to every float tensor parameter.
  for (size_t i = 0; i < fn.params.size(); ++i) {
    const std::optional<ValueType>& t = fn.params[i].type;
    if (t && t->kind == ValueType::Kind::Tensor && t->tensor.elem == ElementType::F32)
      req.wrt.push_back(static_cast<int>(i));
  }
  GradResult g;
  try {
    g = grad(m, req);
  } catch (const CompileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (o.emit == "hlo") {
    Options go = o;
    go.entry = g.function;
    const FrontendFunction& gfn = *g.module.find(g.function);
    HloModule h = compile(g.module, gfn, signature(gfn, go));
    if (o.opt) h = run_pipeline(std::move(h), pass_list(o));
    emit_text(o, print_hlo(h));
  } else if (o.emit == "frontend") {
    std::string text;
    for (size_t i = m.functions.size(); i < g.module.functions.size(); ++i)
      text += print_frontend(g.module.functions[i]);
    emit_text(o, text);
  } else {
    throw UsageError("--emit must be 'frontend' or 'hlo'");
  }
  return 0;
}

int cmd_trace(const Options& o) {
  FrontendModule m = load(o);
  const FrontendFunction& fn = pick_entry(m, o);
  std::vector<ValueType> types = signature(fn, o);
  std::vector<Value> inputs = parse_inputs(o, types);
  Device dev(o.seed);
  DynamicOptions dopts;
  dopts.trace = [](const std::string& line) { std::cout << line << '\n'; };
  Value result = dynamic_eval(m, fn.name, inputs, dev, dopts);
  if (o.format == "json")
    std::cout << value_to_json(result).dump() << '\n';
  else
    std::cout << print_value(result) << '\n';
  std::cout << stats_to_json(dev.stats()).dump() << '\n';
  return 0;
}

void add_common(CLI::App* cmd, Options& o, bool takes_inputs) {
  cmd->add_option("file", o.file, "program file (.mhl)")->required();
  // Input literals are taken from the remaining arguments so JSON arrays
  // survive untouched (option values would be split as containers).
  if (takes_inputs) cmd->allow_extras();
  cmd->add_option("--entry", o.entry, "entry function name");
  cmd->add_option("--sig", o.sig, "argument types, e.g. \"f32[10,10],f32[10]\"");
  cmd->add_option("--passes", o.passes, "comma-separated pass list");
  cmd->add_flag("--opt", o.opt, "run the optimization pipeline");
  cmd->add_flag("--strict", o.strict, "fail instead of falling back to per-op execution");
  cmd->add_option("--seed", o.seed, "random number generator seed");
  cmd->add_flag("--stats", o.stats, "print device statistics as JSON");
  cmd->add_option("--format", o.format, "output format: text|json")
      ->check(CLI::IsMember({"text", "json"}));
  cmd->add_option("--emit", o.emit, "grad output: frontend|hlo")
      ->check(CLI::IsMember({"frontend", "hlo"}));
  cmd->add_flag("--dynamic", o.dynamic, "force per-op dynamic execution");
  cmd->add_option("-o", o.output, "write output to a file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compiler and reference executor for the mini tensor language"};
  app.require_subcommand(1);
  Options o;
  CLI::App* compile_cmd = app.add_subcommand("compile", "print the compiled module");
  CLI::App* run_cmd = app.add_subcommand("run", "compile and execute");
  CLI::App* opt_cmd = app.add_subcommand("opt", "print the optimized module");
  CLI::App* count_cmd = app.add_subcommand("count", "instruction counts before/after passes");
  CLI::App* grad_cmd = app.add_subcommand("grad", "emit the gradient function");
  CLI::App* trace_cmd = app.add_subcommand("trace", "run per-op with an execution log");
  add_common(compile_cmd, o, false);
  add_common(run_cmd, o, true);
  add_common(opt_cmd, o, false);
  add_common(count_cmd, o, false);
  add_common(grad_cmd, o, false);
  add_common(trace_cmd, o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  try {
    for (CLI::App* cmd : {run_cmd, trace_cmd})
      if (cmd->parsed()) {
        o.inputs = cmd->remaining();
        for (const std::string& s : o.inputs)
          if (s.rfind("--", 0) == 0) throw UsageError("unknown flag '" + s + "'");
      }
    if (compile_cmd->parsed()) return cmd_compile(o, false);
    if (run_cmd->parsed()) return cmd_run(o);
    if (opt_cmd->parsed()) return cmd_opt(o);
    if (count_cmd->parsed()) return cmd_count(o);
    if (grad_cmd->parsed()) return cmd_grad(o);
    if (trace_cmd->parsed()) return cmd_trace(o);
    return 3;
  } catch (const OffloadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const CompileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
