// SPDX-License-Identifier: Apache-2.0
//
// Compilation of inferred frontend functions into HLO modules: builtin
// rewriting, callback outlining, and functional control flow emission
// over the structured region tree.

#pragma once

#include <string>
#include <vector>

#include "mhlc/frontend.hpp"
#include "mhlc/hlo.hpp"
#include "mhlc/infer.hpp"

namespace mhlc {

/// Raised when a function cannot be compiled as one static region.
class OffloadError : public CompileError {
 public:
  OffloadError(const std::string& fn, OffloadReport report);
  const OffloadReport& report() const { return report_; }

 private:
  OffloadReport report_;
};

/// Compiles `fn` applied to arguments of the given types. The entry
/// computation has one parameter per frontend parameter, in order.
/// Throws OffloadError when check_offloadable fails, CompileError on
/// unsupported control flow.
HloModule compile(const FrontendModule& m, const FrontendFunction& fn,
                  const std::vector<ValueType>& arg_types);

/// Convenience: look up the entry by name first.
HloModule compile(const FrontendModule& m, const std::string& entry,
                  const std::vector<ValueType>& arg_types);

}  // namespace mhlc
