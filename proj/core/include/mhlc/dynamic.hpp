// SPDX-License-Identifier: Apache-2.0
//
// Dynamic evaluation of frontend programs: the IR is interpreted on the
// host, control flow runs concretely, and every builtin is lowered on
// the fly into device ops executed one at a time. The slow path that
// whole-module compilation exists to avoid.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mhlc/frontend.hpp"
#include "mhlc/interp.hpp"

namespace mhlc {

struct DynamicOptions {
  /// Called once per issued device op with a formatted trace line.
  std::function<void(const std::string&)> trace;
  /// Cap on host-interpreted block transitions, to stop runaway loops.
  int64_t step_cap = int64_t{1} << 20;
};

/// Evaluates `entry` applied to `inputs`, executing each lowered op on
/// `dev` immediately. Equals run_module of the compiled program when the
/// program is offloadable. Device state created by the call is released
/// before returning. Throws RuntimeError on bad inputs, branches on
/// non-pred values, or a step cap overrun.
Value dynamic_eval(const FrontendModule& m, const std::string& entry,
                   const std::vector<Value>& inputs, Device& dev,
                   const DynamicOptions& opts = {});

}  // namespace mhlc
