// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation as a frontend-to-frontend transform:
// the gradient of a scalar-valued straight-line function is emitted as
// ordinary frontend code and compiles through the same pipeline.

#pragma once

#include <string>
#include <vector>

#include "mhlc/frontend.hpp"
#include "mhlc/value.hpp"

namespace mhlc {

struct GradRequest {
  std::string entry;
  std::vector<int> wrt;  // parameter indices; must be non-empty
  double seed = 1.0;     // cotangent of the scalar output
};

/// The input module extended with the generated gradient function (named
/// `<entry>_grad`) and any helper callbacks it needs.
struct GradResult {
  FrontendModule module;
  std::string function;
};

/// Differentiates `entry` (scalar f32 output, straight-line after
/// inlining nested calls, declared parameter types) with respect to the
/// given parameters. The gradient function keeps the primal signature
/// and returns a tuple with one cotangent per wrt index.
/// Throws CompileError on control flow or non-differentiable builtins.
GradResult grad(const FrontendModule& m, const GradRequest& req);

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool ok = false;
};

/// Compares the generated gradient against central finite differences at
/// `inputs` (step scaled by coordinate magnitude).
GradCheckReport check_gradient(const FrontendModule& m, const GradRequest& req,
                               const std::vector<Value>& inputs, double step = 1e-3,
                               double tol = 1e-3);

}  // namespace mhlc
