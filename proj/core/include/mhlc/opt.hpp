// SPDX-License-Identifier: Apache-2.0
//
// Cleanup passes over the linear-algebra IR (constant folding, tuple
// forwarding, map inlining, dead code elimination, computation
// deduplication) and the per-kind instruction count report.

#pragma once

#include <string>
#include <vector>

#include "mhlc/hlo.hpp"

namespace mhlc {

/// Replaces pure instructions whose operands are all constants with the
/// evaluated constant. Rng is never folded.
HloModule fold_constants(HloModule m);

/// Rewrites get-tuple-element(tuple(x...), i) to the forwarded element
/// and drops tuple/get-tuple-element instructions that become dead.
HloModule simplify_tuples(HloModule m);

/// Replaces Map over a straight-line elementwise callback with the
/// equivalent chain of full-shape elementwise instructions. Scalar
/// constants inside the callback are broadcast to the map shape.
/// Non-inlinable maps are left intact.
HloModule inline_maps(HloModule m);

/// Removes instructions unreachable from their computation root and
/// computations unreachable from the entry. Parameters are always kept.
HloModule dce(HloModule m);

/// Merges structurally identical computations (names ignored, operand
/// order significant) and retargets references.
HloModule dedup_computations(HloModule m);

/// Pass names accepted by run_pipeline, in the default execution order.
const std::vector<std::string>& default_passes();

/// Runs the named passes in order. Throws CompileError on an unknown
/// pass name.
HloModule run_pipeline(HloModule m, const std::vector<std::string>& passes);

/// Instruction counts per op kind, split into entry computation (E) and
/// all computations (T).
struct KindCount {
  std::string kind;
  int64_t entry = 0;
  int64_t total = 0;
};

struct CountReport {
  std::vector<KindCount> kinds;  // sorted by kind name
  int64_t entry_total = 0;
  int64_t grand_total = 0;
};

CountReport count_instructions(const HloModule& m);

/// Aligned text table of a count report.
std::string to_text(const CountReport& r);

}  // namespace mhlc
