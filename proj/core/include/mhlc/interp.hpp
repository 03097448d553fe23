// SPDX-License-Identifier: Apache-2.0
//
// Reference interpreter for the linear-algebra IR, plus a simulated
// device that owns values behind opaque handles and keeps transfer and
// execution statistics.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mhlc/errors.hpp"
#include "mhlc/hlo.hpp"
#include "mhlc/value.hpp"

namespace mhlc {

/// Counter-based splitmix64 generator: value i of stream `seed` is a pure
/// function of (seed, i), so runs are reproducible regardless of how the
/// consumers interleave.
struct RngState {
  uint64_t seed = 0;
  uint64_t counter = 0;

  explicit RngState(uint64_t s = 0) : seed(s) {}

  uint64_t next_u64();
  /// Uniform in [0, 1).
  float next_f32();
};

struct EvalContext {
  const HloModule* module = nullptr;
  RngState* rng = nullptr;
  int64_t while_cap = int64_t{1} << 20;
};

/// Evaluates a single op on materialized operands. Result shapes are
/// computed by the kernels themselves, independently of shape_infer.
/// Throws RuntimeError on malformed input or a while cap overrun.
Value evaluate_op(const EvalContext& ctx, const HloOpConfig& config,
                  const std::vector<Value>& operands);

/// Evaluates a computation of `ctx.module` on the given arguments.
Value evaluate_computation(const EvalContext& ctx, int computation,
                           const std::vector<Value>& args);

using DeviceHandle = int64_t;

struct DeviceStats {
  int64_t executions = 0;
  int64_t transfers_in = 0;
  int64_t transfers_out = 0;
  int64_t live_allocations = 0;
};

/// Simulated accelerator: values live behind opaque handles, moving data
/// on or off counts as a transfer, and every executed program or op
/// counts as one execution. Thread safe.
class Device {
 public:
  explicit Device(uint64_t seed = 0) : rng_(seed) {}

  /// Host-to-device copy. Counts one transfer in.
  DeviceHandle transfer(Value v);
  /// Device-to-host copy. Counts one transfer out. The handle stays live.
  Value fetch(DeviceHandle h);
  /// Frees a handle. Throws RuntimeError if unknown.
  void release(DeviceHandle h);

  /// Runs one op on device-resident operands. Counts one execution.
  /// The result type is checked against shape_infer.
  DeviceHandle execute_op(const HloModule& m, const HloOpConfig& config,
                          const std::vector<DeviceHandle>& operands);

  /// Runs a whole module's entry computation. Counts one execution.
  DeviceHandle execute_module(const HloModule& m, const std::vector<DeviceHandle>& args);

  DeviceStats stats() const;

 private:
  Value lookup(DeviceHandle h) const;

  mutable std::mutex mu_;
  std::map<DeviceHandle, Value> live_;
  DeviceHandle next_handle_ = 1;
  DeviceStats stats_;
  RngState rng_;
};

/// Transfers `args` in, executes the entry computation once, fetches the
/// result and releases all device state created by this call.
Value run_module(Device& dev, const HloModule& m, const std::vector<Value>& args);

}  // namespace mhlc
