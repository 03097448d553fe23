// SPDX-License-Identifier: Apache-2.0
//
// Region discovery over the frontend CFG: strongly connected components
// become Loop regions, conditional diamonds become If regions delimited
// by their immediate postdominator, and everything else stays a linear
// block sequence. Only reducible, single-exit loop shapes are accepted.

#pragma once

#include <string>
#include <vector>

#include "mhlc/errors.hpp"
#include "mhlc/frontend.hpp"

namespace mhlc {

struct Region {
  enum class Kind : uint8_t { Block, If, Loop };
  Kind kind = Kind::Block;

  // Block: one basic block, lowered inline.
  int block = -1;

  // If: a conditional branch at `block` whose arms rejoin at
  // `merge_block` (the block holding the φ nodes). merge_block == -1
  // means both arms end in a return.
  std::vector<Region> then_region;
  std::vector<Region> else_region;
  int merge_block = -1;

  // Loop: `block` is the header, holding the carried φ nodes and the
  // exit branch. The body excludes the header; `continue_on_true` says
  // whether the branch condition true-edge stays in the loop.
  std::vector<Region> body;
  bool continue_on_true = true;
  int exit_block = -1;
};

/// Blocks mentioned by a region sequence, including nested ones.
void collect_region_blocks(const std::vector<Region>& seq, std::vector<int>& out);

/// Structures the reachable CFG of `fn` into a region sequence.
/// Throws CompileError on irreducible control flow, loops whose exit is
/// not the header branch, or multi-exit loops.
std::vector<Region> detect_regions(const FrontendFunction& fn);

std::string print_regions(const FrontendFunction& fn, const std::vector<Region>& seq);

}  // namespace mhlc
