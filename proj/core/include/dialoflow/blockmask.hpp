#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dialoflow/graph.hpp"

namespace dialoflow::blockmask {

// Block-wise attention extents. back/forward are measured in blocks; the
// symmetric pattern of the underlying mask formula is (tau, tau). (0,0)
// isolates blocks, (1,0) is the history pattern, (0,1) the future pattern.
struct MaskSpec {
  int64_t block = 1;    // b, tokens per block
  int64_t back = 0;     // tau_b
  int64_t forward = 0;  // tau_f

  void validate() const;
  bool allows(int64_t i, int64_t j) const;  // predicate form, no materialization
};

struct BlockMask {
  int64_t n = 0;
  MaskSpec spec;
  nn::BoolMatrix matrix;
};

// block(i) = floor(i / b)
int64_t block_of(int64_t i, int64_t b);

// Materializes M[i][j] = 1 iff -back <= block(j) - block(i) <= forward.
// A ragged final block (b not dividing n) keeps all its tokens.
BlockMask build_mask(int64_t n, const MaskSpec& spec);

// Accumulated receptive field of stacked masked layers: sums of extents.
// All specs must share the block size.
struct ReceptiveField {
  int64_t back = 0;
  int64_t forward = 0;
};
ReceptiveField receptive_field(std::span<const MaskSpec> layers);

// Boolean reachability product M_last * ... * M_first: out[i][j] = 1 iff
// information can flow from position j to position i through the stack.
BlockMask compose_reachability(std::span<const BlockMask> masks);

}  // namespace dialoflow::blockmask
