#pragma once

#include <string>

#include "dialoflow/grad_check.hpp"
#include "dialoflow/graph.hpp"
#include "dialoflow/param_store.hpp"

namespace dialoflow::nn {

// Weight names for one pre-LN transformer block under `prefix`:
//   ln1.{g,b} wq wk wv wo ln2.{g,b} w1 b1 w2 b2
void init_transformer_block(ParamStore& store, const std::string& prefix, int64_t d, int64_t d_ff,
                            RngState& rng, double w_std, double resid_scale);

void init_linear(ParamStore& store, const std::string& prefix, int64_t in, int64_t out,
                 RngState& rng, double w_std, bool bias = true);

void init_layernorm(ParamStore& store, const std::string& prefix, int64_t d);

// Multi-head scaled-dot-product attention. q_in/kv_in are [n x d] inputs
// (already normalized by the caller); weights are [d x d].
Val multihead_attention(Tape& t, ParamBinder& p, const std::string& prefix, Val q_in, Val kv_in,
                        int64_t heads, const BoolMatrix& mask);

// x + MHA(LN(x)) followed by x + FFN(LN(x)), all under `prefix`.
Val transformer_block(Tape& t, ParamBinder& p, const std::string& prefix, Val x, int64_t heads,
                      const BoolMatrix& mask);

Val linear(Tape& t, ParamBinder& p, const std::string& prefix, Val x, bool bias = true);

Val layernorm_named(Tape& t, ParamBinder& p, const std::string& prefix, Val x);

// Row tensor [1 x n] of iota gather ids 0..n-1.
std::vector<int32_t> iota_ids(int64_t n, int64_t offset = 0);

}  // namespace dialoflow::nn
