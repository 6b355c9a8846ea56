#include "dialoflow/nn_blocks.hpp"

namespace dialoflow::nn {

void init_linear(ParamStore& store, const std::string& prefix, int64_t in, int64_t out,
                 RngState& rng, double w_std, bool bias) {
  store.add(prefix + ".w", randn({in, out}, rng, w_std));
  if (bias) store.add(prefix + ".b", Tensor({1, out}));
}

void init_layernorm(ParamStore& store, const std::string& prefix, int64_t d) {
  store.add(prefix + ".g", Tensor::full({d}, 1.0));
  store.add(prefix + ".b", Tensor({d}));
}

void init_transformer_block(ParamStore& store, const std::string& prefix, int64_t d, int64_t d_ff,
                            RngState& rng, double w_std, double resid_scale) {
  init_layernorm(store, prefix + ".ln1", d);
  store.add(prefix + ".wq", randn({d, d}, rng, w_std));
  store.add(prefix + ".wk", randn({d, d}, rng, w_std));
  store.add(prefix + ".wv", randn({d, d}, rng, w_std));
  store.add(prefix + ".wo", randn({d, d}, rng, w_std * resid_scale));
  init_layernorm(store, prefix + ".ln2", d);
  store.add(prefix + ".w1", randn({d, d_ff}, rng, w_std));
  store.add(prefix + ".b1", Tensor({1, d_ff}));
  store.add(prefix + ".w2", randn({d_ff, d}, rng, w_std * resid_scale));
  store.add(prefix + ".b2", Tensor({1, d}));
}

Val multihead_attention(Tape& t, ParamBinder& p, const std::string& prefix, Val q_in, Val kv_in,
                        int64_t heads, const BoolMatrix& mask) {
  Val q = t.matmul(q_in, p(prefix + ".wq"));
  Val k = t.matmul(kv_in, p(prefix + ".wk"));
  Val v = t.matmul(kv_in, p(prefix + ".wv"));
  int64_t d = t.value(q).cols();
  if (d % heads != 0) throw std::invalid_argument("multihead_attention: d % heads != 0");
  int64_t dh = d / heads;
  std::vector<Val> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    Val qh = t.slice_cols(q, h * dh, (h + 1) * dh);
    Val kh = t.slice_cols(k, h * dh, (h + 1) * dh);
    Val vh = t.slice_cols(v, h * dh, (h + 1) * dh);
    outs.push_back(attention(t, qh, kh, vh, mask));
  }
  Val cat = t.concat_cols(outs);
  return t.matmul(cat, p(prefix + ".wo"));
}

Val layernorm_named(Tape& t, ParamBinder& p, const std::string& prefix, Val x) {
  return t.layernorm(x, p(prefix + ".g"), p(prefix + ".b"));
}

Val linear(Tape& t, ParamBinder& p, const std::string& prefix, Val x, bool bias) {
  Val y = t.matmul(x, p(prefix + ".w"));
  if (bias) y = t.add_rowvec(y, p(prefix + ".b"));
  return y;
}

Val transformer_block(Tape& t, ParamBinder& p, const std::string& prefix, Val x, int64_t heads,
                      const BoolMatrix& mask) {
  Val h = layernorm_named(t, p, prefix + ".ln1", x);
  x = t.add(x, multihead_attention(t, p, prefix, h, h, heads, mask));
  Val f = layernorm_named(t, p, prefix + ".ln2", x);
  f = t.add_rowvec(t.matmul(f, p(prefix + ".w1")), p(prefix + ".b1"));
  f = t.gelu(f);
  f = t.add_rowvec(t.matmul(f, p(prefix + ".w2")), p(prefix + ".b2"));
  return t.add(x, f);
}

std::vector<int32_t> iota_ids(int64_t n, int64_t offset) {
  std::vector<int32_t> ids(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = static_cast<int32_t>(i + offset);
  return ids;
}

}  // namespace dialoflow::nn
