#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dialoflow/blockmask.hpp"
#include "dialoflow/grad_check.hpp"
#include "dialoflow/graph.hpp"
#include "dialoflow/param_store.hpp"
#include "dialoflow/rng.hpp"

namespace dialoflow::cfm {

struct CfmConfig {
  int64_t hidden = 64;
  int64_t heads = 4;
  int64_t feat_dim = 16;    // D, acoustic feature channels
  int64_t frame_ratio = 2;  // r, frames per semantic token
  int32_t v_sem = 32;
  int64_t d_spk = 16;
  int64_t max_frames = 1024;
  int64_t block = 8;  // b, frames per attention block
  // One (back, forward) extent pair per transformer layer; layer count is
  // the list length.
  std::vector<blockmask::MaskSpec> layer_masks = {
      {8, 1, 0}, {8, 0, 1}, {8, 1, 0}, {8, 0, 1}};
  uint64_t seed = 2;

  void validate() const;
  blockmask::ReceptiveField receptive_field() const;
};

// Vector-field network v_t(x, c; theta) over frames, with block-masked
// attention layers.
struct CfmModel {
  CfmConfig cfg;
  nn::ParamStore params;

  static CfmModel init(const CfmConfig& cfg);
};

// Conditioning for one window: per-frame semantic tokens, speaker vector,
// clean context features (zeros in the target region and wherever nothing
// is known), and the binary target-region mask.
struct CfmCondition {
  std::vector<int32_t> frame_tokens;
  std::vector<double> speaker;
  nn::Tensor context;               // [T x D]
  std::vector<uint8_t> target_mask;  // 1 = frame to generate

  void validate(const CfmConfig& cfg) const;
};

// x_t = (1 - t) x0 + t x1, elementwise. t must lie in [0, 1].
nn::Tensor linear_path(const nn::Tensor& x0, const nn::Tensor& x1, double t);

// Builds an infilling condition: tokens are upsampled by frame_ratio;
// context carries `features` outside [span_start, span_end) and zeros
// inside; the mask marks the span. The span must be non-empty and within
// the window.
CfmCondition infill_condition(std::span<const int32_t> tokens, std::span<const double> speaker,
                              const nn::Tensor& features, int64_t span_start, int64_t span_end,
                              const CfmConfig& cfg);

// Field evaluation on the tape. `x` is the [T x D] state, `t` the flow time,
// `abs_frame0` the absolute index of the first row (must be block-aligned)
// used for positional lookups so windowed evaluation matches full-sequence
// evaluation.
nn::Val cfm_field(nn::Tape& tape, nn::ParamBinder& bind, const CfmModel& model, nn::Val x,
                  const CfmCondition& cond, double t, int64_t abs_frame0);

// Plain-tensor convenience wrapper around cfm_field (no gradients).
nn::Tensor cfm_field_eval(const CfmModel& model, const nn::Tensor& x, const CfmCondition& cond,
                          double t, int64_t abs_frame0);

// One flow-matching training sample: t ~ U(0,1) first, then x0 ~ N(0, I)
// rows over the target region. xt carries the linear-path mix on target
// rows and the clean context elsewhere; u = x1 - x0 on target rows.
struct FlowSample {
  nn::Tensor xt;
  nn::Tensor u;
  double t = 0.0;
};
FlowSample assemble_flow_sample(const nn::Tensor& x1, const CfmCondition& cond,
                                nn::RngState& rng);

// Flow-matching regression loss: MSE between the field evaluated at the
// assembled sample and u, over the target region only.
nn::Val cfm_loss(nn::Tape& tape, nn::ParamBinder& bind, const CfmModel& model,
                 const nn::Tensor& x1, const CfmCondition& cond, nn::RngState& rng);

// Explicit Euler (or midpoint) integration of dx/dt = field(x, t) from t=0
// to t=1. Aborts on non-finite state.
using FieldFn = std::function<nn::Tensor(const nn::Tensor& x, double t)>;
nn::Tensor ode_sample(const FieldFn& field, const nn::Tensor& x0, int64_t n_ode,
                      const std::string& method = "euler");

struct ChunkPlan {
  int64_t block = 8;  // frames, must equal the model's block size
  int64_t past = 2;   // p, preceding context blocks
  int64_t future = 2; // q, succeeding context blocks
  int64_t n_ode = 32;
  std::string method = "euler";
  bool strict = true;  // reject plans smaller than the receptive field

  void validate(const CfmModel& model) const;
};

// Deterministic per-frame noise used as the ODE start state, keyed by the
// absolute frame index so chunked and full decoding see identical x0.
nn::Tensor frame_noise(uint64_t seed, int64_t abs_frame, int64_t dim);

// Whole-sequence generation: every frame is target, ODE over the full span.
nn::Tensor full_decode(const CfmModel& model, std::span<const int32_t> tokens,
                       std::span<const double> speaker, int64_t n_ode, const std::string& method,
                       uint64_t noise_seed);

// Streaming chunked generation: one block of frames at a time, conditioning
// on p already-generated past blocks (clamped during the ODE) and the
// tokens of q future blocks. Peak attention cost is ((p+q+1) * b)^2 per
// layer evaluation regardless of total length.
nn::Tensor chunk_decode(const CfmModel& model, std::span<const int32_t> tokens,
                        std::span<const double> speaker, const ChunkPlan& plan,
                        uint64_t noise_seed);

struct CfmItem {
  std::vector<int32_t> tokens;
  std::vector<double> speaker;
  nn::Tensor features;  // [r * tokens x D]
};

struct CfmLossPoint {
  int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct CfmTrainOptions {
  int64_t steps = 1500;
  int64_t batch = 8;
  double lr = 2e-3;
  double lr_min_frac = 0.1;
  int64_t log_every = 50;
  uint64_t seed = 2;
  std::function<void(const CfmLossPoint&)> on_log;
};

struct CfmTrainResult {
  std::vector<CfmLossPoint> trace;
};

// Trains in place; conditioning patterns mix whole-sequence generation and
// infilling splits so decode-time windows match the training distribution.
CfmTrainResult train_cfm(CfmModel& model, const std::vector<CfmItem>& items,
                         const CfmTrainOptions& opts);

void save_cfm(const CfmModel& model, const std::string& path);
CfmModel load_cfm(const CfmConfig& cfg, const std::string& path);

}  // namespace dialoflow::cfm
