#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dialoflow/dualtrack.hpp"
#include "dialoflow/grad_check.hpp"
#include "dialoflow/graph.hpp"
#include "dialoflow/param_store.hpp"
#include "dialoflow/rng.hpp"

namespace dialoflow::dialm {

struct SamplerConfig {
  std::string kind = "topk";  // "greedy" | "topk"
  int64_t k = 5;
  double temperature = 0.9;
};

struct DialmConfig {
  int64_t layers = 4;
  int64_t hidden = 64;
  int64_t heads = 4;
  int64_t d_spk = 16;
  int64_t max_text = 256;
  int64_t max_steps = 256;
  SamplerConfig sampler;
  uint64_t seed = 1;

  void validate() const;
};

// Dual-track dialogue LM: shared semantic embedding, one causal
// cross-attention fusion between the channel streams, a decoder backbone
// over [text ; fused speech], and two channel heads.
struct DialmModel {
  DialmConfig cfg;
  dualtrack::VocabSpec vocab;
  nn::ParamStore params;

  static DialmModel init(const DialmConfig& cfg, const dualtrack::VocabSpec& vocab);
};

// Residual causal cross-attention between the two channel embeddings:
// F1[t] = E1[t] + CrossAttn(q=E1[t], kv=E2[<=t]), and symmetrically for F2.
// One weight set is shared by both directions.
std::pair<nn::Val, nn::Val> cross_attention_fuse(nn::Tape& t, nn::ParamBinder& p,
                                                 const DialmModel& model, nn::Val e1, nn::Val e2);

struct DialmLogits {
  nn::Val logits1;  // [M x v_sem], row i = next-token distribution after input i
  nn::Val logits2;
};

// Forward over explicit input token streams (in1/in2 both length M >= 1,
// typically [<BOS>] + generated/gold tokens). Text positions are fully
// visible to all speech positions; speech self-attention is causal.
DialmLogits dialm_forward_inputs(nn::Tape& t, nn::ParamBinder& p, const DialmModel& model,
                                 std::span<const int32_t> text_tokens,
                                 std::span<const int32_t> in1, std::span<const int32_t> in2,
                                 std::span<const double> prompt1,
                                 std::span<const double> prompt2);

// Teacher-forced view: tracks of length N give [N x v_sem] logits where row
// t predicts track[t] given track[<t] (inputs are shifted internally with a
// <BOS> start).
DialmLogits dialm_forward(nn::Tape& t, nn::ParamBinder& p, const DialmModel& model,
                          std::span<const int32_t> text_tokens,
                          std::span<const int32_t> track1, std::span<const int32_t> track2,
                          std::span<const double> prompt1, std::span<const double> prompt2);

// Sum of the two per-channel cross-entropies; <PAD> targets excluded, <SIL>
// included. Throws if every position of both channels is padding.
nn::Val dual_ce_loss(nn::Tape& t, nn::Val logits1, nn::Val logits2,
                     std::span<const int32_t> targets1, std::span<const int32_t> targets2,
                     int32_t pad_id);

struct LossPoint {
  int64_t step = 0;
  double loss = 0.0;  // mean per supervised position
  double lr = 0.0;
};

struct TrainOptions {
  int64_t steps = 2000;
  int64_t batch = 8;
  double lr = 3e-3;
  double lr_min_frac = 0.1;  // cosine anneal floor, as a fraction of lr
  int64_t log_every = 50;
  uint64_t seed = 1;
  std::function<void(const LossPoint&)> on_log;  // optional
};

struct TrainResult {
  std::vector<LossPoint> trace;
};

// Trains in place with Adam + cosine schedule; deterministic given seed.
// Targets are the gold tracks extended with a simultaneous <EOS> step.
TrainResult train_dialm(DialmModel& model, const std::vector<dualtrack::DialogueRecord>& data,
                        const TrainOptions& opts);

// Mean dual-CE per supervised position over a dataset (no grads).
double eval_dialm_loss(const DialmModel& model, const std::vector<dualtrack::DialogueRecord>& data);

// Lockstep parallel decoding. One token per channel per step. A channel
// that emits <EOS> is finished and contributes <SIL> afterwards; decoding
// stops when both channels have finished or max_steps is reached. The
// emitted tracks exclude the terminating <EOS> steps.
std::pair<dualtrack::TrackTokens, dualtrack::TrackTokens> decode_dialogue(
    const DialmModel& model, const dualtrack::DialogueScript& script, int64_t max_steps,
    nn::RngState& rng);

// Checkpoint I/O with shape validation against the config-derived layout.
void save_dialm(const DialmModel& model, const std::string& path);
DialmModel load_dialm(const DialmConfig& cfg, const dualtrack::VocabSpec& vocab,
                      const std::string& path);

}  // namespace dialoflow::dialm
