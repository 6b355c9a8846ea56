#include "dialoflow/dialm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dialoflow/checkpoint.hpp"
#include "dialoflow/nn_blocks.hpp"

namespace dialoflow::dialm {

using nn::BoolMatrix;
using nn::ParamBinder;
using nn::RngState;
using nn::Tape;
using nn::Tensor;
using nn::Val;

void DialmConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || d_spk < 1)
    throw std::invalid_argument("DialmConfig: dims must be >= 1");
  if (hidden % heads != 0) throw std::invalid_argument("DialmConfig: hidden % heads != 0");
  if (sampler.kind != "greedy" && sampler.kind != "topk")
    throw std::invalid_argument("DialmConfig: unknown sampler " + sampler.kind);
  if (sampler.kind == "topk" && (sampler.k < 1 || sampler.temperature <= 0.0))
    throw std::invalid_argument("DialmConfig: bad top-k sampler settings");
}

DialmModel DialmModel::init(const DialmConfig& cfg, const dualtrack::VocabSpec& vocab) {
  cfg.validate();
  vocab.validate();
  DialmModel m;
  m.cfg = cfg;
  m.vocab = vocab;
  RngState rng(cfg.seed);
  int64_t d = cfg.hidden;
  double w_std = 0.02;
  double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.layers));
  auto& s = m.params;
  s.add("emb.text", nn::randn({vocab.v_txt, d}, rng, w_std));
  s.add("emb.sem", nn::randn({vocab.v_sem, d}, rng, w_std));
  s.add("pos.text", nn::randn({cfg.max_text, d}, rng, w_std));
  s.add("pos.step", nn::randn({cfg.max_steps, d}, rng, w_std));
  nn::init_linear(s, "spk", cfg.d_spk, d, rng, w_std);
  nn::init_layernorm(s, "xattn.lnq", d);
  nn::init_layernorm(s, "xattn.lnkv", d);
  s.add("xattn.wq", nn::randn({d, d}, rng, w_std));
  s.add("xattn.wk", nn::randn({d, d}, rng, w_std));
  s.add("xattn.wv", nn::randn({d, d}, rng, w_std));
  s.add("xattn.wo", nn::randn({d, d}, rng, w_std * resid));
  nn::init_linear(s, "mix", 2 * d, d, rng, w_std);
  for (int64_t l = 0; l < cfg.layers; ++l)
    nn::init_transformer_block(s, "blk" + std::to_string(l), d, 4 * d, rng, w_std, resid);
  nn::init_layernorm(s, "final", d);
  nn::init_linear(s, "head1", d, vocab.v_sem, rng, w_std);
  nn::init_linear(s, "head2", d, vocab.v_sem, rng, w_std);
  return m;
}

std::pair<Val, Val> cross_attention_fuse(Tape& t, ParamBinder& p, const DialmModel& model,
                                         Val e1, Val e2) {
  const Tensor& t1 = t.value(e1);
  const Tensor& t2 = t.value(e2);
  if (t1.rows() != t2.rows() || t1.cols() != t2.cols())
    throw std::invalid_argument("cross_attention_fuse: stream length mismatch");
  int64_t n = t1.rows();
  BoolMatrix causal = nn::causal_mask(n);
  Val q1 = nn::layernorm_named(t, p, "xattn.lnq", e1);
  Val kv2 = nn::layernorm_named(t, p, "xattn.lnkv", e2);
  Val q2 = nn::layernorm_named(t, p, "xattn.lnq", e2);
  Val kv1 = nn::layernorm_named(t, p, "xattn.lnkv", e1);
  Val f1 = t.add(e1, nn::multihead_attention(t, p, "xattn", q1, kv2, model.cfg.heads, causal));
  Val f2 = t.add(e2, nn::multihead_attention(t, p, "xattn", q2, kv1, model.cfg.heads, causal));
  return {f1, f2};
}

namespace {

// Text rows see all text; speech row t sees all text plus speech rows <= t.
BoolMatrix backbone_mask(int64_t n_text, int64_t n_speech) {
  int64_t n = n_text + n_speech;
  BoolMatrix m(n, n, 0);
  for (int64_t i = 0; i < n_text; ++i)
    for (int64_t j = 0; j < n_text; ++j) m.set(i, j, true);
  for (int64_t s = 0; s < n_speech; ++s) {
    int64_t i = n_text + s;
    for (int64_t j = 0; j < n_text; ++j) m.set(i, j, true);
    for (int64_t u = 0; u <= s; ++u) m.set(i, n_text + u, true);
  }
  return m;
}

void check_tokens(std::span<const int32_t> toks, int32_t vocab_size, const char* what) {
  for (int32_t id : toks) {
    if (id < 0 || id >= vocab_size)
      throw std::invalid_argument(std::string(what) + ": token id out of range: " +
                                  std::to_string(id));
  }
}

Val channel_embedding(Tape& t, ParamBinder& p, const DialmModel& model,
                      std::span<const int32_t> inputs, std::span<const double> prompt) {
  int64_t m = static_cast<int64_t>(inputs.size());
  Val e = t.gather_rows(p("emb.sem"), std::vector<int32_t>(inputs.begin(), inputs.end()));
  e = t.add(e, t.gather_rows(p("pos.step"), nn::iota_ids(m)));
  Val pv = t.constant(Tensor({1, model.cfg.d_spk},
                             std::vector<double>(prompt.begin(), prompt.end())));
  Val proj = t.add_rowvec(t.matmul(pv, p("spk.w")), p("spk.b"));
  return t.add_rowvec(e, proj);
}

}  // namespace

DialmLogits dialm_forward_inputs(Tape& t, ParamBinder& p, const DialmModel& model,
                                 std::span<const int32_t> text_tokens,
                                 std::span<const int32_t> in1, std::span<const int32_t> in2,
                                 std::span<const double> prompt1,
                                 std::span<const double> prompt2) {
  if (in1.size() != in2.size())
    throw std::invalid_argument("dialm_forward: track length mismatch");
  if (in1.empty()) throw std::invalid_argument("dialm_forward: empty speech streams");
  int64_t n_text = static_cast<int64_t>(text_tokens.size());
  int64_t m = static_cast<int64_t>(in1.size());
  if (n_text > model.cfg.max_text)
    throw std::invalid_argument("dialm_forward: text longer than max_text");
  if (m > model.cfg.max_steps)
    throw std::invalid_argument("dialm_forward: track longer than max_steps");
  check_tokens(text_tokens, model.vocab.v_txt, "dialm_forward text");
  check_tokens(in1, model.vocab.v_sem, "dialm_forward track1");
  check_tokens(in2, model.vocab.v_sem, "dialm_forward track2");
  if (static_cast<int64_t>(prompt1.size()) != model.cfg.d_spk ||
      static_cast<int64_t>(prompt2.size()) != model.cfg.d_spk)
    throw std::invalid_argument("dialm_forward: prompt dimension mismatch");

  Val e_text = t.gather_rows(p("emb.text"),
                             std::vector<int32_t>(text_tokens.begin(), text_tokens.end()));
  e_text = t.add(e_text, t.gather_rows(p("pos.text"), nn::iota_ids(n_text)));

  Val e1 = channel_embedding(t, p, model, in1, prompt1);
  Val e2 = channel_embedding(t, p, model, in2, prompt2);
  auto [f1, f2] = cross_attention_fuse(t, p, model, e1, e2);

  std::array<Val, 2> fused_parts{f1, f2};
  Val fused = t.concat_cols(fused_parts);
  fused = nn::linear(t, p, "mix", fused);

  std::array<Val, 2> seq_parts{e_text, fused};
  Val x = t.concat_rows(seq_parts);
  BoolMatrix mask = backbone_mask(n_text, m);
  for (int64_t l = 0; l < model.cfg.layers; ++l)
    x = nn::transformer_block(t, p, "blk" + std::to_string(l), x, model.cfg.heads, mask);
  x = nn::layernorm_named(t, p, "final", x);
  Val h = t.slice_rows(x, n_text, n_text + m);
  DialmLogits out;
  out.logits1 = nn::linear(t, p, "head1", h);
  out.logits2 = nn::linear(t, p, "head2", h);
  return out;
}

DialmLogits dialm_forward(Tape& t, ParamBinder& p, const DialmModel& model,
                          std::span<const int32_t> text_tokens,
                          std::span<const int32_t> track1, std::span<const int32_t> track2,
                          std::span<const double> prompt1, std::span<const double> prompt2) {
  if (track1.size() != track2.size())
    throw std::invalid_argument("dialm_forward: track length mismatch");
  if (track1.empty()) throw std::invalid_argument("dialm_forward: empty tracks");
  std::vector<int32_t> in1{model.vocab.bos};
  in1.insert(in1.end(), track1.begin(), track1.end() - 1);
  std::vector<int32_t> in2{model.vocab.bos};
  in2.insert(in2.end(), track2.begin(), track2.end() - 1);
  return dialm_forward_inputs(t, p, model, text_tokens, in1, in2, prompt1, prompt2);
}

Val dual_ce_loss(Tape& t, Val logits1, Val logits2, std::span<const int32_t> targets1,
                 std::span<const int32_t> targets2, int32_t pad_id) {
  auto active_of = [&](std::span<const int32_t> targets) {
    std::vector<uint8_t> a(targets.size());
    for (size_t i = 0; i < targets.size(); ++i) a[i] = targets[i] != pad_id;
    return a;
  };
  std::vector<uint8_t> a1 = active_of(targets1);
  std::vector<uint8_t> a2 = active_of(targets2);
  bool any1 = std::any_of(a1.begin(), a1.end(), [](uint8_t v) { return v; });
  bool any2 = std::any_of(a2.begin(), a2.end(), [](uint8_t v) { return v; });
  if (!any1 && !any2) throw std::invalid_argument("dual_ce_loss: all positions padded");
  std::vector<Val> terms;
  if (any1)
    terms.push_back(t.cross_entropy(logits1,
                                    std::vector<int32_t>(targets1.begin(), targets1.end()), a1));
  if (any2)
    terms.push_back(t.cross_entropy(logits2,
                                    std::vector<int32_t>(targets2.begin(), targets2.end()), a2));
  Val loss = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) loss = t.add(loss, terms[i]);
  return loss;
}

namespace {

struct Example {
  std::vector<int32_t> text;
  std::vector<int32_t> targets1;  // track + <EOS>
  std::vector<int32_t> targets2;
  std::vector<double> prompt1;
  std::vector<double> prompt2;
};

Example make_example(const dualtrack::DialogueRecord& rec, const dualtrack::VocabSpec& vocab) {
  Example ex;
  ex.text = dualtrack::encode_script(rec.script, vocab);
  ex.targets1 = rec.track1;
  ex.targets1.push_back(vocab.eos);
  ex.targets2 = rec.track2;
  ex.targets2.push_back(vocab.eos);
  ex.prompt1 = rec.script.prompt1;
  ex.prompt2 = rec.script.prompt2;
  return ex;
}

// Sum-of-CE loss over a batch, plus the number of supervised positions.
std::pair<Val, int64_t> batch_loss(Tape& tape, ParamBinder& bind, const DialmModel& model,
                                   std::span<const Example> batch) {
  Val total;
  int64_t positions = 0;
  for (const Example& ex : batch) {
    auto logits = dialm_forward(tape, bind, model, ex.text, ex.targets1, ex.targets2, ex.prompt1,
                                ex.prompt2);
    Val loss = dual_ce_loss(tape, logits.logits1, logits.logits2, ex.targets1, ex.targets2,
                            model.vocab.pad);
    total = total.valid() ? tape.add(total, loss) : loss;
    for (int32_t id : ex.targets1) positions += id != model.vocab.pad;
    for (int32_t id : ex.targets2) positions += id != model.vocab.pad;
  }
  return {total, positions};
}

}  // namespace

TrainResult train_dialm(DialmModel& model, const std::vector<dualtrack::DialogueRecord>& data,
                        const TrainOptions& opts) {
  if (data.empty()) throw std::invalid_argument("train_dialm: empty dataset");
  std::vector<Example> examples;
  examples.reserve(data.size());
  for (const auto& rec : data) examples.push_back(make_example(rec, model.vocab));

  TrainResult result;
  RngState pick_rng = RngState(opts.seed).split(0x5e1ec7);
  nn::AdamConfig adam;
  adam.lr = opts.lr;
  for (int64_t step = 0; step < opts.steps; ++step) {
    std::vector<Example> batch;
    for (int64_t b = 0; b < opts.batch; ++b) {
      int64_t idx = pick_rng.next_range(0, static_cast<int64_t>(examples.size()) - 1);
      batch.push_back(examples[static_cast<size_t>(idx)]);
    }
    Tape tape;
    ParamBinder bind(tape, model.params);
    auto [loss, positions] = batch_loss(tape, bind, model, batch);
    double loss_val = tape.value(loss).at(0) / static_cast<double>(positions);
    if (!std::isfinite(loss_val)) throw std::runtime_error("train_dialm: loss diverged");
    tape.backward(loss);
    auto grads = bind.grads();
    // Normalize to mean-per-position so lr is batch-size independent.
    for (auto& [name, g] : grads)
      for (int64_t i = 0; i < g.numel(); ++i) g.at(i) /= static_cast<double>(positions);
    double progress = static_cast<double>(step) / static_cast<double>(std::max<int64_t>(1, opts.steps));
    double lr_lo = opts.lr * opts.lr_min_frac;
    adam.lr = lr_lo + 0.5 * (opts.lr - lr_lo) * (1.0 + std::cos(3.14159265358979323846 * progress));
    nn::adam_step(model.params, grads, adam);
    if (step % opts.log_every == 0 || step + 1 == opts.steps) {
      LossPoint pt{step, loss_val, adam.lr};
      result.trace.push_back(pt);
      if (opts.on_log) opts.on_log(pt);
    }
  }
  return result;
}

double eval_dialm_loss(const DialmModel& model,
                       const std::vector<dualtrack::DialogueRecord>& data) {
  if (data.empty()) throw std::invalid_argument("eval_dialm_loss: empty dataset");
  double total = 0.0;
  int64_t positions = 0;
  for (const auto& rec : data) {
    Example ex = make_example(rec, model.vocab);
    Tape tape;
    ParamBinder bind(tape, model.params);
    auto logits = dialm_forward(tape, bind, model, ex.text, ex.targets1, ex.targets2, ex.prompt1,
                                ex.prompt2);
    Val loss = dual_ce_loss(tape, logits.logits1, logits.logits2, ex.targets1, ex.targets2,
                            model.vocab.pad);
    total += tape.value(loss).at(0);
    for (int32_t id : ex.targets1) positions += id != model.vocab.pad;
    for (int32_t id : ex.targets2) positions += id != model.vocab.pad;
  }
  return total / static_cast<double>(positions);
}

namespace {

int32_t sample_from_logits(const Tensor& logits, int64_t row, const SamplerConfig& sampler,
                           RngState& rng) {
  int64_t v = logits.cols();
  if (sampler.kind == "greedy") {
    int64_t best = 0;
    for (int64_t c = 1; c < v; ++c)
      if (logits.at(row, c) > logits.at(row, best)) best = c;
    return static_cast<int32_t>(best);
  }
  // top-k with temperature
  int64_t k = std::min<int64_t>(sampler.k, v);
  std::vector<int64_t> idx(static_cast<size_t>(v));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int64_t a, int64_t b) {
    if (logits.at(row, a) != logits.at(row, b)) return logits.at(row, a) > logits.at(row, b);
    return a < b;  // deterministic tie-break
  });
  double mx = logits.at(row, idx[0]);
  std::vector<double> probs(static_cast<size_t>(k));
  double sum = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double e = std::exp((logits.at(row, idx[static_cast<size_t>(i)]) - mx) / sampler.temperature);
    probs[static_cast<size_t>(i)] = e;
    sum += e;
  }
  double u = rng.next_uniform() * sum;
  double acc = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    acc += probs[static_cast<size_t>(i)];
    if (u < acc) return static_cast<int32_t>(idx[static_cast<size_t>(i)]);
  }
  return static_cast<int32_t>(idx[static_cast<size_t>(k - 1)]);
}

}  // namespace

std::pair<dualtrack::TrackTokens, dualtrack::TrackTokens> decode_dialogue(
    const DialmModel& model, const dualtrack::DialogueScript& script, int64_t max_steps,
    nn::RngState& rng) {
  if (max_steps < 1) throw std::invalid_argument("decode_dialogue: max steps must be >= 1");
  script.validate(model.cfg.d_spk);
  std::vector<int32_t> text = dualtrack::encode_script(script, model.vocab);
  std::vector<int32_t> in1{model.vocab.bos};
  std::vector<int32_t> in2{model.vocab.bos};
  std::vector<int32_t> out1, out2;
  bool done1 = false, done2 = false;
  while (static_cast<int64_t>(out1.size()) < max_steps && !(done1 && done2)) {
    Tape tape;
    ParamBinder bind(tape, model.params);
    auto logits = dialm_forward_inputs(tape, bind, model, text, in1, in2, script.prompt1,
                                       script.prompt2);
    int64_t row = static_cast<int64_t>(in1.size()) - 1;
    int32_t tok1 = sample_from_logits(tape.value(logits.logits1), row, model.cfg.sampler, rng);
    int32_t tok2 = sample_from_logits(tape.value(logits.logits2), row, model.cfg.sampler, rng);
    if (tok1 == model.vocab.eos) done1 = true;
    if (tok2 == model.vocab.eos) done2 = true;
    if (done1 && done2) break;
    // A finished channel stays silent for the remaining lockstep steps.
    int32_t emit1 = done1 ? model.vocab.sil : tok1;
    int32_t emit2 = done2 ? model.vocab.sil : tok2;
    out1.push_back(emit1);
    out2.push_back(emit2);
    in1.push_back(emit1);
    in2.push_back(emit2);
    if (static_cast<int64_t>(in1.size()) >= model.cfg.max_steps) break;
  }
  dualtrack::TrackTokens t1{std::move(out1), 1};
  dualtrack::TrackTokens t2{std::move(out2), 2};
  return {std::move(t1), std::move(t2)};
}

void save_dialm(const DialmModel& model, const std::string& path) {
  nn::checkpoint_save(model.params, path);
}

DialmModel load_dialm(const DialmConfig& cfg, const dualtrack::VocabSpec& vocab,
                      const std::string& path) {
  DialmModel model = DialmModel::init(cfg, vocab);
  nn::ParamStore loaded = nn::checkpoint_load(path);
  if (loaded.params.size() != model.params.params.size())
    throw nn::CheckpointError(nn::CheckpointError::Kind::ShapeMismatch,
                              "shape mismatch: parameter count differs from config (" + path + ")");
  for (auto& [name, t] : model.params.params) {
    auto it = loaded.params.find(name);
    if (it == loaded.params.end() || !it->second.same_shape(t))
      throw nn::CheckpointError(nn::CheckpointError::Kind::ShapeMismatch,
                                "shape mismatch for parameter " + name + " (" + path + ")");
    t = it->second;
  }
  return model;
}

}  // namespace dialoflow::dialm
