#include "dialoflow/cfm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dialoflow/checkpoint.hpp"
#include "dialoflow/nn_blocks.hpp"

namespace dialoflow::cfm {

using nn::BoolMatrix;
using nn::ParamBinder;
using nn::RngState;
using nn::Tape;
using nn::Tensor;
using nn::Val;

void CfmConfig::validate() const {
  if (hidden < 1 || heads < 1 || feat_dim < 1 || frame_ratio < 1 || d_spk < 1 || block < 1)
    throw std::invalid_argument("CfmConfig: dims must be >= 1");
  if (hidden % heads != 0) throw std::invalid_argument("CfmConfig: hidden % heads != 0");
  if (layer_masks.empty()) throw std::invalid_argument("CfmConfig: needs >= 1 layer");
  for (const auto& spec : layer_masks) {
    spec.validate();
    if (spec.block != block)
      throw std::invalid_argument("CfmConfig: layer mask block size differs from config block");
  }
}

blockmask::ReceptiveField CfmConfig::receptive_field() const {
  return blockmask::receptive_field(layer_masks);
}

CfmModel CfmModel::init(const CfmConfig& cfg) {
  cfg.validate();
  CfmModel m;
  m.cfg = cfg;
  RngState rng(cfg.seed);
  int64_t d = cfg.hidden;
  int64_t layers = static_cast<int64_t>(cfg.layer_masks.size());
  double w_std = 0.02;
  double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(layers));
  auto& s = m.params;
  nn::init_linear(s, "in", 2 * cfg.feat_dim + 1, d, rng, 0.2);
  s.add("emb.tok", nn::randn({cfg.v_sem, d}, rng, w_std));
  nn::init_linear(s, "spk", cfg.d_spk, d, rng, w_std);
  s.add("pos.frame", nn::randn({cfg.max_frames, d}, rng, w_std));
  s.add("pos.phase", nn::randn({cfg.frame_ratio, d}, rng, w_std));
  nn::init_linear(s, "time1", 1, d, rng, 1.0);
  nn::init_linear(s, "time2", d, d, rng, w_std);
  for (int64_t l = 0; l < layers; ++l)
    nn::init_transformer_block(s, "blk" + std::to_string(l), d, 4 * d, rng, w_std, resid);
  nn::init_layernorm(s, "final", d);
  nn::init_linear(s, "out", d, cfg.feat_dim, rng, w_std);
  return m;
}

void CfmCondition::validate(const CfmConfig& cfg) const {
  int64_t t = static_cast<int64_t>(frame_tokens.size());
  if (t < 1) throw std::invalid_argument("CfmCondition: empty window");
  if (context.rows() != t || context.cols() != cfg.feat_dim)
    throw std::invalid_argument("CfmCondition: context shape mismatch");
  if (static_cast<int64_t>(target_mask.size()) != t)
    throw std::invalid_argument("CfmCondition: mask length mismatch");
  if (static_cast<int64_t>(speaker.size()) != cfg.d_spk)
    throw std::invalid_argument("CfmCondition: speaker dimension mismatch");
  for (int32_t id : frame_tokens)
    if (id < 0 || id >= cfg.v_sem)
      throw std::invalid_argument("CfmCondition: token id out of range");
}

Tensor linear_path(const Tensor& x0, const Tensor& x1, double t) {
  if (!x0.same_shape(x1)) throw std::invalid_argument("linear_path: shape mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("linear_path: t outside [0,1]");
  Tensor out(x0.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = (1.0 - t) * x0.at(i) + t * x1.at(i);
  return out;
}

CfmCondition infill_condition(std::span<const int32_t> tokens, std::span<const double> speaker,
                              const Tensor& features, int64_t span_start, int64_t span_end,
                              const CfmConfig& cfg) {
  int64_t t = static_cast<int64_t>(tokens.size()) * cfg.frame_ratio;
  if (t < 1) throw std::invalid_argument("infill_condition: empty token window");
  if (!(0 <= span_start && span_start < span_end && span_end <= t))
    throw std::invalid_argument("infill_condition: target span empty or out of bounds");
  if (features.numel() != 0 && (features.rows() != t || features.cols() != cfg.feat_dim))
    throw std::invalid_argument("infill_condition: feature shape mismatch");
  CfmCondition cond;
  cond.frame_tokens.resize(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i)
    cond.frame_tokens[static_cast<size_t>(i)] = tokens[static_cast<size_t>(i / cfg.frame_ratio)];
  cond.speaker.assign(speaker.begin(), speaker.end());
  cond.context = Tensor({t, cfg.feat_dim});
  if (features.numel() != 0) {
    for (int64_t r = 0; r < t; ++r) {
      if (r >= span_start && r < span_end) continue;
      for (int64_t c = 0; c < cfg.feat_dim; ++c) cond.context.at(r, c) = features.at(r, c);
    }
  }
  cond.target_mask.assign(static_cast<size_t>(t), 0);
  for (int64_t r = span_start; r < span_end; ++r) cond.target_mask[static_cast<size_t>(r)] = 1;
  return cond;
}

Val cfm_field(Tape& tape, ParamBinder& bind, const CfmModel& model, Val x,
              const CfmCondition& cond, double t, int64_t abs_frame0) {
  const CfmConfig& cfg = model.cfg;
  cond.validate(cfg);
  int64_t n = static_cast<int64_t>(cond.frame_tokens.size());
  const Tensor& xv = tape.value(x);
  if (xv.rows() != n || xv.cols() != cfg.feat_dim)
    throw std::invalid_argument("cfm_field: state shape mismatch");
  if (abs_frame0 % cfg.block != 0)
    throw std::invalid_argument("cfm_field: window must start at a block boundary");
  if (abs_frame0 + n > cfg.max_frames)
    throw std::invalid_argument("cfm_field: window exceeds max_frames");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("cfm_field: t outside [0,1]");

  Tensor mask_col({n, 1});
  for (int64_t r = 0; r < n; ++r) mask_col.at(r, 0) = cond.target_mask[static_cast<size_t>(r)];
  std::array<Val, 3> in_parts{x, tape.constant(cond.context), tape.constant(mask_col)};
  Val h = tape.concat_cols(in_parts);
  h = nn::linear(tape, bind, "in", h);
  h = tape.add(h, tape.gather_rows(bind("emb.tok"), cond.frame_tokens));

  Val spk = tape.constant(Tensor({1, cfg.d_spk}, std::vector<double>(cond.speaker.begin(),
                                                                     cond.speaker.end())));
  h = tape.add_rowvec(h, nn::linear(tape, bind, "spk", spk));

  Val tv = tape.constant(Tensor({1, 1}, {t}));
  Val temb = tape.gelu(nn::linear(tape, bind, "time1", tv));
  temb = nn::linear(tape, bind, "time2", temb);
  h = tape.add_rowvec(h, temb);

  h = tape.add(h, tape.gather_rows(bind("pos.frame"), nn::iota_ids(n, abs_frame0)));
  std::vector<int32_t> phases(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    phases[static_cast<size_t>(i)] =
        static_cast<int32_t>((abs_frame0 + i) % cfg.frame_ratio);
  h = tape.add(h, tape.gather_rows(bind("pos.phase"), phases));

  for (size_t l = 0; l < cfg.layer_masks.size(); ++l) {
    BoolMatrix mask = blockmask::build_mask(n, cfg.layer_masks[l]).matrix;
    h = nn::transformer_block(tape, bind, "blk" + std::to_string(l), h, cfg.heads, mask);
  }
  h = nn::layernorm_named(tape, bind, "final", h);
  return nn::linear(tape, bind, "out", h);
}

Tensor cfm_field_eval(const CfmModel& model, const Tensor& x, const CfmCondition& cond, double t,
                      int64_t abs_frame0) {
  Tape tape;
  ParamBinder bind(tape, model.params);
  Val xv = tape.constant(x);
  Val f = cfm_field(tape, bind, model, xv, cond, t, abs_frame0);
  return tape.value(f);
}

FlowSample assemble_flow_sample(const Tensor& x1, const CfmCondition& cond, RngState& rng) {
  int64_t n = x1.rows();
  int64_t d = x1.cols();
  if (static_cast<int64_t>(cond.target_mask.size()) != n)
    throw std::invalid_argument("assemble_flow_sample: mask length mismatch");
  bool any = std::any_of(cond.target_mask.begin(), cond.target_mask.end(),
                         [](uint8_t v) { return v != 0; });
  if (!any) throw std::invalid_argument("empty target region");
  FlowSample s;
  s.t = rng.next_uniform();
  s.xt = Tensor({n, d});
  s.u = Tensor({n, d});
  for (int64_t r = 0; r < n; ++r) {
    if (cond.target_mask[static_cast<size_t>(r)]) {
      for (int64_t c = 0; c < d; ++c) {
        double x0 = rng.next_gaussian();
        s.xt.at(r, c) = (1.0 - s.t) * x0 + s.t * x1.at(r, c);
        s.u.at(r, c) = x1.at(r, c) - x0;
      }
    } else {
      // Context rows enter the field clamped to their clean values.
      for (int64_t c = 0; c < d; ++c) s.xt.at(r, c) = cond.context.at(r, c);
    }
  }
  return s;
}

Val cfm_loss(Tape& tape, ParamBinder& bind, const CfmModel& model, const Tensor& x1,
             const CfmCondition& cond, RngState& rng) {
  const CfmConfig& cfg = model.cfg;
  cond.validate(cfg);
  int64_t n = static_cast<int64_t>(cond.frame_tokens.size());
  if (x1.rows() != n || x1.cols() != cfg.feat_dim)
    throw std::invalid_argument("cfm_loss: target shape mismatch");
  FlowSample sample = assemble_flow_sample(x1, cond, rng);
  Val x = tape.constant(sample.xt);
  Val field = cfm_field(tape, bind, model, x, cond, sample.t, 0);
  return tape.mse_rows(field, sample.u, cond.target_mask);
}

Tensor ode_sample(const FieldFn& field, const Tensor& x0, int64_t n_ode,
                  const std::string& method) {
  if (n_ode < 1) throw std::invalid_argument("ode_sample: n_ode must be >= 1");
  if (method != "euler" && method != "midpoint")
    throw std::invalid_argument("ode_sample: unknown method " + method);
  Tensor x = x0;
  double dt = 1.0 / static_cast<double>(n_ode);
  for (int64_t k = 0; k < n_ode; ++k) {
    double t = static_cast<double>(k) * dt;
    Tensor v = field(x, t);
    if (!v.same_shape(x)) throw std::invalid_argument("ode_sample: field shape mismatch");
    if (method == "euler") {
      for (int64_t i = 0; i < x.numel(); ++i) x.at(i) += dt * v.at(i);
    } else {
      Tensor xh = x;
      for (int64_t i = 0; i < x.numel(); ++i) xh.at(i) += 0.5 * dt * v.at(i);
      Tensor vh = field(xh, t + 0.5 * dt);
      for (int64_t i = 0; i < x.numel(); ++i) x.at(i) += dt * vh.at(i);
    }
    nn::check_finite(x, "ode_sample state");
  }
  return x;
}

void ChunkPlan::validate(const CfmModel& model) const {
  if (block != model.cfg.block)
    throw std::invalid_argument("ChunkPlan: block size differs from model");
  if (past < 0 || future < 0 || n_ode < 1)
    throw std::invalid_argument("ChunkPlan: bad plan values");
  auto rf = model.cfg.receptive_field();
  if (past < rf.back || future < rf.forward) {
    std::string msg = "ChunkPlan: context (" + std::to_string(past) + "," +
                      std::to_string(future) + ") smaller than the accumulated receptive field (" +
                      std::to_string(rf.back) + "," + std::to_string(rf.forward) + ")";
    if (strict) throw std::invalid_argument(msg);
    std::fprintf(stderr, "warning: %s; windowed outputs will differ from full decoding\n",
                 msg.c_str());
  }
}

Tensor frame_noise(uint64_t seed, int64_t abs_frame, int64_t dim) {
  RngState rng = RngState(seed).split(0x40153 + static_cast<uint64_t>(abs_frame));
  Tensor out({1, dim});
  for (int64_t c = 0; c < dim; ++c) out.at(0, c) = rng.next_gaussian();
  return out;
}

namespace {

std::vector<int32_t> upsample_tokens(std::span<const int32_t> tokens, int64_t r) {
  std::vector<int32_t> out(tokens.size() * static_cast<size_t>(r));
  for (size_t i = 0; i < out.size(); ++i) out[i] = tokens[i / static_cast<size_t>(r)];
  return out;
}

}  // namespace

Tensor full_decode(const CfmModel& model, std::span<const int32_t> tokens,
                   std::span<const double> speaker, int64_t n_ode, const std::string& method,
                   uint64_t noise_seed) {
  const CfmConfig& cfg = model.cfg;
  if (tokens.empty()) throw std::invalid_argument("full_decode: empty tokens");
  int64_t n = static_cast<int64_t>(tokens.size()) * cfg.frame_ratio;
  CfmCondition cond;
  cond.frame_tokens = upsample_tokens(tokens, cfg.frame_ratio);
  cond.speaker.assign(speaker.begin(), speaker.end());
  cond.context = Tensor({n, cfg.feat_dim});
  cond.target_mask.assign(static_cast<size_t>(n), 1);
  Tensor x0({n, cfg.feat_dim});
  for (int64_t r = 0; r < n; ++r) {
    Tensor row = frame_noise(noise_seed, r, cfg.feat_dim);
    for (int64_t c = 0; c < cfg.feat_dim; ++c) x0.at(r, c) = row.at(0, c);
  }
  FieldFn field = [&](const Tensor& x, double t) {
    return cfm_field_eval(model, x, cond, t, 0);
  };
  return ode_sample(field, x0, n_ode, method);
}

Tensor chunk_decode(const CfmModel& model, std::span<const int32_t> tokens,
                    std::span<const double> speaker, const ChunkPlan& plan, uint64_t noise_seed) {
  const CfmConfig& cfg = model.cfg;
  plan.validate(model);
  if (tokens.empty()) throw std::invalid_argument("chunk_decode: empty tokens");
  std::vector<int32_t> frame_tokens = upsample_tokens(tokens, cfg.frame_ratio);
  int64_t n = static_cast<int64_t>(frame_tokens.size());
  int64_t b = plan.block;
  int64_t nb = (n + b - 1) / b;
  Tensor out({n, cfg.feat_dim});
  double dt = 1.0 / static_cast<double>(plan.n_ode);

  for (int64_t k = 0; k < nb; ++k) {
    int64_t wb0 = std::max<int64_t>(0, k - plan.past);
    int64_t wb1 = std::min<int64_t>(nb - 1, k + plan.future);
    int64_t f0 = wb0 * b;
    int64_t f1 = std::min<int64_t>(n, (wb1 + 1) * b);
    int64_t w = f1 - f0;
    int64_t t0 = k * b;                          // target span (absolute)
    int64_t t1 = std::min<int64_t>(n, t0 + b);

    CfmCondition cond;
    cond.frame_tokens.assign(frame_tokens.begin() + f0, frame_tokens.begin() + f1);
    cond.speaker.assign(speaker.begin(), speaker.end());
    cond.context = Tensor({w, cfg.feat_dim});
    cond.target_mask.assign(static_cast<size_t>(w), 0);
    Tensor x({w, cfg.feat_dim});
    for (int64_t r = 0; r < w; ++r) {
      int64_t abs = f0 + r;
      if (abs < t0) {
        // Already-generated past context: clean features, clamped state.
        for (int64_t c = 0; c < cfg.feat_dim; ++c) {
          cond.context.at(r, c) = out.at(abs, c);
          x.at(r, c) = out.at(abs, c);
        }
      } else if (abs < t1) {
        cond.target_mask[static_cast<size_t>(r)] = 1;
        Tensor row = frame_noise(noise_seed, abs, cfg.feat_dim);
        for (int64_t c = 0; c < cfg.feat_dim; ++c) x.at(r, c) = row.at(0, c);
      }
      // Future blocks contribute tokens only: zero context, zero state.
    }

    for (int64_t step = 0; step < plan.n_ode; ++step) {
      double t = static_cast<double>(step) * dt;
      auto euler_update = [&](const Tensor& v, Tensor& dst) {
        for (int64_t r = t0 - f0; r < t1 - f0; ++r)
          for (int64_t c = 0; c < cfg.feat_dim; ++c) dst.at(r, c) += dt * v.at(r, c);
      };
      if (plan.method == "euler") {
        Tensor v = cfm_field_eval(model, x, cond, t, f0);
        euler_update(v, x);
      } else if (plan.method == "midpoint") {
        Tensor v = cfm_field_eval(model, x, cond, t, f0);
        Tensor xh = x;
        for (int64_t r = t0 - f0; r < t1 - f0; ++r)
          for (int64_t c = 0; c < cfg.feat_dim; ++c) xh.at(r, c) += 0.5 * dt * v.at(r, c);
        Tensor vh = cfm_field_eval(model, xh, cond, t + 0.5 * dt, f0);
        euler_update(vh, x);
      } else {
        throw std::invalid_argument("chunk_decode: unknown method " + plan.method);
      }
      nn::check_finite(x, "chunk_decode state");
    }
    for (int64_t abs = t0; abs < t1; ++abs)
      for (int64_t c = 0; c < cfg.feat_dim; ++c) out.at(abs, c) = x.at(abs - f0, c);
  }
  return out;
}

CfmTrainResult train_cfm(CfmModel& model, const std::vector<CfmItem>& items,
                         const CfmTrainOptions& opts) {
  if (items.empty()) throw std::invalid_argument("train_cfm: empty dataset");
  const CfmConfig& cfg = model.cfg;
  for (const CfmItem& it : items) {
    int64_t n = static_cast<int64_t>(it.tokens.size()) * cfg.frame_ratio;
    if (it.features.rows() != n || it.features.cols() != cfg.feat_dim)
      throw std::invalid_argument("train_cfm: item feature shape mismatch");
  }
  CfmTrainResult result;
  RngState rng = RngState(opts.seed).split(0xcf3);
  nn::AdamConfig adam;
  for (int64_t step = 0; step < opts.steps; ++step) {
    Tape tape;
    ParamBinder bind(tape, model.params);
    Val total;
    for (int64_t bi = 0; bi < opts.batch; ++bi) {
      const CfmItem& item =
          items[static_cast<size_t>(rng.next_range(0, static_cast<int64_t>(items.size()) - 1))];
      int64_t n = item.features.rows();
      // Conditioning pattern: whole-sequence target, or an infilling split
      // with past context and optionally a token-only future region.
      int64_t s0 = 0, s1 = n;
      if (n >= 2 && rng.next_uniform() > 0.3) {
        s0 = rng.next_range(1, n - 1);
        s1 = rng.next_bernoulli(0.5) ? n : rng.next_range(s0 + 1, n);
      }
      CfmCondition cond = infill_condition(item.tokens, item.speaker, item.features, s0, s1, cfg);
      Val loss = cfm_loss(tape, bind, model, item.features, cond, rng);
      total = total.valid() ? tape.add(total, loss) : loss;
    }
    total = tape.scale(total, 1.0 / static_cast<double>(opts.batch));
    double loss_val = tape.value(total).at(0);
    if (!std::isfinite(loss_val)) throw std::runtime_error("train_cfm: loss diverged");
    tape.backward(total);
    double progress = static_cast<double>(step) / static_cast<double>(std::max<int64_t>(1, opts.steps));
    double lr_lo = opts.lr * opts.lr_min_frac;
    adam.lr = lr_lo + 0.5 * (opts.lr - lr_lo) * (1.0 + std::cos(3.14159265358979323846 * progress));
    nn::adam_step(model.params, bind.grads(), adam);
    if (step % opts.log_every == 0 || step + 1 == opts.steps) {
      CfmLossPoint pt{step, loss_val, adam.lr};
      result.trace.push_back(pt);
      if (opts.on_log) opts.on_log(pt);
    }
  }
  return result;
}

void save_cfm(const CfmModel& model, const std::string& path) {
  nn::checkpoint_save(model.params, path);
}

CfmModel load_cfm(const CfmConfig& cfg, const std::string& path) {
  CfmModel model = CfmModel::init(cfg);
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

}  // namespace dialoflow::cfm
