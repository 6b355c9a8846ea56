// Acceptance suite: one pass/fail line per criterion (A1..A9), exit code 0
// only if every criterion passes. Heavier criteria train desk-scale models;
// the whole suite is single-threaded and deterministic.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dialoflow/blockmask.hpp"
#include "dialoflow/cfm.hpp"
#include "dialoflow/checkpoint.hpp"
#include "dialoflow/config.hpp"
#include "dialoflow/dialm.hpp"
#include "dialoflow/eval.hpp"
#include "dialoflow/pipeline.hpp"
#include "dialoflow/synthgen.hpp"

#ifndef DIALOFLOW_REPO_DIR
#define DIALOFLOW_REPO_DIR "."
#endif

using namespace dialoflow;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%s %s  %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string temp_dir() {
  auto dir = fs::temp_directory_path() / "dialoflow_acceptance";
  fs::create_directories(dir);
  return dir.string();
}

// ---------------------------------------------------------------- A1

void run_a1() {
  double t0 = now_s();
  auto lm = eval::micro_dialm_grad_check(6);
  auto ac = eval::micro_cfm_grad_check(6);
  double elapsed = now_s() - t0;
  bool pass = lm.max_rel_err < 1e-4 && ac.max_rel_err < 1e-4 && elapsed < 120.0;
  report("A1 gradient-correctness", pass,
         "dialm_rel_err=" + fmt(lm.max_rel_err) + " cfm_rel_err=" + fmt(ac.max_rel_err) +
             " runtime_s=" + fmt(elapsed) + " (limits 1e-4, 120s)");
}

// ---------------------------------------------------------------- A2

void run_a2() {
  nn::RngState rng(0xA2);
  int64_t cases = 200;
  int64_t mismatches = 0;
  for (int64_t c = 0; c < cases; ++c) {
    int64_t n = rng.next_range(1, 64);
    blockmask::MaskSpec spec{rng.next_range(1, 8), rng.next_range(0, 3), rng.next_range(0, 3)};
    blockmask::BlockMask mask = blockmask::build_mask(n, spec);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        int64_t d = j / spec.block - i / spec.block;
        bool want = -spec.back <= d && d <= spec.forward;
        if (mask.matrix.at(i, j) != (want ? 1 : 0)) ++mismatches;
      }
  }
  report("A2 mask-oracle-equality", mismatches == 0,
         "cases=" + std::to_string(cases) + " mismatches=" + std::to_string(mismatches));
}

// ---------------------------------------------------------------- A3

bool perturbation_locality_case(nn::RngState& rng) {
  // Random small stack of masked attention layers; perturb one block of the
  // input and check exact invariance outside the receptive field.
  int64_t b = rng.next_range(1, 3);
  int64_t n_blocks = rng.next_range(3, 6);
  int64_t n = b * n_blocks;
  int64_t d = 8;
  int64_t layers = rng.next_range(1, 3);
  std::vector<blockmask::MaskSpec> specs;
  for (int64_t l = 0; l < layers; ++l)
    specs.push_back({b, rng.next_range(0, 1), rng.next_range(0, 1)});
  auto rf = blockmask::receptive_field(specs);

  nn::ParamStore store;
  nn::RngState wrng = rng.split(1);
  for (int64_t l = 0; l < layers; ++l) {
    std::string p = "l" + std::to_string(l);
    store.add(p + ".wq", nn::randn({d, d}, wrng, 0.3));
    store.add(p + ".wk", nn::randn({d, d}, wrng, 0.3));
    store.add(p + ".wv", nn::randn({d, d}, wrng, 0.3));
  }
  nn::Tensor x = nn::randn({n, d}, wrng);

  auto forward = [&](const nn::Tensor& input) {
    nn::Tape t;
    nn::ParamBinder bind(t, store);
    nn::Val h = t.constant(input);
    for (int64_t l = 0; l < layers; ++l) {
      std::string p = "l" + std::to_string(l);
      nn::Val q = t.matmul(h, bind(p + ".wq"));
      nn::Val k = t.matmul(h, bind(p + ".wk"));
      nn::Val v = t.matmul(h, bind(p + ".wv"));
      h = nn::attention(t, q, k, v, blockmask::build_mask(n, specs[static_cast<size_t>(l)]).matrix);
    }
    return t.value(h);
  };

  nn::Tensor base = forward(x);
  int64_t pert_block = rng.next_range(0, n_blocks - 1);
  nn::Tensor xp = x;
  for (int64_t i = pert_block * b; i < (pert_block + 1) * b; ++i)
    for (int64_t c = 0; c < d; ++c) xp.at(i, c) += 2.5;
  nn::Tensor pert = forward(xp);

  for (int64_t i = 0; i < n; ++i) {
    int64_t bi = i / b;
    bool reachable = pert_block >= bi - rf.back && pert_block <= bi + rf.forward;
    if (reachable) continue;
    for (int64_t c = 0; c < d; ++c) {
      if (base.at(i, c) != pert.at(i, c)) return false;  // must be bitwise equal
    }
  }
  return true;
}

void run_a3() {
  nn::RngState rng(0xA3);
  int64_t stacks = 100;
  int64_t law_failures = 0;
  for (int64_t c = 0; c < stacks; ++c) {
    int64_t b = rng.next_range(1, 4);
    int64_t n = rng.next_range(1, 32);
    int64_t layers = rng.next_range(1, 3);
    std::vector<blockmask::MaskSpec> specs;
    std::vector<blockmask::BlockMask> masks;
    int64_t sb = 0, sf = 0;
    for (int64_t l = 0; l < layers; ++l) {
      blockmask::MaskSpec s{b, rng.next_range(0, 2), rng.next_range(0, 2)};
      specs.push_back(s);
      masks.push_back(blockmask::build_mask(n, s));
      sb += s.back;
      sf += s.forward;
    }
    auto composed = blockmask::compose_reachability(masks);
    auto direct = blockmask::build_mask(n, {b, sb, sf});
    if (composed.matrix.data != direct.matrix.data) ++law_failures;
  }
  int64_t locality_failures = 0;
  nn::RngState lrng(0xA31);
  for (int c = 0; c < 25; ++c) {
    nn::RngState item = lrng.split(static_cast<uint64_t>(c));
    if (!perturbation_locality_case(item)) ++locality_failures;
  }
  report("A3 receptive-field-law", law_failures == 0 && locality_failures == 0,
         "stacks=" + std::to_string(stacks) + " law_failures=" + std::to_string(law_failures) +
             " locality_cases=25 locality_failures=" + std::to_string(locality_failures));
}

// ---------------------------------------------------------------- A4

void run_a4() {
  nn::Tensor x0 = nn::Tensor::full({1, 1}, 1.0);
  cfm::FieldFn decay = [](const nn::Tensor& x, double) {
    nn::Tensor v(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) v.at(i) = -x.at(i);
    return v;
  };
  double exact = std::exp(-1.0);
  double e1 = std::fabs(cfm::ode_sample(decay, x0, 64).at(0) - exact);
  double e2 = std::fabs(cfm::ode_sample(decay, x0, 128).at(0) - exact);
  double e3 = std::fabs(cfm::ode_sample(decay, x0, 256).at(0) - exact);
  double r1 = e1 / e2, r2 = e2 / e3;
  bool order1 = r1 > 1.6 && r1 < 2.4 && r2 > 1.6 && r2 < 2.4;

  nn::RngState rng(0xA4);
  nn::Tensor a = nn::randn({4, 3}, rng);
  nn::Tensor b = nn::randn({4, 3}, rng);
  nn::Tensor u(a.shape());
  for (int64_t i = 0; i < u.numel(); ++i) u.at(i) = b.at(i) - a.at(i);
  cfm::FieldFn constant_field = [&](const nn::Tensor&, double) { return u; };
  double max_err = 0.0;
  for (int64_t steps : {1, 7, 32}) {
    nn::Tensor out = cfm::ode_sample(constant_field, a, steps);
    for (int64_t i = 0; i < out.numel(); ++i)
      max_err = std::max(max_err, std::fabs(out.at(i) - b.at(i)));
  }
  bool exact_linear = max_err < 1e-12;
  report("A4 cfm-analytic-ode", order1 && exact_linear,
         "euler_ratio_64/128=" + fmt(r1) + " 128/256=" + fmt(r2) +
             " (2.0±0.4) linear_field_err=" + fmt(max_err));
}

// ---------------------------------------------------------------- A5

void run_a5() {
  double t0 = now_s();
  config::AppConfig cfg = config::parse_config("{}");
  synthgen::GrammarParams grammar = cfg.grammar;

  auto gen_set = [&](int64_t count, uint64_t stream) {
    std::vector<dualtrack::DialogueRecord> recs;
    nn::RngState set_rng = nn::RngState(cfg.seed).split(stream);
    for (int64_t i = 0; i < count; ++i) {
      nn::RngState item = set_rng.split(static_cast<uint64_t>(i));
      auto dlg = synthgen::gen_dialogue(grammar, item);
      recs.push_back({dlg.script, dlg.track1.tokens, dlg.track2.tokens});
    }
    return recs;
  };
  auto train_set = gen_set(500, 1);
  auto held_set = gen_set(50, 2);

  dialm::DialmConfig mc = cfg.dialm_model;
  mc.seed = cfg.seed;
  dialm::DialmModel model = dialm::DialmModel::init(mc, cfg.vocab());

  std::vector<dualtrack::DialogueRecord> eval_subset(train_set.begin(), train_set.begin() + 64);
  double initial_loss = dialm::eval_dialm_loss(model, eval_subset);

  dialm::TrainOptions opts;
  opts.steps = cfg.dialm_train.steps;
  opts.batch = cfg.dialm_train.batch;
  opts.lr = cfg.dialm_train.lr;
  opts.lr_min_frac = cfg.dialm_train.lr_min_frac;
  opts.log_every = 200;
  opts.seed = cfg.seed;
  opts.on_log = [&](const dialm::LossPoint& pt) {
    std::fprintf(stderr, "  a5 step=%lld loss=%.4f lr=%.5f elapsed=%.0fs\n",
                 static_cast<long long>(pt.step), pt.loss, pt.lr, now_s() - t0);
  };
  dialm::train_dialm(model, train_set, opts);
  double final_loss = dialm::eval_dialm_loss(model, eval_subset);

  eval::DecodeAgreement agg = eval::decode_agreement(model, held_set, mc.max_steps - 2, cfg.seed);
  double elapsed = now_s() - t0;

  bool loss_ok = final_loss < 0.2 * initial_loss;
  bool single_ok = agg.single_rate() >= 0.90;
  bool overlap_ok = agg.overlap_coverage() >= 0.50;
  bool time_ok = elapsed < 1800.0;
  report("A5 dialm-desk-training", loss_ok && single_ok && overlap_ok && time_ok,
         "loss " + fmt(initial_loss) + "->" + fmt(final_loss) + " (<20%), single_rate=" +
             fmt(agg.single_rate()) + " (>=0.90), overlap_coverage=" + fmt(agg.overlap_coverage()) +
             " (>=0.50), runtime_s=" + fmt(elapsed) + " (<1800)");
  g_notes.push_back("A5 decode agreement: " + std::to_string(agg.single_steps_matched) + "/" +
                    std::to_string(agg.single_steps_total) + " single steps, " +
                    std::to_string(agg.overlap_windows_covered) + "/" +
                    std::to_string(agg.overlap_windows_total) + " overlap windows");
}

// ---------------------------------------------------------------- A6

void run_a6() {
  double t0 = now_s();
  // Part 1: two-Gaussian toy, unconditional (single frame, D=2).
  cfm::CfmConfig toy_cfg;
  toy_cfg.hidden = 32;
  toy_cfg.heads = 4;
  toy_cfg.feat_dim = 2;
  toy_cfg.frame_ratio = 1;
  toy_cfg.v_sem = 8;
  toy_cfg.d_spk = 4;
  toy_cfg.max_frames = 8;
  toy_cfg.block = 1;
  toy_cfg.layer_masks = {{1, 0, 0}, {1, 0, 0}};
  toy_cfg.seed = 0xA6;
  cfm::CfmModel toy = cfm::CfmModel::init(toy_cfg);

  std::vector<double> spk(4, 0.0);
  nn::RngState data_rng(0xA61);
  std::vector<cfm::CfmItem> toy_items;
  for (int i = 0; i < 512; ++i) {
    cfm::CfmItem item;
    item.tokens = {4};
    item.speaker = spk;
    item.features = nn::Tensor({1, 2});
    double sign = data_rng.next_bernoulli(0.5) ? 1.0 : -1.0;
    item.features.at(0, 0) = 2.0 * sign + 0.3 * data_rng.next_gaussian();
    item.features.at(0, 1) = 2.0 * sign + 0.3 * data_rng.next_gaussian();
    toy_items.push_back(std::move(item));
  }
  cfm::CfmTrainOptions toy_opts;
  toy_opts.steps = 1200;
  toy_opts.batch = 16;
  toy_opts.lr = 2e-3;
  toy_opts.seed = 0xA62;
  toy_opts.log_every = 400;
  cfm::train_cfm(toy, toy_items, toy_opts);

  int64_t near_pos = 0, near_neg = 0;
  double mean0 = 0.0, mean1 = 0.0;
  int64_t n_samples = 1000;
  cfm::CfmCondition toy_cond;
  toy_cond.frame_tokens = {4};
  toy_cond.speaker = spk;
  toy_cond.context = nn::Tensor({1, 2});
  toy_cond.target_mask = {1};
  for (int64_t s = 0; s < n_samples; ++s) {
    nn::Tensor x0({1, 2});
    nn::RngState srng = nn::RngState(0xA63).split(static_cast<uint64_t>(s));
    x0.at(0, 0) = srng.next_gaussian();
    x0.at(0, 1) = srng.next_gaussian();
    cfm::FieldFn field = [&](const nn::Tensor& x, double t) {
      return cfm::cfm_field_eval(toy, x, toy_cond, t, 0);
    };
    nn::Tensor out = cfm::ode_sample(field, x0, 32);
    double d_pos = std::hypot(out.at(0, 0) - 2.0, out.at(0, 1) - 2.0);
    double d_neg = std::hypot(out.at(0, 0) + 2.0, out.at(0, 1) + 2.0);
    if (d_pos <= 0.9) ++near_pos;
    if (d_neg <= 0.9) ++near_neg;
    mean0 += out.at(0, 0);
    mean1 += out.at(0, 1);
  }
  mean0 /= static_cast<double>(n_samples);
  mean1 /= static_cast<double>(n_samples);
  double frac_pos = static_cast<double>(near_pos) / static_cast<double>(n_samples);
  double frac_neg = static_cast<double>(near_neg) / static_cast<double>(n_samples);
  bool toy_ok = frac_pos >= 0.45 && frac_neg >= 0.45 && std::fabs(mean0) < 0.15 &&
                std::fabs(mean1) < 0.15;

  // Part 2: token-conditioned reconstruction on held-out items.
  config::AppConfig cfg = config::parse_config("{}");
  std::string cb_path = std::string(DIALOFLOW_REPO_DIR) + "/" + cfg.codebook_path;
  synthgen::Codebook codebook = synthgen::load_codebook(cb_path);
  synthgen::GrammarParams grammar = cfg.grammar;
  auto gen_records = [&](int64_t count, uint64_t stream) {
    std::vector<dualtrack::DialogueRecord> recs;
    nn::RngState set_rng = nn::RngState(cfg.seed).split(stream);
    for (int64_t i = 0; i < count; ++i) {
      nn::RngState item = set_rng.split(static_cast<uint64_t>(i));
      auto dlg = synthgen::gen_dialogue(grammar, item);
      recs.push_back({dlg.script, dlg.track1.tokens, dlg.track2.tokens});
    }
    return recs;
  };
  auto train_items = eval::cfm_items_from_records(gen_records(160, 11), cfg.vocab(), codebook,
                                                  cfg.cfm_model.frame_ratio,
                                                  grammar.feature_sigma, cfg.seed);
  auto held_items = eval::cfm_items_from_records(gen_records(12, 12), cfg.vocab(), codebook,
                                                 cfg.cfm_model.frame_ratio,
                                                 grammar.feature_sigma, cfg.seed + 1);

  cfm::CfmConfig mc = cfg.cfm_model;
  mc.seed = cfg.seed;
  cfm::CfmModel model = cfm::CfmModel::init(mc);
  cfm::CfmTrainOptions opts;
  opts.steps = cfg.cfm_train.steps;
  opts.batch = cfg.cfm_train.batch;
  opts.lr = cfg.cfm_train.lr;
  opts.seed = cfg.seed;
  opts.log_every = 300;
  opts.on_log = [&](const cfm::CfmLossPoint& pt) {
    std::fprintf(stderr, "  a6 step=%lld loss=%.4f elapsed=%.0fs\n",
                 static_cast<long long>(pt.step), pt.loss, now_s() - t0);
  };
  cfm::train_cfm(model, train_items, opts);

  double mse = 0.0, var = 0.0, mean_acc = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < held_items.size(); ++i) {
    const auto& item = held_items[i];
    nn::Tensor out = cfm::full_decode(model, item.tokens, item.speaker, 32, "euler",
                                      0xA64 + static_cast<uint64_t>(i));
    for (int64_t r = 0; r < out.rows(); ++r)
      for (int64_t c = 0; c < out.cols(); ++c) {
        double d = out.at(r, c) - item.features.at(r, c);
        mse += d * d;
        mean_acc += item.features.at(r, c);
        ++count;
      }
  }
  mse /= static_cast<double>(count);
  double mean = mean_acc / static_cast<double>(count);
  for (const auto& item : held_items)
    for (int64_t r = 0; r < item.features.rows(); ++r)
      for (int64_t c = 0; c < item.features.cols(); ++c) {
        double d = item.features.at(r, c) - mean;
        var += d * d;
      }
  var /= static_cast<double>(count);
  bool recon_ok = mse < 0.2 * var;
  double elapsed = now_s() - t0;

  report("A6 cfm-desk-training", toy_ok && recon_ok,
         "toy_mode_mass=(" + fmt(frac_pos) + "," + fmt(frac_neg) + ") (>=0.45), toy_mean=(" +
             fmt(mean0) + "," + fmt(mean1) + ") (|.|<0.15); recon_mse=" + fmt(mse) + " var=" +
             fmt(var) + " (mse < 20% var), runtime_s=" + fmt(elapsed));
}

// ---------------------------------------------------------------- A7

void run_a7() {
  // Trained-free model: the exactness statement is architectural.
  cfm::CfmConfig cfg;
  cfg.hidden = 32;
  cfg.heads = 4;
  cfg.feat_dim = 6;
  cfg.frame_ratio = 1;
  cfg.v_sem = 16;
  cfg.d_spk = 4;
  cfg.max_frames = 2048;
  cfg.block = 4;
  cfg.layer_masks = {{4, 1, 0}, {4, 0, 1}};
  cfg.seed = 0xA7;
  cfm::CfmModel model = cfm::CfmModel::init(cfg);
  auto rf = cfg.receptive_field();  // (1,1)

  nn::RngState rng(0xA71);
  int64_t n_blocks = 8;
  int64_t n = n_blocks * cfg.block;
  std::vector<int32_t> tokens;
  for (int64_t i = 0; i < n; ++i)
    tokens.push_back(4 + static_cast<int32_t>(rng.next_range(0, 11)));
  std::vector<double> spk{0.5, -0.5, 0.5, 0.5};
  nn::Tensor x = nn::randn({n, cfg.feat_dim}, rng);
  nn::Tensor feats = nn::randn({n, cfg.feat_dim}, rng);

  int64_t chunk = 4;  // central chunk
  cfm::CfmCondition full_cond = cfm::infill_condition(tokens, spk, feats, chunk * cfg.block,
                                                      (chunk + 1) * cfg.block, cfg);
  nn::Tensor full = cfm::cfm_field_eval(model, x, full_cond, 0.3, 0);

  auto window_eval = [&](int64_t wb0, int64_t wb1) {
    int64_t f0 = wb0 * cfg.block, f1 = (wb1 + 1) * cfg.block;
    cfm::CfmCondition wcond;
    wcond.frame_tokens.assign(full_cond.frame_tokens.begin() + f0,
                              full_cond.frame_tokens.begin() + f1);
    wcond.speaker = full_cond.speaker;
    wcond.context = nn::Tensor({f1 - f0, cfg.feat_dim});
    for (int64_t r = f0; r < f1; ++r)
      for (int64_t c = 0; c < cfg.feat_dim; ++c)
        wcond.context.at(r - f0, c) = full_cond.context.at(r, c);
    wcond.target_mask.assign(full_cond.target_mask.begin() + f0,
                             full_cond.target_mask.begin() + f1);
    nn::Tensor wx({f1 - f0, cfg.feat_dim});
    for (int64_t r = f0; r < f1; ++r)
      for (int64_t c = 0; c < cfg.feat_dim; ++c) wx.at(r - f0, c) = x.at(r, c);
    return cfm::cfm_field_eval(model, wx, wcond, 0.3, f0);
  };

  // Window exactly covering the receptive field of the central chunk.
  nn::Tensor win = window_eval(chunk - rf.back, chunk + rf.forward);
  double max_diff = 0.0;
  for (int64_t r = chunk * cfg.block; r < (chunk + 1) * cfg.block; ++r)
    for (int64_t c = 0; c < cfg.feat_dim; ++c)
      max_diff = std::max(max_diff,
                          std::fabs(win.at(r - (chunk - rf.back) * cfg.block, c) - full.at(r, c)));
  bool exact_ok = max_diff < 1e-9;

  // One block too small on the forward side: equality must break.
  nn::Tensor small = window_eval(chunk - rf.back, chunk + rf.forward - 1);
  double small_diff = 0.0;
  for (int64_t r = chunk * cfg.block; r < (chunk + 1) * cfg.block; ++r)
    for (int64_t c = 0; c < cfg.feat_dim; ++c)
      small_diff = std::max(small_diff, std::fabs(small.at(r - (chunk - rf.back) * cfg.block, c) -
                                                  full.at(r, c)));
  bool break_ok = small_diff > 1e-9;

  // End-to-end drift between chunked and full decode, plus the attention
  // allocation bound on a sequence 10x the window.
  cfm::ChunkPlan plan;
  plan.block = cfg.block;
  plan.past = rf.back;
  plan.future = rf.forward;
  plan.n_ode = 16;
  int64_t window_frames = (plan.past + plan.future + 1) * plan.block;
  std::vector<int32_t> long_tokens;
  for (int64_t i = 0; i < window_frames * 10; ++i)
    long_tokens.push_back(4 + static_cast<int32_t>(i % 12));
  nn::Tape::reset_attention_entries_peak();
  nn::Tensor chunked = cfm::chunk_decode(model, long_tokens, spk, plan, 0xA72);
  int64_t peak = nn::Tape::attention_entries_peak();
  bool alloc_ok = peak <= window_frames * window_frames;
  nn::Tensor full_dec = cfm::full_decode(model, long_tokens, spk, plan.n_ode, "euler", 0xA72);
  double drift = 0.0;
  for (int64_t i = 0; i < chunked.numel(); ++i)
    drift += std::fabs(chunked.at(i) - full_dec.at(i));
  drift /= static_cast<double>(chunked.numel());
  // Threshold fixed from the oracle run of this suite (mean |delta| per
  // entry between chunked and full decoding on the untrained field).
  bool drift_ok = drift < 0.35;

  report("A7 chunked-window-exactness", exact_ok && break_ok && alloc_ok && drift_ok,
         "window_diff=" + fmt(max_diff) + " (<1e-9), shrunk_diff=" + fmt(small_diff) +
             " (>0), attn_peak=" + std::to_string(peak) + " (<= " +
             std::to_string(window_frames * window_frames) + "), decode_drift=" + fmt(drift) +
             " (<0.35)");
}

// ---------------------------------------------------------------- A8

void run_a8() {
  synthgen::FixtureSpec spec;
  spec.seed = 0xA8;
  spec.chunks = 2;
  spec.utterances_per_chunk = 8;
  spec.violations = {{1, synthgen::Violation::LowSnr},
                     {4, synthgen::Violation::Incoherent},
                     {9, synthgen::Violation::Dissimilar},
                     {13, synthgen::Violation::LowQuality}};
  synthgen::Fixture fx = synthgen::gen_pipeline_fixture(spec);
  std::string dir = temp_dir() + "/a8";
  fs::create_directories(dir);
  synthgen::write_fixture_audio(fx, dir);
  pipeline::PipelineOptions opts;
  opts.thresholds = spec.thresholds;
  opts.audio_dir = dir;
  pipeline::PipelineResult result = pipeline::run_pipeline(fx.input, opts);
  bool manifest_ok = result.manifest_lines == fx.gold_manifest;
  bool reports_ok = result.report_lines == fx.gold_reports;

  // Reason codes for the planted violations, in order.
  auto has_reason = [&](size_t idx, const std::string& code) {
    return idx < fx.gold_reports.size() &&
           result.report_lines[idx].find("\"reasons\":[\"" + code + "\"]") != std::string::npos;
  };
  bool reasons_ok = has_reason(1, "snr") && has_reason(4, "cluster") &&
                    has_reason(9, "similarity") && has_reason(13, "quality");

  // Property sweeps: merge idempotence and assign order-invariance.
  nn::RngState rng(0xA81);
  int64_t prop_failures = 0;
  for (int64_t c = 0; c < 1000; ++c) {
    nn::RngState item = rng.split(static_cast<uint64_t>(c));
    std::vector<pipeline::OverlapInterval> ivs;
    int64_t n = item.next_range(1, 8);
    for (int64_t i = 0; i < n; ++i) {
      int64_t a = item.next_range(0, 60);
      int64_t len = item.next_range(1, 20);
      ivs.push_back({0.125 * static_cast<double>(a), 0.125 * static_cast<double>(a + len)});
    }
    auto merged = pipeline::merge_overlaps(ivs, 0.0);
    auto twice = pipeline::merge_overlaps(merged, 0.0);
    auto rev = ivs;
    std::reverse(rev.begin(), rev.end());
    auto merged_rev = pipeline::merge_overlaps(rev, 0.0);
    bool same = merged.size() == twice.size() && merged.size() == merged_rev.size();
    for (size_t i = 0; same && i < merged.size(); ++i) {
      same = merged[i].start == twice[i].start && merged[i].end == twice[i].end &&
             merged[i].start == merged_rev[i].start && merged[i].end == merged_rev[i].end;
      if (i > 0) same = same && merged[i - 1].end < merged[i].start;
    }
    if (!same) ++prop_failures;

    std::vector<pipeline::DiarSeg> diar;
    int64_t nseg = item.next_range(1, 5);
    for (int64_t s = 0; s < nseg; ++s) {
      double st = 0.125 * static_cast<double>(item.next_range(0, 40));
      diar.push_back({item.next_bernoulli(0.5) ? "A" : "B", st,
                      st + 0.125 * static_cast<double>(item.next_range(1, 12)),
                      1.0, 1.0, 5.0});
    }
    std::vector<pipeline::WordRec> words;
    int64_t nw = item.next_range(1, 8);
    for (int64_t w = 0; w < nw; ++w) {
      double st = 0.125 * static_cast<double>(item.next_range(0, 44));
      words.push_back({0, "w", st, st + 0.25});
    }
    std::sort(words.begin(), words.end(),
              [](const pipeline::WordRec& a, const pipeline::WordRec& b) {
                return a.start < b.start;
              });
    auto base = pipeline::assign_words(words, diar);
    auto shuffled = diar;
    std::reverse(shuffled.begin(), shuffled.end());
    auto again = pipeline::assign_words(words, shuffled);
    for (size_t i = 0; i < base.size(); ++i)
      if (base[i].speaker != again[i].speaker) ++prop_failures;
  }

  report("A8 pipeline-gold-fixtures",
         manifest_ok && reports_ok && reasons_ok && prop_failures == 0,
         std::string("manifest_byte_identical=") + (manifest_ok ? "yes" : "no") +
             " reports_byte_identical=" + (reports_ok ? "yes" : "no") + " reason_codes=" +
             (reasons_ok ? "exact" : "WRONG") + " property_failures=" +
             std::to_string(prop_failures) + "/1000");
}

// ---------------------------------------------------------------- A9

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void run_a9() {
  // Re-run a short training + decode twice with one seed and compare the
  // artifacts byte for byte.
  config::AppConfig cfg = config::parse_config(
      R"({"dialm": {"train": {"steps": 30, "batch": 2, "log_every": 5}}})");
  synthgen::GrammarParams grammar = cfg.grammar;
  auto gen_set = [&](uint64_t stream) {
    std::vector<dualtrack::DialogueRecord> recs;
    nn::RngState set_rng = nn::RngState(cfg.seed).split(stream);
    for (int64_t i = 0; i < 16; ++i) {
      nn::RngState item = set_rng.split(static_cast<uint64_t>(i));
      auto dlg = synthgen::gen_dialogue(grammar, item);
      recs.push_back({dlg.script, dlg.track1.tokens, dlg.track2.tokens});
    }
    return recs;
  };

  std::string dir = temp_dir() + "/a9";
  fs::create_directories(dir);
  auto run_once = [&](const std::string& tag) {
    auto data = gen_set(1);
    dualtrack::write_jsonl(data, dir + "/data_" + tag + ".jsonl");
    dialm::DialmConfig mc = cfg.dialm_model;
    mc.seed = cfg.seed;
    dialm::DialmModel model = dialm::DialmModel::init(mc, cfg.vocab());
    std::vector<std::string> trace;
    dialm::TrainOptions opts;
    opts.steps = cfg.dialm_train.steps;
    opts.batch = cfg.dialm_train.batch;
    opts.lr = cfg.dialm_train.lr;
    opts.log_every = cfg.dialm_train.log_every;
    opts.seed = cfg.seed;
    opts.on_log = [&](const dialm::LossPoint& pt) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "{\"step\":%lld,\"loss\":%.17g,\"lr\":%.17g}",
                    static_cast<long long>(pt.step), pt.loss, pt.lr);
      trace.push_back(buf);
    };
    dialm::train_dialm(model, data, opts);
    dialm::save_dialm(model, dir + "/ckpt_" + tag + ".dlsp");
    pipeline::emit_manifest(trace, dir + "/trace_" + tag + ".jsonl");
    // decode artifact
    nn::RngState rng = nn::RngState(cfg.seed).split(0xdec);
    auto [t1, t2] = dialm::decode_dialogue(model, data[0].script, 24, rng);
    dualtrack::DialogueRecord rec{data[0].script, t1.tokens, t2.tokens};
    dualtrack::write_jsonl({rec}, dir + "/decoded_" + tag + ".jsonl");
  };
  run_once("one");
  run_once("two");
  bool data_ok = file_bytes(dir + "/data_one.jsonl") == file_bytes(dir + "/data_two.jsonl");
  bool ckpt_ok = file_bytes(dir + "/ckpt_one.dlsp") == file_bytes(dir + "/ckpt_two.dlsp");
  bool trace_ok = file_bytes(dir + "/trace_one.jsonl") == file_bytes(dir + "/trace_two.jsonl");
  bool dec_ok = file_bytes(dir + "/decoded_one.jsonl") == file_bytes(dir + "/decoded_two.jsonl");
  report("A9 determinism", data_ok && ckpt_ok && trace_ok && dec_ok,
         std::string("data=") + (data_ok ? "identical" : "DIFFER") + " checkpoint=" +
             (ckpt_ok ? "identical" : "DIFFER") + " trace=" + (trace_ok ? "identical" : "DIFFER") +
             " decode=" + (dec_ok ? "identical" : "DIFFER"));
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--quick") quick = true;
  }
  double t0 = now_s();
  run_a1();
  run_a2();
  run_a3();
  run_a4();
  if (!quick) {
    run_a5();
    run_a6();
  } else {
    std::printf("SKIP A5 dialm-desk-training  (--quick)\n");
    std::printf("SKIP A6 cfm-desk-training  (--quick)\n");
  }
  run_a7();
  run_a8();
  run_a9();
  for (const std::string& note : g_notes) std::printf("note: %s\n", note.c_str());
  std::printf("%s: %d criterion(s) failed, total runtime %.0fs\n",
              g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", g_failures,
              now_s() - t0);
  return g_failures == 0 ? 0 : 1;
}
