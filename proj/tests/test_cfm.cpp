#include <cmath>

#include "doctest.h"

#include "dialoflow/cfm.hpp"
#include "dialoflow/eval.hpp"

using namespace dialoflow;
using cfm::CfmCondition;
using cfm::CfmConfig;
using cfm::CfmModel;
using nn::RngState;
using nn::Tensor;

namespace {

CfmConfig micro_cfg() {
  CfmConfig cfg;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.feat_dim = 3;
  cfg.frame_ratio = 1;
  cfg.v_sem = 16;
  cfg.d_spk = 4;
  cfg.max_frames = 256;
  cfg.block = 2;
  cfg.layer_masks = {{2, 1, 0}, {2, 0, 1}};
  cfg.seed = 5;
  return cfg;
}

std::vector<double> spk4() { return {0.5, 0.5, -0.5, 0.5}; }

double mse_over_mask(const Tensor& a, const Tensor& b, const std::vector<uint8_t>& mask) {
  double total = 0.0;
  int64_t count = 0;
  for (int64_t r = 0; r < a.rows(); ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    for (int64_t c = 0; c < a.cols(); ++c) {
      double d = a.at(r, c) - b.at(r, c);
      total += d * d;
    }
    ++count;
  }
  return total / static_cast<double>(count * a.cols());
}

}  // namespace

TEST_CASE("linear_path: endpoints, midpoint, and elementwise oracle") {
  RngState rng(1);
  Tensor x0 = nn::randn({4, 3}, rng);
  Tensor x1 = nn::randn({4, 3}, rng);
  CHECK(cfm::linear_path(x0, x1, 0.0) == x0);
  CHECK(cfm::linear_path(x0, x1, 1.0) == x1);

  Tensor zeros({2, 2});
  Tensor ones = Tensor::full({2, 2}, 1.0);
  Tensor mid = cfm::linear_path(zeros, ones, 0.5);
  for (int64_t i = 0; i < 4; ++i) CHECK(mid.at(i) == 0.5);

  double t = 0.37;
  Tensor xt = cfm::linear_path(x0, x1, t);
  for (int64_t i = 0; i < xt.numel(); ++i)
    CHECK(xt.at(i) == doctest::Approx((1 - t) * x0.at(i) + t * x1.at(i)).epsilon(1e-15));

  CHECK_THROWS_AS(cfm::linear_path(x0, x1, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(cfm::linear_path(x0, x1, 1.1), std::invalid_argument);
}

TEST_CASE("flow sample: oracle field u = (x1 - x) / (1 - t) gives zero loss") {
  CfmConfig cfg = micro_cfg();
  RngState rng(2);
  Tensor x1 = nn::randn({6, 3}, rng);
  std::vector<int32_t> tokens{4, 5, 6, 7, 8, 9};
  CfmCondition cond = cfm::infill_condition(tokens, spk4(), x1, 1, 5, cfg);
  RngState sample_rng(3);
  cfm::FlowSample s = cfm::assemble_flow_sample(x1, cond, sample_rng);
  if (s.t < 0.999) {
    Tensor field(s.xt.shape());
    for (int64_t r = 0; r < 6; ++r)
      for (int64_t c = 0; c < 3; ++c)
        field.at(r, c) = (x1.at(r, c) - s.xt.at(r, c)) / (1.0 - s.t);
    CHECK(mse_over_mask(field, s.u, cond.target_mask) == doctest::Approx(0.0).epsilon(1e-18));
  }
}

TEST_CASE("flow sample: zero field loss equals mean of u^2 over the target region") {
  CfmConfig cfg = micro_cfg();
  RngState rng(4);
  Tensor x1 = nn::randn({6, 3}, rng);
  std::vector<int32_t> tokens{4, 5, 6, 7, 8, 9};
  CfmCondition cond = cfm::infill_condition(tokens, spk4(), x1, 2, 6, cfg);
  RngState sample_rng(5);
  cfm::FlowSample s = cfm::assemble_flow_sample(x1, cond, sample_rng);
  Tensor zero_field(s.xt.shape());
  double expect = mse_over_mask(zero_field, s.u, cond.target_mask);
  double direct = 0.0;
  int64_t count = 0;
  for (int64_t r = 2; r < 6; ++r) {
    for (int64_t c = 0; c < 3; ++c) direct += s.u.at(r, c) * s.u.at(r, c);
    ++count;
  }
  direct /= static_cast<double>(count * 3);
  CHECK(expect == doctest::Approx(direct).epsilon(1e-15));
}

TEST_CASE("cfm_loss: matches a scalar-loop recomputation on a micro model") {
  CfmConfig cfg = micro_cfg();
  CfmModel model = CfmModel::init(cfg);
  RngState rng(6);
  Tensor x1 = nn::randn({6, 3}, rng);
  std::vector<int32_t> tokens{4, 5, 6, 7, 8, 9};
  CfmCondition cond = cfm::infill_condition(tokens, spk4(), x1, 0, 6, cfg);

  RngState loss_rng(7);
  nn::Tape tape;
  nn::ParamBinder bind(tape, model.params);
  nn::Val loss = cfm::cfm_loss(tape, bind, model, x1, cond, loss_rng);

  RngState replay_rng(7);
  cfm::FlowSample s = cfm::assemble_flow_sample(x1, cond, replay_rng);
  Tensor field = cfm::cfm_field_eval(model, s.xt, cond, s.t, 0);
  CHECK(tape.value(loss).at(0) ==
        doctest::Approx(mse_over_mask(field, s.u, cond.target_mask)).epsilon(1e-12));
}

TEST_CASE("cfm_loss: empty target region is an error") {
  CfmConfig cfg = micro_cfg();
  RngState rng(8);
  Tensor x1 = nn::randn({4, 3}, rng);
  CfmCondition cond;
  cond.frame_tokens = {4, 5, 6, 7};
  cond.speaker = spk4();
  cond.context = x1;
  cond.target_mask = {0, 0, 0, 0};
  RngState sample_rng(9);
  CHECK_THROWS_WITH_AS(cfm::assemble_flow_sample(x1, cond, sample_rng),
                       doctest::Contains("empty target region"), std::invalid_argument);
}

TEST_CASE("ode_sample: constant field is exact for any step count") {
  Tensor x0 = Tensor::full({2, 2}, 1.5);
  cfm::FieldFn field = [](const Tensor& x, double) { return Tensor::full(x.shape(), 2.0); };
  for (int64_t n : {1, 3, 17}) {
    Tensor x1 = cfm::ode_sample(field, x0, n);
    for (int64_t i = 0; i < 4; ++i) CHECK(x1.at(i) == doctest::Approx(3.5).epsilon(1e-12));
  }
}

TEST_CASE("ode_sample: state-independent field x1 - x0 lands exactly on x1") {
  RngState rng(10);
  Tensor x0 = nn::randn({3, 2}, rng);
  Tensor x1 = nn::randn({3, 2}, rng);
  Tensor u(x0.shape());
  for (int64_t i = 0; i < u.numel(); ++i) u.at(i) = x1.at(i) - x0.at(i);
  cfm::FieldFn field = [&](const Tensor&, double) { return u; };
  for (int64_t n : {1, 4, 32}) {
    Tensor out = cfm::ode_sample(field, x0, n);
    for (int64_t i = 0; i < out.numel(); ++i)
      CHECK(out.at(i) == doctest::Approx(x1.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("ode_sample: Euler shows first-order convergence on exponential decay") {
  Tensor x0 = Tensor::full({1, 1}, 1.0);
  cfm::FieldFn decay = [](const Tensor& x, double) {
    Tensor v(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) v.at(i) = -x.at(i);
    return v;
  };
  double exact = std::exp(-1.0);
  double e100 = std::fabs(cfm::ode_sample(decay, x0, 100).at(0) - exact);
  double e200 = std::fabs(cfm::ode_sample(decay, x0, 200).at(0) - exact);
  double e400 = std::fabs(cfm::ode_sample(decay, x0, 400).at(0) - exact);
  CHECK(e100 / e200 == doctest::Approx(2.0).epsilon(0.2));
  CHECK(e200 / e400 == doctest::Approx(2.0).epsilon(0.2));

  // Midpoint is second order: quartering when steps double.
  double m50 = std::fabs(cfm::ode_sample(decay, x0, 50, "midpoint").at(0) - exact);
  double m100 = std::fabs(cfm::ode_sample(decay, x0, 100, "midpoint").at(0) - exact);
  CHECK(m50 / m100 == doctest::Approx(4.0).epsilon(0.3));
}

TEST_CASE("infill_condition: whole-window span zeroes the context and sets all mask bits") {
  CfmConfig cfg = micro_cfg();
  std::vector<int32_t> tokens{4, 5, 6};
  RngState rng(11);
  Tensor feats = nn::randn({3, 3}, rng);
  CfmCondition cond = cfm::infill_condition(tokens, spk4(), feats, 0, 3, cfg);
  for (int64_t i = 0; i < cond.context.numel(); ++i) CHECK(cond.context.at(i) == 0.0);
  for (uint8_t m : cond.target_mask) CHECK(m == 1);
  // tokens upsampled by frame_ratio (1 here)
  CHECK(cond.frame_tokens == std::vector<int32_t>{4, 5, 6});
}

TEST_CASE("infill_condition: empty span and out-of-bounds span are errors") {
  CfmConfig cfg = micro_cfg();
  std::vector<int32_t> tokens{4, 5, 6};
  Tensor feats({3, 3});
  CHECK_THROWS_AS(cfm::infill_condition(tokens, spk4(), feats, 1, 1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(cfm::infill_condition(tokens, spk4(), feats, 0, 4, cfg), std::invalid_argument);
}

TEST_CASE("infill_condition: mask selects exactly the span frames") {
  CfmConfig cfg = micro_cfg();
  cfg.frame_ratio = 2;
  std::vector<int32_t> tokens{4, 5, 6, 7};
  Tensor feats({8, 3});
  CfmCondition cond = cfm::infill_condition(tokens, spk4(), feats, 3, 6, cfg);
  int64_t count = 0;
  for (size_t i = 0; i < cond.target_mask.size(); ++i) {
    if (cond.target_mask[i]) {
      ++count;
      CHECK(i >= 3);
      CHECK(i < 6);
    }
  }
  CHECK(count == 3);
  CHECK(cond.frame_tokens == std::vector<int32_t>{4, 4, 5, 5, 6, 6, 7, 7});
}

TEST_CASE("cfm_field: windowed evaluation equals the full evaluation on covered chunks") {
  CfmConfig cfg = micro_cfg();  // rf = (1,1) blocks, block=2
  CfmModel model = CfmModel::init(cfg);
  RngState rng(12);
  int64_t n = 12;  // 6 blocks
  std::vector<int32_t> tokens(static_cast<size_t>(n), 4);
  for (size_t i = 0; i < tokens.size(); ++i) tokens[i] = 4 + static_cast<int32_t>(i % 8);
  Tensor feats = nn::randn({n, 3}, rng);
  CfmCondition cond = cfm::infill_condition(tokens, spk4(), feats, 4, 6, cfg);
  Tensor x = nn::randn({n, 3}, rng);

  Tensor full = cfm::cfm_field_eval(model, x, cond, 0.4, 0);

  // Window = blocks 1..3 (frames 2..8) covers chunk 2's (frames 4..6)
  // receptive field (1 back, 1 forward).
  auto slice = [&](const Tensor& m, int64_t r0, int64_t r1) {
    Tensor out({r1 - r0, m.cols()});
    for (int64_t r = r0; r < r1; ++r)
      for (int64_t c = 0; c < m.cols(); ++c) out.at(r - r0, c) = m.at(r, c);
    return out;
  };
  CfmCondition wcond;
  wcond.frame_tokens.assign(tokens.begin() + 2, tokens.begin() + 8);
  wcond.speaker = cond.speaker;
  wcond.context = slice(cond.context, 2, 8);
  wcond.target_mask.assign(cond.target_mask.begin() + 2, cond.target_mask.begin() + 8);
  Tensor wx = slice(x, 2, 8);
  Tensor win = cfm::cfm_field_eval(model, wx, wcond, 0.4, 2);

  for (int64_t r = 4; r < 6; ++r)
    for (int64_t c = 0; c < 3; ++c)
      CHECK(std::fabs(win.at(r - 2, c) - full.at(r, c)) < 1e-9);

  // One block fewer (frames 2..6, window ends where the chunk does) breaks
  // equality: the forward receptive field is cut off.
  CfmCondition scond;
  scond.frame_tokens.assign(tokens.begin() + 2, tokens.begin() + 6);
  scond.speaker = cond.speaker;
  scond.context = slice(cond.context, 2, 6);
  scond.target_mask.assign(cond.target_mask.begin() + 2, cond.target_mask.begin() + 6);
  Tensor sx = slice(x, 2, 6);
  Tensor shrunk = cfm::cfm_field_eval(model, sx, scond, 0.4, 2);
  double diff = 0.0;
  for (int64_t r = 4; r < 6; ++r)
    for (int64_t c = 0; c < 3; ++c) diff += std::fabs(shrunk.at(r - 2, c) - full.at(r, c));
  CHECK(diff > 1e-8);
}

TEST_CASE("chunk_decode: degenerate single-chunk plan equals whole-sequence ODE") {
  CfmConfig cfg = micro_cfg();
  cfg.block = 16;  // one block covers everything
  cfg.layer_masks = {{16, 0, 0}, {16, 0, 0}};
  CfmModel model = CfmModel::init(cfg);
  std::vector<int32_t> tokens{4, 5, 6, 7, 8};
  cfm::ChunkPlan plan;
  plan.block = 16;
  plan.past = 0;
  plan.future = 0;
  plan.n_ode = 8;
  Tensor chunked = cfm::chunk_decode(model, tokens, spk4(), plan, 99);
  Tensor full = cfm::full_decode(model, tokens, spk4(), 8, "euler", 99);
  REQUIRE(chunked.shape() == full.shape());
  for (int64_t i = 0; i < full.numel(); ++i)
    CHECK(chunked.at(i) == doctest::Approx(full.at(i)).epsilon(1e-12));
}

TEST_CASE("chunk_decode: attention allocation stays within the window bound") {
  CfmConfig cfg = micro_cfg();
  CfmModel model = CfmModel::init(cfg);
  cfm::ChunkPlan plan;
  plan.block = 2;
  plan.past = 1;
  plan.future = 1;
  plan.n_ode = 2;
  // Sequence 10x longer than the window.
  std::vector<int32_t> tokens(static_cast<size_t>(60), 4);
  nn::Tape::reset_attention_entries_peak();
  cfm::chunk_decode(model, tokens, spk4(), plan, 7);
  int64_t bound = (plan.past + plan.future + 1) * plan.block;
  CHECK(nn::Tape::attention_entries_peak() <= bound * bound);
  nn::Tape::reset_attention_entries_peak();
}

TEST_CASE("chunk_decode: strict plan smaller than the receptive field is rejected") {
  CfmConfig cfg = micro_cfg();  // rf (1,1)
  CfmModel model = CfmModel::init(cfg);
  cfm::ChunkPlan plan;
  plan.block = 2;
  plan.past = 0;
  plan.future = 1;
  plan.strict = true;
  std::vector<int32_t> tokens{4, 5, 6, 7};
  CHECK_THROWS_AS(cfm::chunk_decode(model, tokens, spk4(), plan, 1), std::invalid_argument);
  plan.strict = false;
  CHECK_NOTHROW(cfm::chunk_decode(model, tokens, spk4(), plan, 1));
}

TEST_CASE("cfm: micro gradient check passes at 1e-4") {
  auto report = eval::micro_cfm_grad_check(4);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("train_cfm: zero steps keeps the initialization; same seed, same trace") {
  CfmConfig cfg = micro_cfg();
  CfmModel model = CfmModel::init(cfg);
  Tensor before = model.params.at("emb.tok");
  RngState rng(13);
  std::vector<cfm::CfmItem> items;
  for (int i = 0; i < 4; ++i) {
    cfm::CfmItem item;
    item.tokens = {4, 5, 6, 7};
    item.speaker = spk4();
    item.features = nn::randn({4, 3}, rng);
    items.push_back(item);
  }
  cfm::CfmTrainOptions opts;
  opts.steps = 0;
  cfm::train_cfm(model, items, opts);
  CHECK(model.params.at("emb.tok") == before);

  opts.steps = 6;
  opts.batch = 2;
  opts.log_every = 1;
  CfmModel m1 = CfmModel::init(cfg);
  auto r1 = cfm::train_cfm(m1, items, opts);
  CfmModel m2 = CfmModel::init(cfg);
  auto r2 = cfm::train_cfm(m2, items, opts);
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (size_t i = 0; i < r1.trace.size(); ++i) CHECK(r1.trace[i].loss == r2.trace[i].loss);
}

TEST_CASE("frame_noise: keyed by absolute frame index, independent of windowing") {
  Tensor a = cfm::frame_noise(5, 17, 4);
  Tensor b = cfm::frame_noise(5, 17, 4);
  Tensor c = cfm::frame_noise(5, 18, 4);
  CHECK(a == b);
  CHECK_FALSE(a == c);
}
