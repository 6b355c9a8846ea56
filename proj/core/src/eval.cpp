#include "dialoflow/eval.hpp"

#include "dialoflow/grad_check.hpp"

namespace dialoflow::eval {

std::vector<synthgen::StepInterval> gold_overlap_windows(const dualtrack::DialogueRecord& rec,
                                                         const dualtrack::VocabSpec& vocab) {
  std::vector<synthgen::StepInterval> out;
  int64_t n = static_cast<int64_t>(rec.track1.size());
  int64_t s = -1;
  for (int64_t i = 0; i <= n; ++i) {
    bool both = i < n && rec.track1[static_cast<size_t>(i)] != vocab.sil &&
                rec.track2[static_cast<size_t>(i)] != vocab.sil;
    if (both && s < 0) s = i;
    if (!both && s >= 0) {
      out.push_back({s, i});
      s = -1;
    }
  }
  return out;
}

DecodeAgreement decode_agreement(const dialm::DialmModel& model,
                                 const std::vector<dualtrack::DialogueRecord>& records,
                                 int64_t max_steps, uint64_t seed) {
  const dualtrack::VocabSpec& vocab = model.vocab;
  DecodeAgreement agg;
  for (size_t di = 0; di < records.size(); ++di) {
    const auto& rec = records[di];
    nn::RngState rng = nn::RngState(seed).split(0xdec0de + di);
    auto [d1, d2] = dialm::decode_dialogue(model, rec.script, max_steps, rng);
    auto windows = gold_overlap_windows(rec, vocab);
    auto in_window = [&](int64_t t) {
      for (const auto& w : windows)
        if (w.start <= t && t < w.end) return true;
      return false;
    };
    int64_t n_gold = static_cast<int64_t>(rec.track1.size());
    int64_t n_dec = static_cast<int64_t>(d1.tokens.size());
    for (int64_t t = 0; t < std::min(n_gold, n_dec); ++t) {
      if (in_window(t)) continue;
      bool g1 = rec.track1[static_cast<size_t>(t)] != vocab.sil;
      bool g2 = rec.track2[static_cast<size_t>(t)] != vocab.sil;
      if (g1 == g2) continue;  // gold pause (or gold overlap leak): not a single-speaker step
      bool a1 = d1.tokens[static_cast<size_t>(t)] != vocab.sil;
      bool a2 = d2.tokens[static_cast<size_t>(t)] != vocab.sil;
      ++agg.single_steps_total;
      if (a1 == g1 && a2 == g2) ++agg.single_steps_matched;
    }
    for (const auto& w : windows) {
      ++agg.overlap_windows_total;
      bool covered = false;
      for (int64_t t = w.start; t < std::min(w.end, n_dec); ++t) {
        if (d1.tokens[static_cast<size_t>(t)] != vocab.sil &&
            d2.tokens[static_cast<size_t>(t)] != vocab.sil) {
          covered = true;
          break;
        }
      }
      agg.overlap_windows_covered += covered;
    }
    ++agg.dialogues;
  }
  return agg;
}

std::vector<cfm::CfmItem> cfm_items_from_records(
    const std::vector<dualtrack::DialogueRecord>& records, const dualtrack::VocabSpec& vocab,
    const synthgen::Codebook& codebook, int64_t frame_ratio, double sigma, uint64_t seed) {
  std::vector<cfm::CfmItem> items;
  for (size_t di = 0; di < records.size(); ++di) {
    const auto& rec = records[di];
    for (int32_t ch = 1; ch <= 2; ++ch) {
      dualtrack::TrackTokens track{ch == 1 ? rec.track1 : rec.track2, ch};
      const auto& prompt = ch == 1 ? rec.script.prompt1 : rec.script.prompt2;
      synthgen::SpeakerProfile profile;
      profile.speaker_vec = prompt;
      profile.feat_offset = synthgen::offset_from_prompt(prompt, codebook.feat_dim());
      auto runs = dualtrack::strip_silence(track, vocab);
      for (size_t ri = 0; ri < runs.size(); ++ri) {
        nn::RngState rng = nn::RngState(seed).split((di << 8) ^ (static_cast<size_t>(ch) << 4) ^ ri);
        cfm::CfmItem item;
        item.tokens = runs[ri].tokens;
        item.speaker = prompt;
        item.features = synthgen::tokens_to_features(item.tokens, profile, codebook, frame_ratio,
                                                     sigma, rng);
        items.push_back(std::move(item));
      }
    }
  }
  return items;
}

nn::GradCheckReport micro_dialm_grad_check(int max_coords_per_param) {
  dualtrack::VocabSpec vocab;
  vocab.v_txt = 12;
  vocab.v_sem = 12;
  dialm::DialmConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.d_spk = 4;
  cfg.max_text = 32;
  cfg.max_steps = 32;
  cfg.seed = 11;
  dialm::DialmModel model = dialm::DialmModel::init(cfg, vocab);

  std::vector<int32_t> text{vocab.bos, 4, 5, vocab.spkchange, 6, 7, vocab.eos};
  std::vector<int32_t> track1{4, 5, vocab.sil, vocab.sil, vocab.eos};
  std::vector<int32_t> track2{vocab.sil, vocab.sil, 6, 7, vocab.eos};
  std::vector<double> p1{0.5, -0.5, 0.5, 0.5};
  std::vector<double> p2{-0.5, 0.5, 0.5, 0.5};

  nn::LossBuilder builder = [=, &model](nn::Tape& tape, nn::ParamBinder& bind) {
    auto logits = dialm::dialm_forward(tape, bind, model, text, track1, track2, p1, p2);
    return dialm::dual_ce_loss(tape, logits.logits1, logits.logits2, track1, track2,
                               model.vocab.pad);
  };
  nn::GradCheckOptions opts;
  opts.max_coords_per_param = max_coords_per_param;
  return nn::grad_check(model.params, builder, opts);
}

nn::GradCheckReport micro_cfm_grad_check(int max_coords_per_param) {
  cfm::CfmConfig cfg;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.feat_dim = 3;
  cfg.frame_ratio = 1;
  cfg.v_sem = 12;
  cfg.d_spk = 4;
  cfg.max_frames = 64;
  cfg.block = 2;
  cfg.layer_masks = {{2, 1, 0}, {2, 0, 1}};
  cfg.seed = 12;
  cfm::CfmModel model = cfm::CfmModel::init(cfg);

  std::vector<int32_t> tokens{4, 5, 6, 7, 8, 9};
  std::vector<double> speaker{0.5, 0.5, -0.5, 0.5};
  nn::RngState feat_rng(77);
  nn::Tensor x1 = nn::randn({6, 3}, feat_rng);
  cfm::CfmCondition cond = cfm::infill_condition(tokens, speaker, x1, 2, 5, cfg);

  nn::LossBuilder builder = [=, &model](nn::Tape& tape, nn::ParamBinder& bind) {
    nn::RngState rng(99);  // fresh copy per evaluation keeps the loss deterministic
    return cfm::cfm_loss(tape, bind, model, x1, cond, rng);
  };
  nn::GradCheckOptions opts;
  opts.max_coords_per_param = max_coords_per_param;
  return nn::grad_check(model.params, builder, opts);
}

}  // namespace dialoflow::eval
