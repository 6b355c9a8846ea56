#include "dialoflow/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dialoflow/checkpoint.hpp"

namespace dialoflow::synthgen {

using dualtrack::DialogueScript;
using dualtrack::Interval;
using dualtrack::Turn;
using dualtrack::TurnSchedule;
using dualtrack::VocabSpec;
using nn::RngState;
using nn::Tensor;

void GrammarParams::validate() const {
  VocabSpec v = vocab();
  v.validate();
  if (v_sem - v.sem_content_base() < kNumOnsets + 1)
    throw std::invalid_argument("GrammarParams: semantic vocab too small for onsets + fillers");
  if (v_txt - v.txt_content_base() < v_sem - v.sem_content_base())
    throw std::invalid_argument("GrammarParams: text vocab too small for the injective map");
  if (turns_min < 1 || turns_min > turns_max)
    throw std::invalid_argument("GrammarParams: bad turn count range");
  if (turn_len_min < 2 || turn_len_min > turn_len_max)
    throw std::invalid_argument("GrammarParams: bad turn length range (min 2)");
  for (double p : {overlap_prob, backchannel_prob, pause_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("GrammarParams: probability outside [0,1]");
  if (overlap_len_min < 1 || overlap_len_max > 2 || overlap_len_min > overlap_len_max)
    throw std::invalid_argument("GrammarParams: overlap length range must lie in [1,2]");
  if (d_spk < 1) throw std::invalid_argument("GrammarParams: d_spk must be >= 1");
  if (feature_sigma < 0.0) throw std::invalid_argument("GrammarParams: negative feature sigma");
}

VocabSpec GrammarParams::vocab() const {
  VocabSpec v;
  v.v_txt = v_txt;
  v.v_sem = v_sem;
  return v;
}

namespace {

int32_t txt_of(int32_t sem_id, const VocabSpec& v) {
  return sem_id - v.sem_content_base() + v.txt_content_base();
}

}  // namespace

GeneratedDialogue gen_dialogue(const GrammarParams& params, RngState& rng) {
  params.validate();
  VocabSpec vocab = params.vocab();
  int32_t base = vocab.sem_content_base();
  int32_t filler_lo = base + static_cast<int32_t>(kNumOnsets);
  int32_t filler_hi = vocab.v_sem - 1;
  bool simultaneous = params.overlap_prob > 0.0;

  struct PlannedTurn {
    int32_t speaker;
    std::vector<int32_t> tokens;  // semantic
    bool backchannel = false;
  };
  std::vector<PlannedTurn> turns;
  int64_t n_main = rng.next_range(params.turns_min, params.turns_max);
  int64_t prev_len = 0;
  int64_t prev_gap = 0;  // previous main turn's own start offset
  bool prev_had_bc = false;
  for (int64_t i = 0; i < n_main; ++i) {
    PlannedTurn t;
    t.speaker = (i % 2 == 0) ? 1 : 2;
    int64_t len = rng.next_range(params.turn_len_min, params.turn_len_max);
    int64_t onset = kOnsetButt;
    int64_t start_gap = 0;  // s_i - e_{i-1}
    if (i > 0) {
      // No overlap onset right after a backchannel (the burst and this turn
      // share a channel), and the overlap must not reach back into this
      // channel's previous turn: o <= prev_gap + prev_len - 1.
      int64_t max_ov =
          prev_had_bc ? 0
                      : std::min<int64_t>(
                            {params.overlap_len_max, prev_gap + prev_len - 1, len - 1});
      if (simultaneous && max_ov >= params.overlap_len_min &&
          rng.next_bernoulli(params.overlap_prob)) {
        int64_t o = rng.next_range(params.overlap_len_min, max_ov);
        onset = (o == 1) ? kOnsetOverlap1 : kOnsetOverlap2;
        start_gap = -o;
      } else if (rng.next_bernoulli(params.pause_prob)) {
        onset = kOnsetPause;
        start_gap = 1;
      }
    }
    t.tokens.push_back(base + static_cast<int32_t>(onset));
    for (int64_t k = 1; k < len; ++k)
      t.tokens.push_back(static_cast<int32_t>(rng.next_range(filler_lo, filler_hi)));
    turns.push_back(std::move(t));
    prev_had_bc = false;

    // Optional backchannel burst by the other speaker inside this turn. It
    // ends one step before the turn does and must start at least one step
    // after the previous turn by the same speaker ended.
    int64_t bc_cap = std::min<int64_t>(3, len + start_gap - 2);
    if (simultaneous && i + 1 < n_main && i > 0 && bc_cap >= 1 &&
        rng.next_bernoulli(params.backchannel_prob)) {
      PlannedTurn bc;
      bc.speaker = (turns.back().speaker == 1) ? 2 : 1;
      bc.backchannel = true;
      int64_t bc_len = rng.next_range(1, bc_cap);
      bc.tokens.push_back(base + static_cast<int32_t>(kOnsetBackchannel));
      for (int64_t k = 1; k < bc_len; ++k)
        bc.tokens.push_back(static_cast<int32_t>(rng.next_range(filler_lo, filler_hi)));
      turns.push_back(std::move(bc));
      prev_had_bc = true;
    }
    prev_len = len;
    prev_gap = start_gap;
  }

  // Deterministic schedule from onset markers.
  GeneratedDialogue out;
  int64_t e_ref = 0;
  for (const PlannedTurn& t : turns) {
    int64_t len = static_cast<int64_t>(t.tokens.size());
    int64_t onset = t.tokens[0] - base;
    int64_t start = 0, end = 0;
    if (t.backchannel) {
      end = e_ref - 1;
      start = end - len;
    } else if (e_ref == 0) {
      start = 0;
      end = len;
    } else {
      switch (onset) {
        case kOnsetButt: start = e_ref; break;
        case kOnsetPause: start = e_ref + 1; break;
        case kOnsetOverlap1: start = e_ref - 1; break;
        case kOnsetOverlap2: start = e_ref - 2; break;
        default: throw std::logic_error("gen_dialogue: bad onset");
      }
      end = start + len;
    }
    out.schedule.intervals.push_back({t.speaker, start, end});
    out.runs.push_back(t.tokens);
    if (!t.backchannel) e_ref = std::max(e_ref, end);
    dualtrack::Turn st;
    st.speaker = t.speaker;
    for (int32_t id : t.tokens) st.text.push_back(txt_of(id, vocab));
    out.script.turns.push_back(std::move(st));
  }
  out.schedule.steps = e_ref;

  SpeakerProfile p1 = make_profile(rng, params.d_spk, 1);
  SpeakerProfile p2 = make_profile(rng, params.d_spk, 1);
  out.script.prompt1 = p1.speaker_vec;
  out.script.prompt2 = p2.speaker_vec;

  auto [t1, t2] = dualtrack::tracks_from_schedule(out.schedule, out.runs, vocab);
  out.track1 = std::move(t1);
  out.track2 = std::move(t2);

  // Gold overlap windows by step intersection of the two tracks.
  int64_t n = out.schedule.steps;
  int64_t s = -1;
  for (int64_t i = 0; i <= n; ++i) {
    bool both = i < n && out.track1.tokens[static_cast<size_t>(i)] != vocab.sil &&
                out.track2.tokens[static_cast<size_t>(i)] != vocab.sil;
    if (both && s < 0) s = i;
    if (!both && s >= 0) {
      out.overlaps.push_back({s, i});
      s = -1;
    }
  }
  return out;
}

SpeakerProfile make_profile(RngState& rng, int64_t d_spk, int64_t feat_dim) {
  SpeakerProfile p;
  p.speaker_vec.resize(static_cast<size_t>(d_spk));
  double norm = 0.0;
  for (double& v : p.speaker_vec) {
    v = rng.next_gaussian();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-12) {
    p.speaker_vec[0] = 1.0;
    norm = 1.0;
  }
  for (double& v : p.speaker_vec) v /= norm;
  p.feat_offset = offset_from_prompt(p.speaker_vec, feat_dim);
  return p;
}

std::vector<double> offset_from_prompt(std::span<const double> prompt, int64_t feat_dim) {
  // Hash the prompt bytes into a seed so the offset travels with the vector.
  std::string bytes(reinterpret_cast<const char*>(prompt.data()), prompt.size() * sizeof(double));
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  RngState rng(h);
  std::vector<double> offset(static_cast<size_t>(feat_dim));
  for (double& v : offset) v = 0.5 * rng.next_gaussian();
  return offset;
}

Codebook load_codebook(const std::string& path) {
  auto tensors = nn::load_tensors(path);
  auto it = tensors.find("codebook");
  if (it == tensors.end())
    throw std::runtime_error("codebook file " + path + " has no 'codebook' tensor");
  return Codebook{it->second};
}

void write_default_codebook(const std::string& path, int32_t v_sem, int64_t feat_dim) {
  RngState rng(0xC0DEB00C);
  Tensor rows = nn::randn({v_sem, feat_dim}, rng, 0.8);
  // Codebook rows must be pairwise distinct so token sequences map
  // injectively to features.
  for (int64_t a = 0; a < rows.rows(); ++a) {
    for (int64_t b = a + 1; b < rows.rows(); ++b) {
      double d2 = 0.0;
      for (int64_t c = 0; c < feat_dim; ++c) {
        double d = rows.at(a, c) - rows.at(b, c);
        d2 += d * d;
      }
      if (d2 < 0.25)
        throw std::logic_error("write_default_codebook: rows too close; change seed");
    }
  }
  nn::save_tensors({{"codebook", rows}}, path);
}

Tensor tokens_to_features(std::span<const int32_t> tokens, const SpeakerProfile& profile,
                          const Codebook& codebook, int64_t frame_ratio, double noise_sigma,
                          RngState& rng) {
  if (tokens.empty()) throw std::invalid_argument("tokens_to_features: empty tokens");
  int64_t d = codebook.feat_dim();
  if (static_cast<int64_t>(profile.feat_offset.size()) != d)
    throw std::invalid_argument("tokens_to_features: offset dimension mismatch");
  int64_t n = static_cast<int64_t>(tokens.size()) * frame_ratio;
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i) {
    int32_t tok = tokens[static_cast<size_t>(i / frame_ratio)];
    if (tok < 0 || tok >= codebook.rows.rows())
      throw std::invalid_argument("tokens_to_features: token id outside codebook");
    for (int64_t c = 0; c < d; ++c) {
      double v = codebook.rows.at(tok, c) + profile.feat_offset[static_cast<size_t>(c)];
      if (noise_sigma > 0.0) v += noise_sigma * rng.next_gaussian();
      out.at(i, c) = v;
    }
  }
  return out;
}

namespace {

constexpr double kWordDur = 0.25;
constexpr double kGap = 0.25;
constexpr double kOverlapDur = 0.125;
constexpr double kSampleRate = 400.0;
constexpr double kNoiseAmp = 0.02;

struct PlannedUtterance {
  int64_t chunk = 0;
  std::string speaker;
  int64_t n_words = 2;
  double start = 0.0;
  double end = 0.0;
  bool punct = false;
  bool overlaps_prev = false;
  bool violated = false;
  double amp = 1.0;
  double coherence = 1.0;
  double similarity = 1.0;
  double quality = 4.5;
};

}  // namespace

Fixture gen_pipeline_fixture(const FixtureSpec& spec) {
  if (spec.chunks < 1 || spec.utterances_per_chunk < 1)
    throw std::invalid_argument("gen_pipeline_fixture: bad spec");
  std::map<int64_t, Violation> violation_of(spec.violations.begin(), spec.violations.end());
  RngState rng(spec.seed);
  Fixture fx;
  int64_t global_utt = 0;

  for (int64_t chunk = 0; chunk < spec.chunks; ++chunk) {
    // Plan utterances.
    std::vector<PlannedUtterance> plan;
    double cursor = 0.5;
    for (int64_t u = 0; u < spec.utterances_per_chunk; ++u, ++global_utt) {
      PlannedUtterance pu;
      pu.chunk = chunk;
      pu.violated = violation_of.count(global_utt) > 0;
      if (u == 0) {
        pu.speaker = "A";
      } else {
        bool repeat = rng.next_bernoulli(0.2);
        pu.speaker = repeat ? plan.back().speaker
                            : (plan.back().speaker == "A" ? std::string("B") : std::string("A"));
      }
      pu.n_words = rng.next_range(2, 4);
      // Violated utterances never overlap (in either direction) so their
      // planted scores cannot leak into a neighbour via the diar-min rule.
      bool can_overlap = u > 0 && !pu.violated && !plan.back().violated &&
                         pu.speaker != plan.back().speaker;
      pu.overlaps_prev = can_overlap && rng.next_bernoulli(0.3);
      pu.start = pu.overlaps_prev ? plan.back().end - kOverlapDur : cursor;
      pu.end = pu.start + kWordDur * static_cast<double>(pu.n_words);
      if (pu.violated) {
        switch (violation_of.at(global_utt)) {
          case Violation::LowSnr: pu.amp = kNoiseAmp; break;
          case Violation::Incoherent: pu.coherence = 0.3; break;
          case Violation::Dissimilar: pu.similarity = 0.4; break;
          case Violation::LowQuality: pu.quality = 2.0; break;
        }
      }
      plan.push_back(pu);
      cursor = std::max(cursor, pu.end) + kGap;
    }
    // Same-speaker boundaries need sentence-final punctuation to separate;
    // other boundaries get punctuation sometimes.
    for (size_t u = 0; u < plan.size(); ++u) {
      bool next_same = u + 1 < plan.size() && plan[u + 1].speaker == plan[u].speaker;
      plan[u].punct = next_same || rng.next_bernoulli(0.6);
    }

    // Render input records.
    pipeline::ChunkData cd;
    int64_t word_index = 0;
    for (size_t ui = 0; ui < plan.size(); ++ui) {
      const PlannedUtterance& pu = plan[ui];
      for (int64_t w = 0; w < pu.n_words; ++w) {
        pipeline::WordRec wr;
        wr.chunk = pu.chunk;
        wr.text = "w" + std::to_string(word_index);
        wr.start = pu.start + kWordDur * static_cast<double>(w);
        wr.end = wr.start + kWordDur;
        cd.words.push_back(wr);
        ++word_index;
      }
      if (pu.punct) cd.punct_after.insert(word_index - 1);
      pipeline::DiarSeg seg;
      seg.speaker = pu.speaker;
      seg.start = pu.start;
      seg.end = pu.end;
      seg.coherence = pu.coherence;
      seg.similarity = pu.similarity;
      seg.quality = pu.quality;
      cd.diar.push_back(seg);
      cd.speech.push_back({pu.start, pu.end});
      if (pu.overlaps_prev) cd.osd.push_back({pu.start, plan[ui - 1].end});
    }

    // Audio: constant noise floor with per-utterance amplitude fills. Values
    // are rounded through f32 up front so the gold scores match what the
    // pipeline recomputes after the DLSP1 round trip.
    double total = plan.back().end + 0.5;
    for (const PlannedUtterance& pu : plan) total = std::max(total, pu.end + 0.5);
    int64_t n_samples = static_cast<int64_t>(std::llround(total * kSampleRate));
    Tensor samples({n_samples});
    for (int64_t i = 0; i < n_samples; ++i)
      samples.at(i) = static_cast<double>(static_cast<float>(kNoiseAmp));
    for (const PlannedUtterance& pu : plan) {
      int64_t a = static_cast<int64_t>(std::llround(pu.start * kSampleRate));
      int64_t b = static_cast<int64_t>(std::llround(pu.end * kSampleRate));
      double amp = static_cast<double>(static_cast<float>(pu.amp));
      for (int64_t i = a; i < b; ++i) samples.at(i) = std::max(samples.at(i), amp);
    }
    std::string audio_rel = "audio_chunk" + std::to_string(chunk) + ".dlsp";
    fx.audio_files[audio_rel] = samples;
    cd.audio_path = audio_rel;
    cd.sample_rate = kSampleRate;
    fx.input.chunks[chunk] = cd;

    // Gold outputs, constructed from the plan. Scores reuse the shared
    // scoring primitives on the same inputs.
    std::vector<pipeline::OverlapInterval> merged = pipeline::merge_overlaps(cd.osd, 0.0);
    std::vector<double> audio_vec(samples.data().begin(), samples.data().end());

    std::vector<pipeline::FilterReport> gold_reports;
    std::vector<std::pair<pipeline::ChannelUtterance, pipeline::FilterReport>> gold_kept;
    std::map<std::string, int32_t> channel_of;
    int64_t wi = 0;
    for (const PlannedUtterance& pu : plan) {
      pipeline::UtteranceRec utt;
      utt.chunk = pu.chunk;
      utt.speaker = pu.speaker;
      utt.start = pu.start;
      utt.end = pu.end;
      utt.punct_closed = pu.punct;
      for (int64_t w = 0; w < pu.n_words; ++w, ++wi) {
        pipeline::LabeledWord lw;
        lw.word = cd.words[static_cast<size_t>(wi)];
        lw.speaker = pu.speaker;
        double mid = 0.5 * (lw.word.start + lw.word.end);
        lw.overlap = std::any_of(merged.begin(), merged.end(), [&](const auto& ov) {
          return ov.start <= mid && mid < ov.end;
        });
        utt.words.push_back(lw);
      }
      pipeline::FilterReport rep;
      rep.chunk = pu.chunk;
      rep.speaker = pu.speaker;
      rep.start = pu.start;
      rep.end = pu.end;
      rep.snr_db = pipeline::snr_estimate(audio_vec, kSampleRate, {{pu.start, pu.end}}, cd.speech);
      rep.coherence = pu.coherence;
      rep.similarity = pu.similarity;
      rep.quality = pu.quality;
      if (!(*rep.snr_db >= spec.thresholds.snr_db)) rep.reasons.push_back("snr");
      if (!(pu.coherence >= spec.thresholds.coherence)) rep.reasons.push_back("cluster");
      if (!(pu.similarity >= spec.thresholds.similarity)) rep.reasons.push_back("similarity");
      if (!(pu.quality >= spec.thresholds.quality)) rep.reasons.push_back("quality");
      rep.kept = rep.reasons.empty();
      gold_reports.push_back(rep);
      if (rep.kept) {
        if (!channel_of.count(pu.speaker)) {
          if (channel_of.size() >= 2) throw std::logic_error("fixture: more than two speakers");
          channel_of[pu.speaker] = static_cast<int32_t>(channel_of.size()) + 1;
        }
        pipeline::ChannelUtterance cu;
        cu.channel = channel_of[pu.speaker];
        cu.utt = utt;
        for (const auto& ov : merged) {
          double lo = std::max(utt.start, ov.start);
          double hi = std::min(utt.end, ov.end);
          if (lo < hi) cu.overlap_spans.emplace_back(lo, hi);
        }
        gold_kept.emplace_back(std::move(cu), rep);
      }
    }
    std::sort(gold_kept.begin(), gold_kept.end(), [](const auto& a, const auto& b) {
      if (a.first.utt.start != b.first.utt.start) return a.first.utt.start < b.first.utt.start;
      return a.first.channel < b.first.channel;
    });
    for (const auto& [cu, rep] : gold_kept)
      fx.gold_manifest.push_back(pipeline::channel_utterance_to_json(chunk, cu, rep));
    for (const auto& rep : gold_reports)
      fx.gold_reports.push_back(pipeline::report_to_json(chunk, rep));
  }
  return fx;
}

void write_fixture_audio(const Fixture& fixture, const std::string& dir) {
  for (const auto& [rel, tensor] : fixture.audio_files)
    nn::save_tensors({{"samples", tensor}}, dir + "/" + rel);
}

}  // namespace dialoflow::synthgen
