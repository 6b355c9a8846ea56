#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dialoflow/dualtrack.hpp"
#include "dialoflow/pipeline.hpp"
#include "dialoflow/rng.hpp"
#include "dialoflow/tensor.hpp"

namespace dialoflow::synthgen {

// Stochastic dual-speaker dialogue grammar. Timing decisions (pauses,
// overlaps, backchannels) are sampled, then written into each turn's first
// semantic token as an onset marker, so the gold schedule is a deterministic
// function of the script and the LM's task is learnable from text alone.
//
// Onset markers (relative to the semantic content base):
//   +0 butt-joint start    +1 start after a 1-step pause
//   +2 overlap last 1 step +3 overlap last 2 steps
//   +4 backchannel burst inside the previous turn, ending 1 step early
struct GrammarParams {
  int32_t v_txt = 32;
  int32_t v_sem = 32;
  int64_t d_spk = 16;
  int64_t turns_min = 2;
  int64_t turns_max = 4;
  int64_t turn_len_min = 3;
  int64_t turn_len_max = 7;
  double overlap_prob = 0.35;
  int64_t overlap_len_min = 1;
  int64_t overlap_len_max = 2;
  double backchannel_prob = 0.15;
  double pause_prob = 0.15;
  double feature_sigma = 0.1;  // acoustic target noise for tokens_to_features

  void validate() const;
  dualtrack::VocabSpec vocab() const;
};

inline constexpr int64_t kOnsetButt = 0;
inline constexpr int64_t kOnsetPause = 1;
inline constexpr int64_t kOnsetOverlap1 = 2;
inline constexpr int64_t kOnsetOverlap2 = 3;
inline constexpr int64_t kOnsetBackchannel = 4;
inline constexpr int64_t kNumOnsets = 5;

struct StepInterval {
  int64_t start = 0;
  int64_t end = 0;
};

struct GeneratedDialogue {
  dualtrack::DialogueScript script;
  dualtrack::TurnSchedule schedule;         // gold timing
  dualtrack::TrackTokens track1;            // gold tracks (include <SIL>)
  dualtrack::TrackTokens track2;
  std::vector<StepInterval> overlaps;       // gold both-active windows (steps)
  std::vector<std::vector<int32_t>> runs;   // per-interval semantic tokens
};

// Pure function of (params, rng state). Overlap probability 0 disables all
// simultaneous speech, backchannels included.
GeneratedDialogue gen_dialogue(const GrammarParams& params, nn::RngState& rng);

// Speaker identity for synthesis: a unit-norm prompt vector plus the
// feature-space offset derived deterministically from it.
struct SpeakerProfile {
  std::vector<double> speaker_vec;  // d_spk, unit norm
  std::vector<double> feat_offset;  // D
};

SpeakerProfile make_profile(nn::RngState& rng, int64_t d_spk, int64_t feat_dim);
std::vector<double> offset_from_prompt(std::span<const double> prompt, int64_t feat_dim);

// Frozen token -> feature codebook, shipped as a DLSP1 file so targets are
// identical everywhere.
struct Codebook {
  nn::Tensor rows;  // [v_sem x D]
  int64_t feat_dim() const { return rows.cols(); }
};

Codebook load_codebook(const std::string& path);
void write_default_codebook(const std::string& path, int32_t v_sem, int64_t feat_dim);

// Each token becomes frame_ratio frames of codebook row + speaker offset +
// sigma * N(0, I). Injective over token sequences at sigma = 0.
nn::Tensor tokens_to_features(std::span<const int32_t> tokens, const SpeakerProfile& profile,
                              const Codebook& codebook, int64_t frame_ratio, double noise_sigma,
                              nn::RngState& rng);

// --- pipeline fixtures ---

enum class Violation { LowSnr, Incoherent, Dissimilar, LowQuality };

struct FixtureSpec {
  int64_t chunks = 1;
  int64_t utterances_per_chunk = 8;
  // (global utterance index, violation); violated utterances never overlap.
  std::vector<std::pair<int64_t, Violation>> violations;
  pipeline::FilterThresholds thresholds;
  uint64_t seed = 5;
};

struct Fixture {
  pipeline::InputManifest input;
  std::map<std::string, nn::Tensor> audio_files;  // relative path -> samples
  std::vector<std::string> gold_manifest;         // expected pipeline output lines
  std::vector<std::string> gold_reports;          // expected report lines
};

// Constructs input records whose correct pipeline output is known by
// construction; planted violations carry their exact expected reason codes.
Fixture gen_pipeline_fixture(const FixtureSpec& spec);

// Writes fixture audio tensors under dir and returns the input manifest
// with paths relative to dir.
void write_fixture_audio(const Fixture& fixture, const std::string& dir);

}  // namespace dialoflow::synthgen
