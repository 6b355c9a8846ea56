#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace dialoflow::pipeline {

inline constexpr const char* kUnknownSpeaker = "UNK";

struct WordRec {
  int64_t chunk = 0;
  std::string text;
  double start = 0.0;
  double end = 0.0;
};

// Diarization segment. The embedding-derived fields (coherence, similarity,
// quality) are produced upstream by the pluggable scorer backends; the
// deterministic mocks read them straight from the manifest with pass-all
// defaults.
struct DiarSeg {
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
  double coherence = 1.0;
  double similarity = 1.0;
  double quality = 5.0;
};

struct OverlapInterval {
  double start = 0.0;
  double end = 0.0;
};

struct SpeechInterval {
  double start = 0.0;
  double end = 0.0;
};

struct LabeledWord {
  WordRec word;
  std::string speaker;  // kUnknownSpeaker when no diar segment overlaps
  bool overlap = false;
};

struct UtteranceRec {
  int64_t chunk = 0;
  std::string speaker;
  std::vector<LabeledWord> words;
  double start = 0.0;
  double end = 0.0;
  bool punct_closed = false;
};

struct FilterThresholds {
  double snr_db = 10.0;
  double coherence = 0.7;
  double similarity = 0.7;
  double quality = 3.0;
};

struct FilterReport {
  int64_t chunk = 0;
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
  std::optional<double> snr_db;
  std::optional<double> coherence;
  std::optional<double> similarity;
  std::optional<double> quality;
  bool kept = true;
  std::vector<std::string> reasons;  // "snr", "cluster", "similarity", "quality", "scorer_error"
};

// --- stage operations ---

// Consecutive [k*c, min((k+1)*c, dur)) intervals covering (0, dur] exactly.
std::vector<std::pair<double, double>> segment_chunks(double total_seconds,
                                                      double chunk_seconds = 1200.0);

// Max-overlap speaker assignment; ties break toward the earlier-starting
// segment; words with zero overlap get kUnknownSpeaker. Total and invariant
// under diar-segment reordering.
std::vector<LabeledWord> assign_words(const std::vector<WordRec>& words,
                                      const std::vector<DiarSeg>& diar);

// Sweep-line union; intervals within gap_tolerance of each other merge.
std::vector<OverlapInterval> merge_overlaps(std::vector<OverlapInterval> intervals,
                                            double gap_tolerance = 0.0);

struct BuildResult {
  std::vector<UtteranceRec> utterances;
  std::vector<std::string> warnings;  // one per excluded UNK word
};

// Utterance boundary at speaker change or sentence-final punctuation
// (punct_after holds global word indices that close a sentence). A word is
// flagged overlap when its midpoint lies inside a merged overlap interval.
BuildResult build_utterances(const std::vector<LabeledWord>& words,
                             const std::set<int64_t>& punct_after,
                             const std::vector<OverlapInterval>& overlaps);

// 10*log10(P_speech / P_nonspeech) with mean-square powers over the given
// speech intervals vs their complement. Returns +inf when the non-speech
// region is empty or silent; throws when the speech region is empty.
double snr_estimate(std::span<const double> samples, double sample_rate,
                    const std::vector<SpeechInterval>& speech);

// Variant used by filtering: noise is the complement of `noise_exclusion`
// (typically every VAD speech interval in the chunk), not of `speech`.
double snr_estimate(std::span<const double> samples, double sample_rate,
                    const std::vector<SpeechInterval>& speech,
                    const std::vector<SpeechInterval>& noise_exclusion);

// Pluggable per-utterance scorers. Built-in SNR plus mock cluster-coherence,
// speaker-similarity and quality backends.
struct Scorers {
  std::function<double(const UtteranceRec&)> snr;
  std::function<double(const UtteranceRec&)> coherence;
  std::function<double(const UtteranceRec&)> similarity;
  std::function<double(const UtteranceRec&)> quality;
};

// Deterministic mocks: coherence/similarity/quality are the minimum of the
// planted diar-segment fields the utterance overlaps (pass-all defaults).
// SNR uses the chunk audio when present, +inf otherwise.
Scorers make_mock_scorers(const std::vector<DiarSeg>& diar,
                          std::span<const double> audio_samples, double sample_rate,
                          const std::vector<SpeechInterval>& vad_speech);

// Stage order fixed: SNR -> clustering -> similarity -> quality. A segment
// is kept iff every enabled score passes; reports carry all scores and
// every failing reason in stage order.
std::pair<std::vector<UtteranceRec>, std::vector<FilterReport>> filter_segments(
    const std::vector<UtteranceRec>& segments, const Scorers& scorers,
    const FilterThresholds& thresholds);

struct ChannelUtterance {
  int32_t channel = 1;
  UtteranceRec utt;
  std::vector<std::pair<double, double>> overlap_spans;
};

// Separation backend interface; the mock is a ground-truth passthrough.
using SeparationBackend =
    std::function<UtteranceRec(const UtteranceRec&, const std::vector<OverlapInterval>&)>;
SeparationBackend passthrough_backend();

// Stable 2-coloring of utterances by speaker (first speaker seen -> channel
// 1). Overlap spans are attached per record. More than two speakers is an
// error.
std::vector<ChannelUtterance> split_dual_track(const std::vector<UtteranceRec>& utterances,
                                               const std::vector<OverlapInterval>& overlaps,
                                               const SeparationBackend& backend);

// --- manifest I/O ---

struct ChunkData {
  std::vector<WordRec> words;
  std::vector<DiarSeg> diar;
  std::vector<OverlapInterval> osd;
  std::vector<SpeechInterval> speech;
  std::set<int64_t> punct_after;
  std::string audio_path;  // DLSP1 file with tensor "samples", optional
  double sample_rate = 0.0;
};

struct InputManifest {
  std::map<int64_t, ChunkData> chunks;
};

InputManifest read_input_manifest(const std::string& path);
void write_input_manifest(const InputManifest& manifest, const std::string& path);

std::string channel_utterance_to_json(int64_t dialogue, const ChannelUtterance& cu,
                                      const FilterReport& report);
std::string report_to_json(int64_t dialogue, const FilterReport& report);

struct PipelineResult {
  std::vector<std::string> manifest_lines;  // "utt" records, ordered
  std::vector<std::string> report_lines;    // one per scored segment, ordered
  std::vector<std::string> warnings;
};

struct PipelineOptions {
  FilterThresholds thresholds;
  double gap_tolerance = 0.0;
  std::string audio_dir;  // base for relative audio paths
};

// Full per-chunk pipeline: assign words, merge overlaps, build utterances,
// filter, split into channels, and render deterministic JSONL lines ordered
// by (chunk, start, channel).
PipelineResult run_pipeline(const InputManifest& manifest, const PipelineOptions& opts);

// Writes lines + "\n" atomically (temp + rename).
void emit_manifest(const std::vector<std::string>& lines, const std::string& path);

}  // namespace dialoflow::pipeline
