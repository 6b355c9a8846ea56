#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dialoflow::dualtrack {

// Token id spaces for the text stream and the semantic (speech) stream.
// <SIL> lives in the semantic vocabulary, [spkchange] in the text one;
// <BOS>/<EOS>/<PAD> exist in both.
struct VocabSpec {
  int32_t v_txt = 32;
  int32_t v_sem = 32;

  int32_t pad = 0;
  int32_t bos = 1;
  int32_t eos = 2;
  int32_t sil = 3;        // semantic stream only
  int32_t spkchange = 3;  // text stream only

  int32_t txt_content_base() const { return spkchange + 1; }
  int32_t sem_content_base() const { return sil + 1; }

  void validate() const;
  bool is_sem_content(int32_t id) const { return id >= sem_content_base() && id < v_sem; }
};

struct Turn {
  int32_t speaker = 1;  // 1 or 2
  std::vector<int32_t> text;
};

struct DialogueScript {
  std::vector<Turn> turns;
  std::vector<double> prompt1;  // speaker vector, d_spk
  std::vector<double> prompt2;

  void validate(int64_t d_spk) const;
};

struct TrackTokens {
  std::vector<int32_t> tokens;  // length N, ids < v_sem
  int32_t channel = 1;
};

struct Interval {
  int32_t channel = 1;
  int64_t start = 0;  // steps, [start, end)
  int64_t end = 0;
};

// Per-channel activity intervals over the shared step timeline.
struct TurnSchedule {
  std::vector<Interval> intervals;
  int64_t steps = 0;  // N; >= max end

  void validate() const;
};

// <BOS> + turn tokens with [spkchange] between consecutive turns + <EOS>.
std::vector<int32_t> encode_script(const DialogueScript& script, const VocabSpec& vocab);

// Lays interval token runs onto two <SIL>-filled tracks of length
// schedule.steps. runs[k] must have the same length as intervals[k].
std::pair<TrackTokens, TrackTokens> tracks_from_schedule(
    const TurnSchedule& schedule, const std::vector<std::vector<int32_t>>& runs,
    const VocabSpec& vocab);

struct TokenRun {
  int64_t start = 0;
  std::vector<int32_t> tokens;
};

// Maximal non-<SIL> runs with their offsets. Concatenating runs and <SIL>
// gaps reconstructs the track exactly.
std::vector<TokenRun> strip_silence(const TrackTokens& track, const VocabSpec& vocab);

// JSONL (one dialogue per line): {"turns":[{"spk":1,"text":[...]},...],
// "prompt1":[...], "prompt2":[...], "track1":[...], "track2":[...]}
struct DialogueRecord {
  DialogueScript script;
  std::vector<int32_t> track1;
  std::vector<int32_t> track2;
};

std::string to_jsonl_line(const DialogueRecord& rec);
DialogueRecord from_jsonl_line(const std::string& line);
void write_jsonl(const std::vector<DialogueRecord>& recs, const std::string& path);
std::vector<DialogueRecord> read_jsonl(const std::string& path);

}  // namespace dialoflow::dualtrack
