#include "dialoflow/dualtrack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dialoflow::dualtrack {

void VocabSpec::validate() const {
  std::set<int32_t> txt_ids{pad, bos, eos, spkchange};
  std::set<int32_t> sem_ids{pad, bos, eos, sil};
  if (txt_ids.size() != 4 || sem_ids.size() != 4)
    throw std::invalid_argument("VocabSpec: reserved ids must be distinct");
  for (int32_t id : txt_ids)
    if (id < 0 || id >= v_txt) throw std::invalid_argument("VocabSpec: reserved id >= v_txt");
  for (int32_t id : sem_ids)
    if (id < 0 || id >= v_sem) throw std::invalid_argument("VocabSpec: reserved id >= v_sem");
  if (txt_content_base() >= v_txt || sem_content_base() >= v_sem)
    throw std::invalid_argument("VocabSpec: no room for content tokens");
}

void DialogueScript::validate(int64_t d_spk) const {
  if (turns.empty()) throw std::invalid_argument("DialogueScript: needs at least one turn");
  for (const Turn& t : turns) {
    if (t.speaker != 1 && t.speaker != 2)
      throw std::invalid_argument("DialogueScript: speaker must be 1 or 2");
    if (t.text.empty()) throw std::invalid_argument("DialogueScript: empty turn text");
  }
  if (static_cast<int64_t>(prompt1.size()) != d_spk ||
      static_cast<int64_t>(prompt2.size()) != d_spk)
    throw std::invalid_argument("DialogueScript: prompt dimension mismatch");
  for (double v : prompt1)
    if (!std::isfinite(v)) throw std::invalid_argument("DialogueScript: non-finite prompt");
  for (double v : prompt2)
    if (!std::isfinite(v)) throw std::invalid_argument("DialogueScript: non-finite prompt");
}

void TurnSchedule::validate() const {
  for (const Interval& iv : intervals) {
    if (iv.channel != 1 && iv.channel != 2)
      throw std::invalid_argument("TurnSchedule: channel must be 1 or 2");
    if (!(0 <= iv.start && iv.start < iv.end && iv.end <= steps))
      throw std::invalid_argument("TurnSchedule: interval out of range");
  }
  // Same-channel intervals must not overlap.
  for (int32_t ch : {1, 2}) {
    std::vector<Interval> chans;
    for (const Interval& iv : intervals)
      if (iv.channel == ch) chans.push_back(iv);
    std::sort(chans.begin(), chans.end(),
              [](const Interval& a, const Interval& b) { return a.start < b.start; });
    for (size_t i = 1; i < chans.size(); ++i) {
      if (chans[i].start < chans[i - 1].end)
        throw std::invalid_argument("TurnSchedule: same-channel intervals overlap");
    }
  }
}

std::vector<int32_t> encode_script(const DialogueScript& script, const VocabSpec& vocab) {
  if (script.turns.empty()) throw std::invalid_argument("encode_script: empty script");
  std::vector<int32_t> out;
  out.push_back(vocab.bos);
  for (size_t i = 0; i < script.turns.size(); ++i) {
    const Turn& t = script.turns[i];
    if (t.text.empty()) throw std::invalid_argument("encode_script: empty turn text");
    if (i > 0) out.push_back(vocab.spkchange);
    for (int32_t id : t.text) {
      if (id < 0 || id >= vocab.v_txt)
        throw std::invalid_argument("encode_script: text token out of range");
      out.push_back(id);
    }
  }
  out.push_back(vocab.eos);
  return out;
}

std::pair<TrackTokens, TrackTokens> tracks_from_schedule(
    const TurnSchedule& schedule, const std::vector<std::vector<int32_t>>& runs,
    const VocabSpec& vocab) {
  schedule.validate();
  if (runs.size() != schedule.intervals.size())
    throw std::invalid_argument("tracks_from_schedule: run count mismatch");
  TrackTokens t1{std::vector<int32_t>(static_cast<size_t>(schedule.steps), vocab.sil), 1};
  TrackTokens t2{std::vector<int32_t>(static_cast<size_t>(schedule.steps), vocab.sil), 2};
  for (size_t k = 0; k < runs.size(); ++k) {
    const Interval& iv = schedule.intervals[k];
    const auto& run = runs[k];
    if (static_cast<int64_t>(run.size()) != iv.end - iv.start)
      throw std::invalid_argument("tracks_from_schedule: run/interval length mismatch");
    auto& dst = (iv.channel == 1) ? t1.tokens : t2.tokens;
    for (int64_t s = iv.start; s < iv.end; ++s) {
      int32_t id = run[static_cast<size_t>(s - iv.start)];
      if (id < 0 || id >= vocab.v_sem)
        throw std::invalid_argument("tracks_from_schedule: semantic token out of range");
      dst[static_cast<size_t>(s)] = id;
    }
  }
  return {std::move(t1), std::move(t2)};
}

std::vector<TokenRun> strip_silence(const TrackTokens& track, const VocabSpec& vocab) {
  std::vector<TokenRun> runs;
  const auto& toks = track.tokens;
  size_t i = 0;
  while (i < toks.size()) {
    if (toks[i] == vocab.sil) {
      ++i;
      continue;
    }
    TokenRun run;
    run.start = static_cast<int64_t>(i);
    while (i < toks.size() && toks[i] != vocab.sil) {
      run.tokens.push_back(toks[i]);
      ++i;
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

namespace {

nlohmann::json script_to_json(const DialogueRecord& rec) {
  nlohmann::json turns = nlohmann::json::array();
  for (const Turn& t : rec.script.turns) turns.push_back({{"spk", t.speaker}, {"text", t.text}});
  return {{"turns", turns},
          {"prompt1", rec.script.prompt1},
          {"prompt2", rec.script.prompt2},
          {"track1", rec.track1},
          {"track2", rec.track2}};
}

}  // namespace

std::string to_jsonl_line(const DialogueRecord& rec) { return script_to_json(rec).dump(); }

DialogueRecord from_jsonl_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  DialogueRecord rec;
  for (const auto& jt : j.at("turns")) {
    Turn t;
    t.speaker = jt.at("spk").get<int32_t>();
    t.text = jt.at("text").get<std::vector<int32_t>>();
    rec.script.turns.push_back(std::move(t));
  }
  rec.script.prompt1 = j.at("prompt1").get<std::vector<double>>();
  rec.script.prompt2 = j.at("prompt2").get<std::vector<double>>();
  // Tracks are absent on script-only files (e.g. synth inputs).
  if (j.contains("track1")) rec.track1 = j.at("track1").get<std::vector<int32_t>>();
  if (j.contains("track2")) rec.track2 = j.at("track2").get<std::vector<int32_t>>();
  if (rec.track1.size() != rec.track2.size())
    throw std::invalid_argument("dialogue record: track length mismatch");
  return rec;
}

void write_jsonl(const std::vector<DialogueRecord>& recs, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    for (const auto& rec : recs) out << to_jsonl_line(rec) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed for " + path);
}

std::vector<DialogueRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<DialogueRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(from_jsonl_line(line));
  }
  return out;
}

}  // namespace dialoflow::dualtrack
