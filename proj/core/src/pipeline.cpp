#include "dialoflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "dialoflow/checkpoint.hpp"

namespace dialoflow::pipeline {

std::vector<std::pair<double, double>> segment_chunks(double total_seconds,
                                                      double chunk_seconds) {
  if (!(total_seconds > 0.0)) throw std::invalid_argument("segment_chunks: non-positive duration");
  if (!(chunk_seconds > 0.0))
    throw std::invalid_argument("segment_chunks: non-positive chunk length");
  std::vector<std::pair<double, double>> out;
  double start = 0.0;
  int64_t k = 0;
  while (start < total_seconds) {
    double end = std::min(total_seconds, static_cast<double>(k + 1) * chunk_seconds);
    out.emplace_back(start, end);
    ++k;
    start = static_cast<double>(k) * chunk_seconds;
  }
  return out;
}

namespace {

double overlap_len(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

std::vector<LabeledWord> assign_words(const std::vector<WordRec>& words,
                                      const std::vector<DiarSeg>& diar) {
  // Sort segments by (start, end, speaker) so the earlier-start tie-break is
  // independent of input order.
  std::vector<const DiarSeg*> segs;
  segs.reserve(diar.size());
  for (const DiarSeg& s : diar) {
    if (!(s.start < s.end)) throw std::invalid_argument("assign_words: bad diar segment");
    segs.push_back(&s);
  }
  std::sort(segs.begin(), segs.end(), [](const DiarSeg* a, const DiarSeg* b) {
    if (a->start != b->start) return a->start < b->start;
    if (a->end != b->end) return a->end < b->end;
    return a->speaker < b->speaker;
  });
  std::vector<LabeledWord> out;
  out.reserve(words.size());
  for (const WordRec& w : words) {
    if (!(w.start < w.end)) throw std::invalid_argument("assign_words: bad word interval");
    // Accumulate overlap per speaker; the winner is the speaker with maximal
    // total overlap, ties toward the one whose earliest overlapping segment
    // starts first.
    std::map<std::string, double> totals;
    std::map<std::string, double> first_start;
    for (const DiarSeg* s : segs) {
      double ov = overlap_len(w.start, w.end, s->start, s->end);
      if (ov <= 0.0) continue;
      totals[s->speaker] += ov;
      if (!first_start.count(s->speaker)) first_start[s->speaker] = s->start;
    }
    LabeledWord lw;
    lw.word = w;
    lw.speaker = kUnknownSpeaker;
    double best = 0.0;
    double best_start = std::numeric_limits<double>::infinity();
    for (const auto& [spk, total] : totals) {
      double fs = first_start[spk];
      if (total > best || (total == best && fs < best_start)) {
        best = total;
        best_start = fs;
        lw.speaker = spk;
      }
    }
    out.push_back(std::move(lw));
  }
  return out;
}

std::vector<OverlapInterval> merge_overlaps(std::vector<OverlapInterval> intervals,
                                            double gap_tolerance) {
  for (const OverlapInterval& iv : intervals)
    if (!(iv.start < iv.end)) throw std::invalid_argument("merge_overlaps: bad interval");
  if (gap_tolerance < 0.0) throw std::invalid_argument("merge_overlaps: negative tolerance");
  std::sort(intervals.begin(), intervals.end(), [](const OverlapInterval& a, const OverlapInterval& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  std::vector<OverlapInterval> out;
  for (const OverlapInterval& iv : intervals) {
    if (!out.empty() && iv.start <= out.back().end + gap_tolerance) {
      out.back().end = std::max(out.back().end, iv.end);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

BuildResult build_utterances(const std::vector<LabeledWord>& words,
                             const std::set<int64_t>& punct_after,
                             const std::vector<OverlapInterval>& overlaps) {
  BuildResult result;
  UtteranceRec cur;
  auto flush = [&](bool punct) {
    if (cur.words.empty()) return;
    cur.speaker = cur.words.front().speaker;
    cur.start = cur.words.front().word.start;
    cur.end = cur.words.back().word.end;
    cur.punct_closed = punct;
    result.utterances.push_back(std::move(cur));
    cur = UtteranceRec{};
  };
  for (size_t i = 0; i < words.size(); ++i) {
    LabeledWord lw = words[i];
    if (lw.speaker == kUnknownSpeaker) {
      result.warnings.push_back("word '" + lw.word.text + "' at " +
                                std::to_string(lw.word.start) + " has no speaker; excluded");
      continue;
    }
    double mid = 0.5 * (lw.word.start + lw.word.end);
    lw.overlap = std::any_of(overlaps.begin(), overlaps.end(), [&](const OverlapInterval& ov) {
      return ov.start <= mid && mid < ov.end;
    });
    if (!cur.words.empty() && cur.words.front().speaker != lw.speaker) flush(false);
    cur.chunk = lw.word.chunk;
    cur.words.push_back(std::move(lw));
    if (punct_after.count(static_cast<int64_t>(i))) flush(true);
  }
  flush(false);
  return result;
}

namespace {

double mean_square_over(std::span<const double> samples, double sample_rate,
                        const std::vector<SpeechInterval>& intervals, bool complement,
                        int64_t* count_out) {
  int64_t n = static_cast<int64_t>(samples.size());
  std::vector<uint8_t> in_speech(static_cast<size_t>(n), 0);
  for (const SpeechInterval& iv : intervals) {
    int64_t a = std::max<int64_t>(0, static_cast<int64_t>(std::llround(iv.start * sample_rate)));
    int64_t b = std::min<int64_t>(n, static_cast<int64_t>(std::llround(iv.end * sample_rate)));
    for (int64_t i = a; i < b; ++i) in_speech[static_cast<size_t>(i)] = 1;
  }
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    if ((in_speech[static_cast<size_t>(i)] != 0) == complement) continue;
    acc += samples[static_cast<size_t>(i)] * samples[static_cast<size_t>(i)];
    ++count;
  }
  *count_out = count;
  return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

double snr_estimate(std::span<const double> samples, double sample_rate,
                    const std::vector<SpeechInterval>& speech,
                    const std::vector<SpeechInterval>& noise_exclusion) {
  if (samples.empty()) throw std::invalid_argument("snr_estimate: empty sample array");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("snr_estimate: bad sample rate");
  for (const SpeechInterval& iv : speech) {
    if (!(iv.start < iv.end) || iv.start < 0.0 ||
        iv.end * sample_rate > static_cast<double>(samples.size()) + 0.5)
      throw std::invalid_argument("snr_estimate: interval out of range");
  }
  int64_t n_speech = 0, n_noise = 0;
  double p_speech = mean_square_over(samples, sample_rate, speech, false, &n_speech);
  double p_noise = mean_square_over(samples, sample_rate, noise_exclusion, true, &n_noise);
  if (n_speech == 0) throw std::invalid_argument("snr_estimate: empty speech region");
  if (n_noise == 0 || p_noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p_speech / p_noise);
}

double snr_estimate(std::span<const double> samples, double sample_rate,
                    const std::vector<SpeechInterval>& speech) {
  return snr_estimate(samples, sample_rate, speech, speech);
}

Scorers make_mock_scorers(const std::vector<DiarSeg>& diar, std::span<const double> audio_samples,
                          double sample_rate, const std::vector<SpeechInterval>& vad_speech) {
  auto planted = [diar](const UtteranceRec& u, auto field) {
    double best = std::numeric_limits<double>::infinity();
    for (const DiarSeg& s : diar) {
      if (overlap_len(u.start, u.end, s.start, s.end) <= 0.0) continue;
      best = std::min(best, field(s));
    }
    if (!std::isfinite(best))
      throw std::runtime_error("mock scorer: utterance overlaps no diar segment");
    return best;
  };
  Scorers sc;
  std::vector<double> audio(audio_samples.begin(), audio_samples.end());
  sc.snr = [audio = std::move(audio), sample_rate, vad_speech](const UtteranceRec& u) {
    if (audio.empty()) return std::numeric_limits<double>::infinity();
    return snr_estimate(audio, sample_rate, {{u.start, u.end}}, vad_speech);
  };
  sc.coherence = [planted](const UtteranceRec& u) {
    return planted(u, [](const DiarSeg& s) { return s.coherence; });
  };
  sc.similarity = [planted](const UtteranceRec& u) {
    return planted(u, [](const DiarSeg& s) { return s.similarity; });
  };
  sc.quality = [planted](const UtteranceRec& u) {
    return planted(u, [](const DiarSeg& s) { return s.quality; });
  };
  return sc;
}

std::pair<std::vector<UtteranceRec>, std::vector<FilterReport>> filter_segments(
    const std::vector<UtteranceRec>& segments, const Scorers& scorers,
    const FilterThresholds& thresholds) {
  std::vector<UtteranceRec> kept;
  std::vector<FilterReport> reports;
  for (const UtteranceRec& seg : segments) {
    FilterReport rep;
    rep.chunk = seg.chunk;
    rep.speaker = seg.speaker;
    rep.start = seg.start;
    rep.end = seg.end;
    struct Stage {
      const char* reason;
      const std::function<double(const UtteranceRec&)>* fn;
      std::optional<double>* slot;
      double threshold;
    };
    Stage stages[] = {
        {"snr", &scorers.snr, &rep.snr_db, thresholds.snr_db},
        {"cluster", &scorers.coherence, &rep.coherence, thresholds.coherence},
        {"similarity", &scorers.similarity, &rep.similarity, thresholds.similarity},
        {"quality", &scorers.quality, &rep.quality, thresholds.quality},
    };
    for (const Stage& st : stages) {
      if (!*st.fn) continue;  // scorer disabled
      try {
        double score = (*st.fn)(seg);
        *st.slot = score;
        if (!(score >= st.threshold)) rep.reasons.push_back(st.reason);
      } catch (const std::exception&) {
        rep.reasons.push_back("scorer_error");
      }
    }
    rep.kept = rep.reasons.empty();
    if (rep.kept) kept.push_back(seg);
    reports.push_back(std::move(rep));
  }
  return {std::move(kept), std::move(reports)};
}

SeparationBackend passthrough_backend() {
  return [](const UtteranceRec& u, const std::vector<OverlapInterval>&) { return u; };
}

std::vector<ChannelUtterance> split_dual_track(const std::vector<UtteranceRec>& utterances,
                                               const std::vector<OverlapInterval>& overlaps,
                                               const SeparationBackend& backend) {
  std::map<std::string, int32_t> channel_of;
  for (const UtteranceRec& u : utterances) {
    if (channel_of.count(u.speaker)) continue;
    if (channel_of.size() >= 2)
      throw std::invalid_argument("dual-track requires two speakers; extra speaker " + u.speaker);
    channel_of[u.speaker] = static_cast<int32_t>(channel_of.size()) + 1;
  }
  std::vector<ChannelUtterance> out;
  out.reserve(utterances.size());
  for (const UtteranceRec& u : utterances) {
    ChannelUtterance cu;
    cu.channel = channel_of.at(u.speaker);
    cu.utt = backend(u, overlaps);
    for (const OverlapInterval& ov : overlaps) {
      double lo = std::max(u.start, ov.start);
      double hi = std::min(u.end, ov.end);
      if (lo < hi) cu.overlap_spans.emplace_back(lo, hi);
    }
    out.push_back(std::move(cu));
  }
  return out;
}

namespace {

using nlohmann::json;

json word_to_json(const LabeledWord& w) {
  return {{"text", w.word.text},
          {"start", w.word.start},
          {"end", w.word.end},
          {"overlap", w.overlap}};
}

json scores_json(const FilterReport& rep) {
  json j = json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v.has_value() && std::isfinite(*v))
      j[key] = *v;
    else if (v.has_value())
      j[key] = "inf";
    else
      j[key] = nullptr;
  };
  put("snr_db", rep.snr_db);
  put("coherence", rep.coherence);
  put("similarity", rep.similarity);
  put("quality", rep.quality);
  return j;
}

}  // namespace

std::string channel_utterance_to_json(int64_t dialogue, const ChannelUtterance& cu,
                                      const FilterReport& report) {
  json words = json::array();
  for (const LabeledWord& w : cu.utt.words) words.push_back(word_to_json(w));
  json spans = json::array();
  for (const auto& [s, e] : cu.overlap_spans) spans.push_back({s, e});
  json j = {{"kind", "utt"},       {"dialogue", dialogue}, {"channel", cu.channel},
            {"spk", cu.utt.speaker}, {"start", cu.utt.start}, {"end", cu.utt.end},
            {"words", words},      {"overlap_spans", spans}, {"filters", scores_json(report)}};
  return j.dump();
}

std::string report_to_json(int64_t dialogue, const FilterReport& report) {
  json j = {{"kind", "report"},      {"dialogue", dialogue},    {"spk", report.speaker},
            {"start", report.start}, {"end", report.end},       {"scores", scores_json(report)},
            {"kept", report.kept},   {"reasons", report.reasons}};
  return j.dump();
}

namespace {

WordRec parse_word(const json& j) {
  WordRec w;
  w.chunk = j.value("chunk", 0);
  w.text = j.at("text").get<std::string>();
  w.start = j.at("start").get<double>();
  w.end = j.at("end").get<double>();
  return w;
}

}  // namespace

InputManifest read_input_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  InputManifest manifest;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest " + path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    std::string kind = j.at("kind").get<std::string>();
    int64_t chunk = j.value("chunk", 0);
    ChunkData& cd = manifest.chunks[chunk];
    if (kind == "word") {
      cd.words.push_back(parse_word(j));
    } else if (kind == "diar") {
      DiarSeg s;
      s.speaker = j.at("spk").get<std::string>();
      s.start = j.at("start").get<double>();
      s.end = j.at("end").get<double>();
      s.coherence = j.value("coherence", 1.0);
      s.similarity = j.value("similarity", 1.0);
      s.quality = j.value("quality", 5.0);
      cd.diar.push_back(std::move(s));
    } else if (kind == "osd") {
      cd.osd.push_back({j.at("start").get<double>(), j.at("end").get<double>()});
    } else if (kind == "speech") {
      cd.speech.push_back({j.at("start").get<double>(), j.at("end").get<double>()});
    } else if (kind == "punct") {
      cd.punct_after.insert(j.at("word_index").get<int64_t>());
    } else if (kind == "audio") {
      cd.audio_path = j.at("path").get<std::string>();
      cd.sample_rate = j.at("sample_rate").get<double>();
    } else {
      throw std::runtime_error("manifest " + path + ":" + std::to_string(lineno) +
                               ": unknown record kind '" + kind + "'");
    }
  }
  return manifest;
}

void write_input_manifest(const InputManifest& manifest, const std::string& path) {
  std::vector<std::string> lines;
  for (const auto& [chunk, cd] : manifest.chunks) {
    for (const WordRec& w : cd.words)
      lines.push_back(json{{"kind", "word"},
                           {"chunk", chunk},
                           {"text", w.text},
                           {"start", w.start},
                           {"end", w.end}}
                          .dump());
    for (const DiarSeg& s : cd.diar) {
      json j = {{"kind", "diar"}, {"chunk", chunk}, {"spk", s.speaker},
                {"start", s.start}, {"end", s.end}};
      if (s.coherence != 1.0) j["coherence"] = s.coherence;
      if (s.similarity != 1.0) j["similarity"] = s.similarity;
      if (s.quality != 5.0) j["quality"] = s.quality;
      lines.push_back(j.dump());
    }
    for (const OverlapInterval& o : cd.osd)
      lines.push_back(
          json{{"kind", "osd"}, {"chunk", chunk}, {"start", o.start}, {"end", o.end}}.dump());
    for (const SpeechInterval& s : cd.speech)
      lines.push_back(
          json{{"kind", "speech"}, {"chunk", chunk}, {"start", s.start}, {"end", s.end}}.dump());
    for (int64_t wi : cd.punct_after)
      lines.push_back(json{{"kind", "punct"}, {"chunk", chunk}, {"word_index", wi}}.dump());
    if (!cd.audio_path.empty())
      lines.push_back(json{{"kind", "audio"},
                           {"chunk", chunk},
                           {"path", cd.audio_path},
                           {"sample_rate", cd.sample_rate}}
                          .dump());
  }
  emit_manifest(lines, path);
}

PipelineResult run_pipeline(const InputManifest& manifest, const PipelineOptions& opts) {
  PipelineResult result;
  for (const auto& [chunk, cd] : manifest.chunks) {
    std::vector<WordRec> words = cd.words;
    std::sort(words.begin(), words.end(), [](const WordRec& a, const WordRec& b) {
      if (a.start != b.start) return a.start < b.start;
      return a.end < b.end;
    });
    std::vector<LabeledWord> labeled = assign_words(words, cd.diar);
    std::vector<OverlapInterval> overlaps = merge_overlaps(cd.osd, opts.gap_tolerance);
    BuildResult built = build_utterances(labeled, cd.punct_after, overlaps);
    for (const std::string& w : built.warnings)
      result.warnings.push_back("chunk " + std::to_string(chunk) + ": " + w);

    std::vector<double> audio;
    if (!cd.audio_path.empty()) {
      std::string full = opts.audio_dir.empty() ? cd.audio_path
                                                : opts.audio_dir + "/" + cd.audio_path;
      auto tensors = nn::load_tensors(full);
      auto it = tensors.find("samples");
      if (it == tensors.end())
        throw std::runtime_error("audio file " + full + " has no 'samples' tensor");
      audio.assign(it->second.data().begin(), it->second.data().end());
    }
    Scorers scorers = make_mock_scorers(cd.diar, audio, cd.sample_rate, cd.speech);
    auto [kept, reports] = filter_segments(built.utterances, scorers, opts.thresholds);
    std::vector<ChannelUtterance> channels =
        split_dual_track(kept, overlaps, passthrough_backend());

    // Pair kept channel records with their reports for the filters block.
    auto find_report = [&](const UtteranceRec& u) -> const FilterReport& {
      for (const FilterReport& r : reports) {
        if (r.start == u.start && r.end == u.end && r.speaker == u.speaker) return r;
      }
      throw std::logic_error("run_pipeline: missing report");
    };
    std::sort(channels.begin(), channels.end(), [](const ChannelUtterance& a, const ChannelUtterance& b) {
      if (a.utt.start != b.utt.start) return a.utt.start < b.utt.start;
      return a.channel < b.channel;
    });
    for (const ChannelUtterance& cu : channels)
      result.manifest_lines.push_back(channel_utterance_to_json(chunk, cu, find_report(cu.utt)));
    for (const FilterReport& r : reports) result.report_lines.push_back(report_to_json(chunk, r));
  }
  return result;
}

void emit_manifest(const std::vector<std::string>& lines, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    for (const std::string& line : lines) out << line << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed for " + path);
}

}  // namespace dialoflow::pipeline
