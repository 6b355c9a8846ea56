#include "dialoflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dialoflow/checkpoint.hpp"

namespace dialoflow::config {

using nlohmann::json;

namespace {

json sampler_json(const dialm::SamplerConfig& s) {
  return {{"kind", s.kind}, {"k", s.k}, {"temperature", s.temperature}};
}

json train_json(const TrainSection& t) {
  return {{"steps", t.steps},
          {"batch", t.batch},
          {"lr", t.lr},
          {"lr_min_frac", t.lr_min_frac},
          {"log_every", t.log_every}};
}

json extents_json(const std::vector<blockmask::MaskSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) out.push_back({s.back, s.forward});
  return out;
}

json to_json(const AppConfig& c) {
  return json{
      {"seed", c.seed},
      {"dialm",
       {{"layers", c.dialm_model.layers},
        {"hidden", c.dialm_model.hidden},
        {"heads", c.dialm_model.heads},
        {"d_spk", c.dialm_model.d_spk},
        {"max_text", c.dialm_model.max_text},
        {"max_steps", c.dialm_model.max_steps},
        {"sampler", sampler_json(c.dialm_model.sampler)},
        {"train", train_json(c.dialm_train)}}},
      {"cfm",
       {{"hidden", c.cfm_model.hidden},
        {"heads", c.cfm_model.heads},
        {"feat_dim", c.cfm_model.feat_dim},
        {"frame_ratio", c.cfm_model.frame_ratio},
        {"d_spk", c.cfm_model.d_spk},
        {"max_frames", c.cfm_model.max_frames},
        {"block", c.cfm_model.block},
        {"layer_extents", extents_json(c.cfm_model.layer_masks)},
        {"train", train_json(c.cfm_train)}}},
      {"chunk",
       {{"block", c.chunk.block},
        {"past", c.chunk.past},
        {"future", c.chunk.future},
        {"n_ode", c.chunk.n_ode},
        {"method", c.chunk.method},
        {"strict", c.chunk.strict}}},
      {"pipeline",
       {{"chunk_seconds", c.pipeline_chunk_seconds},
        {"gap_tolerance", c.pipeline_gap_tolerance},
        {"snr_db", c.thresholds.snr_db},
        {"coherence", c.thresholds.coherence},
        {"similarity", c.thresholds.similarity},
        {"quality", c.thresholds.quality}}},
      {"grammar",
       {{"v_txt", c.grammar.v_txt},
        {"v_sem", c.grammar.v_sem},
        {"d_spk", c.grammar.d_spk},
        {"turns_min", c.grammar.turns_min},
        {"turns_max", c.grammar.turns_max},
        {"turn_len_min", c.grammar.turn_len_min},
        {"turn_len_max", c.grammar.turn_len_max},
        {"overlap_prob", c.grammar.overlap_prob},
        {"overlap_len_min", c.grammar.overlap_len_min},
        {"overlap_len_max", c.grammar.overlap_len_max},
        {"backchannel_prob", c.grammar.backchannel_prob},
        {"pause_prob", c.grammar.pause_prob},
        {"feature_sigma", c.grammar.feature_sigma}}},
      {"paths", {{"codebook", c.codebook_path}}}};
}

// Rejects any key in `given` that the reference object does not contain,
// recursively.
void check_unknown_keys(const json& given, const json& reference, const std::string& where) {
  if (!given.is_object()) return;
  if (!reference.is_object())
    throw std::invalid_argument("config: unexpected object at " + where);
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!reference.contains(it.key()))
      throw std::invalid_argument("config: unknown key '" +
                                  (where.empty() ? it.key() : where + "." + it.key()) + "'");
    check_unknown_keys(it.value(), reference[it.key()], where.empty() ? it.key() : where + "." + it.key());
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_json(const json& j, AppConfig& c) {
  get_if(j, "seed", c.seed);
  if (j.contains("dialm")) {
    const json& d = j["dialm"];
    get_if(d, "layers", c.dialm_model.layers);
    get_if(d, "hidden", c.dialm_model.hidden);
    get_if(d, "heads", c.dialm_model.heads);
    get_if(d, "d_spk", c.dialm_model.d_spk);
    get_if(d, "max_text", c.dialm_model.max_text);
    get_if(d, "max_steps", c.dialm_model.max_steps);
    if (d.contains("sampler")) {
      const json& s = d["sampler"];
      get_if(s, "kind", c.dialm_model.sampler.kind);
      get_if(s, "k", c.dialm_model.sampler.k);
      get_if(s, "temperature", c.dialm_model.sampler.temperature);
    }
    if (d.contains("train")) {
      const json& t = d["train"];
      get_if(t, "steps", c.dialm_train.steps);
      get_if(t, "batch", c.dialm_train.batch);
      get_if(t, "lr", c.dialm_train.lr);
      get_if(t, "lr_min_frac", c.dialm_train.lr_min_frac);
      get_if(t, "log_every", c.dialm_train.log_every);
    }
  }
  if (j.contains("cfm")) {
    const json& d = j["cfm"];
    get_if(d, "hidden", c.cfm_model.hidden);
    get_if(d, "heads", c.cfm_model.heads);
    get_if(d, "feat_dim", c.cfm_model.feat_dim);
    get_if(d, "frame_ratio", c.cfm_model.frame_ratio);
    get_if(d, "d_spk", c.cfm_model.d_spk);
    get_if(d, "max_frames", c.cfm_model.max_frames);
    get_if(d, "block", c.cfm_model.block);
    if (d.contains("layer_extents")) {
      c.cfm_model.layer_masks.clear();
      for (const auto& e : d["layer_extents"]) {
        if (!e.is_array() || e.size() != 2)
          throw std::invalid_argument("config: cfm.layer_extents entries must be [back, forward]");
        c.cfm_model.layer_masks.push_back(
            {c.cfm_model.block, e[0].get<int64_t>(), e[1].get<int64_t>()});
      }
    }
    if (d.contains("train")) {
      const json& t = d["train"];
      get_if(t, "steps", c.cfm_train.steps);
      get_if(t, "batch", c.cfm_train.batch);
      get_if(t, "lr", c.cfm_train.lr);
      get_if(t, "lr_min_frac", c.cfm_train.lr_min_frac);
      get_if(t, "log_every", c.cfm_train.log_every);
    }
  }
  if (j.contains("chunk")) {
    const json& d = j["chunk"];
    get_if(d, "block", c.chunk.block);
    get_if(d, "past", c.chunk.past);
    get_if(d, "future", c.chunk.future);
    get_if(d, "n_ode", c.chunk.n_ode);
    get_if(d, "method", c.chunk.method);
    get_if(d, "strict", c.chunk.strict);
  }
  if (j.contains("pipeline")) {
    const json& d = j["pipeline"];
    get_if(d, "chunk_seconds", c.pipeline_chunk_seconds);
    get_if(d, "gap_tolerance", c.pipeline_gap_tolerance);
    get_if(d, "snr_db", c.thresholds.snr_db);
    get_if(d, "coherence", c.thresholds.coherence);
    get_if(d, "similarity", c.thresholds.similarity);
    get_if(d, "quality", c.thresholds.quality);
  }
  if (j.contains("grammar")) {
    const json& d = j["grammar"];
    get_if(d, "v_txt", c.grammar.v_txt);
    get_if(d, "v_sem", c.grammar.v_sem);
    get_if(d, "d_spk", c.grammar.d_spk);
    get_if(d, "turns_min", c.grammar.turns_min);
    get_if(d, "turns_max", c.grammar.turns_max);
    get_if(d, "turn_len_min", c.grammar.turn_len_min);
    get_if(d, "turn_len_max", c.grammar.turn_len_max);
    get_if(d, "overlap_prob", c.grammar.overlap_prob);
    get_if(d, "overlap_len_min", c.grammar.overlap_len_min);
    get_if(d, "overlap_len_max", c.grammar.overlap_len_max);
    get_if(d, "backchannel_prob", c.grammar.backchannel_prob);
    get_if(d, "pause_prob", c.grammar.pause_prob);
    get_if(d, "feature_sigma", c.grammar.feature_sigma);
  }
  if (j.contains("paths")) {
    get_if(j["paths"], "codebook", c.codebook_path);
  }
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);  // bare strings allowed
  }
}

}  // namespace

void AppConfig::validate() const {
  dialm_model.validate();
  cfm_model.validate();
  grammar.validate();
  if (grammar.d_spk != dialm_model.d_spk || grammar.d_spk != cfm_model.d_spk)
    throw std::invalid_argument("config: d_spk must agree across dialm, cfm and grammar");
  if (grammar.v_sem != cfm_model.v_sem)
    throw std::invalid_argument("config: cfm v_sem is derived from grammar.v_sem");
  if (dialm_train.steps < 0 || cfm_train.steps < 0)
    throw std::invalid_argument("config: negative step counts");
}

AppConfig AppConfig::paper_preset() {
  AppConfig c;
  c.dialm_model.layers = 16;
  c.dialm_model.hidden = 1024;
  c.dialm_model.heads = 16;
  c.dialm_train.lr = 1e-4;
  c.dialm_train.steps = 150000;
  c.cfm_model.hidden = 768;
  c.cfm_model.layer_masks.assign(22, {c.cfm_model.block, 1, 1});
  c.cfm_train.lr = 1e-4;
  return c;
}

std::string dump_config(const AppConfig& cfg) { return to_json(cfg).dump(2); }

AppConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  AppConfig defaults;
  json ref = to_json(defaults);
  json given;
  try {
    given = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  check_unknown_keys(given, ref, "");
  AppConfig cfg;
  apply_json(given, cfg);

  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config override must be key.path=value: " + ov);
    std::string path = ov.substr(0, eq);
    json patch = parse_override_value(ov.substr(eq + 1));
    // Build a nested single-key object and re-apply.
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("config override: empty key path");
    json nested = patch;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) nested = json{{*it, nested}};
    check_unknown_keys(nested, ref, "");
    apply_json(nested, cfg);
  }

  // cfm layer masks carry the block size; keep them in sync when only the
  // block was overridden.
  for (auto& spec : cfg.cfm_model.layer_masks) spec.block = cfg.cfm_model.block;
  // The CFM vocabulary follows the grammar's semantic vocabulary.
  cfg.cfm_model.v_sem = cfg.grammar.v_sem;
  cfg.validate();
  return cfg;
}

AppConfig load_config_file(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string config_hash(const AppConfig& cfg) {
  return nn::bytes_hash_hex(to_json(cfg).dump());
}

}  // namespace dialoflow::config
