#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dialoflow/checkpoint.hpp"
#include "dialoflow/config.hpp"
#include "dialoflow/eval.hpp"
#include "dialoflow/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dialoflow;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string workdir = ".";
};

struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

config::AppConfig resolve_config(const Common& common) {
  config::AppConfig cfg;
  try {
    cfg = common.config_path.empty()
              ? config::parse_config("{}", common.overrides)
              : config::load_config_file(common.config_path, common.overrides);
  } catch (const std::invalid_argument& e) {
    throw ValidationFailure(e.what());
  }
  if (const char* env = std::getenv("DIALOFLOW_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  return cfg;
}

std::string resolved(const Common& common, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(common.workdir) / path).string();
}

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void log_event(const json& fields) { std::cerr << fields.dump() << "\n"; }

void write_text_atomic(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed for " + path);
}

void write_checkpoint_sidecar(const std::string& ckpt_path, const config::AppConfig& cfg) {
  json meta = {{"seed", cfg.seed},
               {"config_hash", config::config_hash(cfg)},
               {"checkpoint_hash", nn::file_hash_hex(ckpt_path)}};
  write_text_atomic(ckpt_path + ".meta.json", meta.dump(2) + "\n");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::exists(path))
    throw ValidationFailure(std::string(what) + " not found: " + path);
}

// --- gen-data ---

int cmd_gen_data(const Common& common, const std::string& out_dir, int64_t num, int64_t heldout,
                 bool fixture, bool write_codebook) {
  config::AppConfig cfg = resolve_config(common);
  std::string dir = resolved(common, out_dir);
  fs::create_directories(dir);
  log_event({{"event", "config"}, {"config_hash", config::config_hash(cfg)}, {"seed", cfg.seed}});

  if (write_codebook) {
    std::string cb = resolved(common, cfg.codebook_path);
    fs::create_directories(fs::path(cb).parent_path());
    synthgen::write_default_codebook(cb, cfg.grammar.v_sem, cfg.cfm_model.feat_dim);
    log_event({{"event", "codebook"}, {"path", cb}, {"hash", nn::file_hash_hex(cb)}});
  }

  if (fixture) {
    synthgen::FixtureSpec spec;
    spec.seed = cfg.seed;
    spec.chunks = 2;
    spec.utterances_per_chunk = 8;
    spec.thresholds = cfg.thresholds;
    spec.violations = {{2, synthgen::Violation::LowSnr},
                       {5, synthgen::Violation::Incoherent},
                       {9, synthgen::Violation::Dissimilar},
                       {12, synthgen::Violation::LowQuality}};
    synthgen::Fixture fx = synthgen::gen_pipeline_fixture(spec);
    synthgen::write_fixture_audio(fx, dir);
    pipeline::write_input_manifest(fx.input, dir + "/input_manifest.jsonl");
    pipeline::emit_manifest(fx.gold_manifest, dir + "/gold_manifest.jsonl");
    pipeline::emit_manifest(fx.gold_reports, dir + "/gold_reports.jsonl");
    log_event({{"event", "fixture"}, {"dir", dir}});
    return 0;
  }

  nn::RngState rng(cfg.seed);
  auto gen_set = [&](int64_t count, uint64_t stream) {
    std::vector<dualtrack::DialogueRecord> recs;
    nn::RngState set_rng = rng.split(stream);
    for (int64_t i = 0; i < count; ++i) {
      nn::RngState item_rng = set_rng.split(static_cast<uint64_t>(i));
      synthgen::GeneratedDialogue dlg = synthgen::gen_dialogue(cfg.grammar, item_rng);
      dualtrack::DialogueRecord rec;
      rec.script = dlg.script;
      rec.track1 = dlg.track1.tokens;
      rec.track2 = dlg.track2.tokens;
      recs.push_back(std::move(rec));
    }
    return recs;
  };
  auto train = gen_set(num, 1);
  dualtrack::write_jsonl(train, dir + "/dialogues.jsonl");
  if (heldout > 0) {
    auto held = gen_set(heldout, 2);
    dualtrack::write_jsonl(held, dir + "/heldout.jsonl");
  }
  log_event({{"event", "gen-data"}, {"dialogues", num}, {"heldout", heldout}, {"dir", dir}});
  return 0;
}

// --- train-dialm ---

int cmd_train_dialm(const Common& common, const std::string& data_path,
                    const std::string& out_path) {
  config::AppConfig cfg = resolve_config(common);
  std::string data = resolved(common, data_path);
  std::string out = resolved(common, out_path);
  require_file(data, "training data");
  auto records = dualtrack::read_jsonl(data);
  log_event({{"event", "config"}, {"config_hash", config::config_hash(cfg)}, {"seed", cfg.seed}});

  dialm::DialmConfig mc = cfg.dialm_model;
  mc.seed = cfg.seed;
  dialm::DialmModel model = dialm::DialmModel::init(mc, cfg.vocab());

  std::vector<std::string> trace_lines;
  int64_t t0 = now_ms();
  dialm::TrainOptions opts;
  opts.steps = cfg.dialm_train.steps;
  opts.batch = cfg.dialm_train.batch;
  opts.lr = cfg.dialm_train.lr;
  opts.lr_min_frac = cfg.dialm_train.lr_min_frac;
  opts.log_every = cfg.dialm_train.log_every;
  opts.seed = cfg.seed;
  opts.on_log = [&](const dialm::LossPoint& pt) {
    trace_lines.push_back(json{{"step", pt.step}, {"loss", pt.loss}, {"lr", pt.lr}}.dump());
    log_event({{"event", "train-dialm"},
               {"step", pt.step},
               {"loss", pt.loss},
               {"lr", pt.lr},
               {"wall_ms", now_ms() - t0}});
  };
  dialm::train_dialm(model, records, opts);

  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path().string());
  dialm::save_dialm(model, out);
  pipeline::emit_manifest(trace_lines, out + ".trace.jsonl");
  write_checkpoint_sidecar(out, cfg);
  log_event({{"event", "saved"}, {"path", out}, {"hash", nn::file_hash_hex(out)}});
  return 0;
}

// --- train-cfm ---

int cmd_train_cfm(const Common& common, const std::string& data_path,
                  const std::string& out_path) {
  config::AppConfig cfg = resolve_config(common);
  std::string data = resolved(common, data_path);
  std::string out = resolved(common, out_path);
  require_file(data, "training data");
  std::string cb_path = resolved(common, cfg.codebook_path);
  require_file(cb_path, "codebook");
  auto records = dualtrack::read_jsonl(data);
  synthgen::Codebook codebook = synthgen::load_codebook(cb_path);
  log_event({{"event", "config"}, {"config_hash", config::config_hash(cfg)}, {"seed", cfg.seed}});

  auto items = eval::cfm_items_from_records(records, cfg.vocab(), codebook,
                                            cfg.cfm_model.frame_ratio, cfg.grammar.feature_sigma,
                                            cfg.seed);
  cfm::CfmConfig mc = cfg.cfm_model;
  mc.seed = cfg.seed;
  cfm::CfmModel model = cfm::CfmModel::init(mc);

  std::vector<std::string> trace_lines;
  int64_t t0 = now_ms();
  cfm::CfmTrainOptions opts;
  opts.steps = cfg.cfm_train.steps;
  opts.batch = cfg.cfm_train.batch;
  opts.lr = cfg.cfm_train.lr;
  opts.lr_min_frac = cfg.cfm_train.lr_min_frac;
  opts.log_every = cfg.cfm_train.log_every;
  opts.seed = cfg.seed;
  opts.on_log = [&](const cfm::CfmLossPoint& pt) {
    trace_lines.push_back(json{{"step", pt.step}, {"loss", pt.loss}, {"lr", pt.lr}}.dump());
    log_event({{"event", "train-cfm"},
               {"step", pt.step},
               {"loss", pt.loss},
               {"lr", pt.lr},
               {"wall_ms", now_ms() - t0}});
  };
  cfm::train_cfm(model, items, opts);

  cfm::save_cfm(model, out);
  pipeline::emit_manifest(trace_lines, out + ".trace.jsonl");
  write_checkpoint_sidecar(out, cfg);
  log_event({{"event", "saved"}, {"path", out}, {"hash", nn::file_hash_hex(out)}});
  return 0;
}

// --- synth ---

void write_features_csv(const nn::Tensor& feats, const std::string& path) {
  std::ostringstream ss;
  for (int64_t r = 0; r < feats.rows(); ++r) {
    for (int64_t c = 0; c < feats.cols(); ++c) {
      if (c) ss << ',';
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", feats.at(r, c));
      ss << buf;
    }
    ss << '\n';
  }
  write_text_atomic(path, ss.str());
}

int cmd_synth(const Common& common, const std::string& script_path, const std::string& dialm_path,
              const std::string& cfm_path, const std::string& out_dir, bool csv) {
  config::AppConfig cfg = resolve_config(common);
  std::string scripts = resolved(common, script_path);
  std::string dialm_ckpt = resolved(common, dialm_path);
  std::string cfm_ckpt = resolved(common, cfm_path);
  std::string dir = resolved(common, out_dir);
  require_file(scripts, "script file");
  require_file(dialm_ckpt, "dialm checkpoint");
  require_file(cfm_ckpt, "cfm checkpoint");
  fs::create_directories(dir);

  dialm::DialmConfig dmc = cfg.dialm_model;
  dmc.seed = cfg.seed;
  dialm::DialmModel lm = dialm::load_dialm(dmc, cfg.vocab(), dialm_ckpt);
  cfm::CfmConfig cmc = cfg.cfm_model;
  cmc.seed = cfg.seed;
  cfm::CfmModel acoustic = cfm::load_cfm(cmc, cfm_ckpt);
  cfm::ChunkPlan plan = cfg.chunk;
  plan.validate(acoustic);
  const dualtrack::VocabSpec vocab = cfg.vocab();
  log_event({{"event", "config"}, {"config_hash", config::config_hash(cfg)}, {"seed", cfg.seed}});

  auto records = dualtrack::read_jsonl(scripts);
  std::vector<dualtrack::DialogueRecord> decoded_records;
  int64_t t0 = now_ms();
  for (size_t di = 0; di < records.size(); ++di) {
    nn::RngState rng = nn::RngState(cfg.seed).split(0x5a17 + di);
    auto [track1, track2] =
        dialm::decode_dialogue(lm, records[di].script, cfg.dialm_model.max_steps - 2, rng);
    auto runs1 = dualtrack::strip_silence(track1, vocab);
    auto runs2 = dualtrack::strip_silence(track2, vocab);
    if (runs1.empty() && runs2.empty()) throw ValidationFailure("empty dialogue");

    int64_t n = static_cast<int64_t>(track1.tokens.size());
    int64_t r = cfg.cfm_model.frame_ratio;
    auto render_channel = [&](const std::vector<dualtrack::TokenRun>& runs,
                              const std::vector<double>& prompt, uint64_t stream) {
      nn::Tensor feats({n * r, cfg.cfm_model.feat_dim});
      for (size_t ri = 0; ri < runs.size(); ++ri) {
        uint64_t noise_seed = nn::RngState(cfg.seed).split(stream + ri).seed;
        nn::Tensor part = cfm::chunk_decode(acoustic, runs[ri].tokens, prompt, plan, noise_seed);
        int64_t f0 = runs[ri].start * r;
        for (int64_t i = 0; i < part.rows(); ++i)
          for (int64_t c = 0; c < part.cols(); ++c) feats.at(f0 + i, c) = part.at(i, c);
      }
      return feats;
    };
    nn::Tensor f1 = render_channel(runs1, records[di].script.prompt1, (di << 8) | 1);
    nn::Tensor f2 = render_channel(runs2, records[di].script.prompt2, (di << 8) | 2);

    std::string base = dir + "/dlg" + std::to_string(di);
    nn::save_tensors({{"features", f1}}, base + ".ch1.dlsp");
    nn::save_tensors({{"features", f2}}, base + ".ch2.dlsp");
    if (csv) {
      write_features_csv(f1, base + ".ch1.csv");
      write_features_csv(f2, base + ".ch2.csv");
    }
    dualtrack::DialogueRecord out_rec;
    out_rec.script = records[di].script;
    out_rec.track1 = track1.tokens;
    out_rec.track2 = track2.tokens;
    decoded_records.push_back(std::move(out_rec));

    json meta = {{"frames", n * r},
                 {"dim", cfg.cfm_model.feat_dim},
                 {"frame_ratio", r},
                 {"chunk_plan",
                  {{"block", plan.block},
                   {"past", plan.past},
                   {"future", plan.future},
                   {"n_ode", plan.n_ode},
                   {"method", plan.method}}},
                 {"seed", cfg.seed},
                 {"config_hash", config::config_hash(cfg)},
                 {"dialm_checkpoint", nn::file_hash_hex(dialm_ckpt)},
                 {"cfm_checkpoint", nn::file_hash_hex(cfm_ckpt)}};
    write_text_atomic(base + ".meta.json", meta.dump(2) + "\n");
    log_event({{"event", "synth"}, {"dialogue", di}, {"frames", n * r}, {"wall_ms", now_ms() - t0}});
  }
  dualtrack::write_jsonl(decoded_records, dir + "/decoded.jsonl");
  json side = {{"seed", cfg.seed},
               {"config_hash", config::config_hash(cfg)},
               {"dialm_checkpoint", nn::file_hash_hex(dialm_ckpt)},
               {"cfm_checkpoint", nn::file_hash_hex(cfm_ckpt)}};
  write_text_atomic(dir + "/decoded.jsonl.meta.json", side.dump(2) + "\n");
  return 0;
}

// --- pipeline ---

int cmd_pipeline(const Common& common, const std::string& in_path, const std::string& out_path,
                 const std::string& reports_path, const std::string& audio_dir) {
  config::AppConfig cfg = resolve_config(common);
  std::string in = resolved(common, in_path);
  require_file(in, "input manifest");
  pipeline::InputManifest manifest = pipeline::read_input_manifest(in);
  pipeline::PipelineOptions opts;
  opts.thresholds = cfg.thresholds;
  opts.gap_tolerance = cfg.pipeline_gap_tolerance;
  opts.audio_dir = audio_dir.empty() ? fs::path(in).parent_path().string()
                                     : resolved(common, audio_dir);
  pipeline::PipelineResult result = pipeline::run_pipeline(manifest, opts);
  for (const std::string& w : result.warnings) log_event({{"event", "warning"}, {"message", w}});
  pipeline::emit_manifest(result.manifest_lines, resolved(common, out_path));
  if (!reports_path.empty())
    pipeline::emit_manifest(result.report_lines, resolved(common, reports_path));
  log_event({{"event", "pipeline"},
             {"utterances", result.manifest_lines.size()},
             {"reports", result.report_lines.size()}});
  return 0;
}

// --- mask-dump ---

int cmd_mask_dump(int64_t n, int64_t b, int64_t tb, int64_t tf, bool as_json) {
  blockmask::MaskSpec spec{b, tb, tf};
  blockmask::BlockMask mask = blockmask::build_mask(n, spec);
  if (as_json) {
    json rows = json::array();
    for (int64_t i = 0; i < n; ++i) {
      json row = json::array();
      for (int64_t j = 0; j < n; ++j) row.push_back(static_cast<int>(mask.matrix.at(i, j)));
      rows.push_back(row);
    }
    std::cout << json{{"n", n}, {"b", b}, {"tb", tb}, {"tf", tf}, {"rows", rows}}.dump() << "\n";
  } else {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) std::cout << (mask.matrix.at(i, j) ? '1' : '0');
      std::cout << "\n";
    }
  }
  return 0;
}

// --- eval ---

int cmd_eval(const Common& common, const std::string& suite, const std::string& dialm_path,
             const std::string& data_path, const std::string& out_path) {
  config::AppConfig cfg = resolve_config(common);
  if (suite == "masks") {
    // Randomized oracle sweep over mask construction and composition.
    nn::RngState rng(cfg.seed);
    int64_t cases = 200;
    for (int64_t i = 0; i < cases; ++i) {
      int64_t n = rng.next_range(1, 48);
      int64_t b = rng.next_range(1, 8);
      blockmask::MaskSpec spec{b, rng.next_range(0, 3), rng.next_range(0, 3)};
      blockmask::BlockMask mask = blockmask::build_mask(n, spec);
      for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < n; ++c)
          if (mask.matrix.at(r, c) != (spec.allows(r, c) ? 1 : 0))
            throw std::runtime_error("mask oracle mismatch");
    }
    std::cout << json{{"suite", "masks"}, {"cases", cases}, {"ok", true}}.dump() << "\n";
    return 0;
  }
  if (suite != "decode") throw ValidationFailure("unknown eval suite: " + suite);

  std::string ckpt = resolved(common, dialm_path);
  std::string data = resolved(common, data_path);
  require_file(ckpt, "dialm checkpoint");
  require_file(data, "eval data");
  dialm::DialmConfig dmc = cfg.dialm_model;
  dmc.seed = cfg.seed;
  dialm::DialmModel model = dialm::load_dialm(dmc, cfg.vocab(), ckpt);
  auto records = dualtrack::read_jsonl(data);
  eval::DecodeAgreement agg =
      eval::decode_agreement(model, records, cfg.dialm_model.max_steps - 2, cfg.seed);
  json result = {{"suite", "decode"},
                 {"dialogues", agg.dialogues},
                 {"single_steps_total", agg.single_steps_total},
                 {"single_steps_matched", agg.single_steps_matched},
                 {"single_rate", agg.single_rate()},
                 {"overlap_windows_total", agg.overlap_windows_total},
                 {"overlap_windows_covered", agg.overlap_windows_covered},
                 {"overlap_coverage", agg.overlap_coverage()}};
  std::cout << result.dump() << "\n";
  if (!out_path.empty()) write_text_atomic(resolved(common, out_path), result.dump() + "\n");
  return 0;
}

// --- grad-check ---

int cmd_grad_check() {
  auto lm = eval::micro_dialm_grad_check();
  auto ac = eval::micro_cfm_grad_check();
  json out = {{"dialm_max_rel_err", lm.max_rel_err},
              {"dialm_worst_param", lm.worst_param},
              {"cfm_max_rel_err", ac.max_rel_err},
              {"cfm_worst_param", ac.worst_param},
              {"tolerance", 1e-4}};
  std::cout << out.dump() << "\n";
  if (lm.max_rel_err >= 1e-4 || ac.max_rel_err >= 1e-4) {
    std::cerr << "grad-check: tolerance exceeded\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialoflow: dual-track dialogue synthesis toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "JSON config file");
  app.add_option("--set", common.overrides, "Override a config key: path.to.key=value");
  app.add_option("--workdir", common.workdir, "Base directory for relative paths");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic dialogues or pipeline fixtures");
  std::string gen_out = "data";
  int64_t gen_num = 500, gen_heldout = 0;
  bool gen_fixture = false, gen_codebook = false;
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--num", gen_num, "Number of training dialogues");
  gen->add_option("--heldout", gen_heldout, "Number of held-out dialogues");
  gen->add_flag("--pipeline-fixture", gen_fixture, "Emit a pipeline fixture instead");
  gen->add_flag("--write-codebook", gen_codebook, "Write the frozen codebook file");

  // train-dialm
  auto* td = app.add_subcommand("train-dialm", "Train the dual-track dialogue LM");
  std::string td_data, td_out = "dialm.dlsp";
  td->add_option("--data", td_data, "Dialogue JSONL")->required();
  td->add_option("--out", td_out, "Checkpoint path");

  // train-cfm
  auto* tc = app.add_subcommand("train-cfm", "Train the flow-matching acoustic model");
  std::string tc_data, tc_out = "cfm.dlsp";
  tc->add_option("--data", tc_data, "Dialogue JSONL")->required();
  tc->add_option("--out", tc_out, "Checkpoint path");

  // synth
  auto* sy = app.add_subcommand("synth", "Full stack: scripts -> tracks -> features");
  std::string sy_script, sy_dialm, sy_cfm, sy_out = "synth_out";
  bool sy_csv = false;
  sy->add_option("--script", sy_script, "Script JSONL")->required();
  sy->add_option("--dialm", sy_dialm, "DiaLM checkpoint")->required();
  sy->add_option("--cfm", sy_cfm, "CFM checkpoint")->required();
  sy->add_option("--out", sy_out, "Output directory");
  sy->add_flag("--csv", sy_csv, "Also write features as CSV for plotting");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run the data pipeline: manifest in -> manifest out");
  std::string pl_in, pl_out = "out_manifest.jsonl", pl_reports, pl_audio;
  pl->add_option("--in", pl_in, "Input manifest JSONL")->required();
  pl->add_option("--out", pl_out, "Output manifest JSONL");
  pl->add_option("--reports", pl_reports, "Filter report JSONL");
  pl->add_option("--audio-dir", pl_audio, "Directory for referenced audio files");

  // mask-dump
  auto* md = app.add_subcommand("mask-dump", "Print a block attention mask");
  int64_t md_n = 8, md_b = 2, md_tb = 0, md_tf = 0;
  bool md_json = false;
  md->add_option("--n", md_n, "Sequence length");
  md->add_option("--b", md_b, "Block size");
  md->add_option("--tb", md_tb, "Backward extent (blocks)");
  md->add_option("--tf", md_tf, "Forward extent (blocks)");
  md->add_flag("--json", md_json, "Emit JSON instead of a text grid");

  // eval
  auto* ev = app.add_subcommand("eval", "Invariant suites and decode agreement metrics");
  std::string ev_suite = "decode", ev_dialm, ev_data, ev_out;
  ev->add_option("--suite", ev_suite, "Suite: decode | masks");
  ev->add_option("--dialm", ev_dialm, "DiaLM checkpoint (decode suite)");
  ev->add_option("--data", ev_data, "Held-out dialogue JSONL (decode suite)");
  ev->add_option("--out", ev_out, "Write metrics JSON here as well");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of micro models");
  (void)gc;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, gen_out, gen_num, gen_heldout, gen_fixture, gen_codebook);
    if (td->parsed()) return cmd_train_dialm(common, td_data, td_out);
    if (tc->parsed()) return cmd_train_cfm(common, tc_data, tc_out);
    if (sy->parsed()) return cmd_synth(common, sy_script, sy_dialm, sy_cfm, sy_out, sy_csv);
    if (pl->parsed()) return cmd_pipeline(common, pl_in, pl_out, pl_reports, pl_audio);
    if (md->parsed()) return cmd_mask_dump(md_n, md_b, md_tb, md_tf, md_json);
    if (ev->parsed()) return cmd_eval(common, ev_suite, ev_dialm, ev_data, ev_out);
    if (gc->parsed()) return cmd_grad_check();
  } catch (const ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
