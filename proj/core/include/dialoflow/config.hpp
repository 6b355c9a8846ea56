#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dialoflow/cfm.hpp"
#include "dialoflow/dialm.hpp"
#include "dialoflow/pipeline.hpp"
#include "dialoflow/synthgen.hpp"

namespace dialoflow::config {

struct TrainSection {
  int64_t steps = 2000;
  int64_t batch = 8;
  double lr = 3e-3;
  double lr_min_frac = 0.1;
  int64_t log_every = 50;
};

// Whole-app configuration. JSON is the source of truth; CLI flags override
// individual dotted keys. Unknown keys are rejected.
struct AppConfig {
  uint64_t seed = 7;

  // dialm
  dialm::DialmConfig dialm_model;
  TrainSection dialm_train;

  // cfm
  cfm::CfmConfig cfm_model;
  TrainSection cfm_train{1500, 8, 2e-3, 0.1, 50};

  // chunked decoding
  cfm::ChunkPlan chunk;

  // pipeline
  pipeline::FilterThresholds thresholds;
  double pipeline_chunk_seconds = 1200.0;
  double pipeline_gap_tolerance = 0.0;

  // synthetic grammar
  synthgen::GrammarParams grammar;

  // paths
  std::string codebook_path = "data/codebook.dlsp";

  dualtrack::VocabSpec vocab() const { return grammar.vocab(); }
  void validate() const;

  // Training-scale preset mirroring the published model configuration
  // (16-layer/1024/16-head LM, 22-layer/768 DiT, lr 1e-4). Not used by the
  // test suites; documented for completeness.
  static AppConfig paper_preset();
};

// Serialization. `load` rejects unknown keys anywhere in the tree and
// applies dotted-path overrides like "dialm.train.lr=1e-4" afterwards.
std::string dump_config(const AppConfig& cfg);
AppConfig parse_config(const std::string& json_text,
                       const std::vector<std::string>& overrides = {});
AppConfig load_config_file(const std::string& path,
                           const std::vector<std::string>& overrides = {});

// FNV-1a hash of the canonical dump; logged by every command.
std::string config_hash(const AppConfig& cfg);

}  // namespace dialoflow::config
