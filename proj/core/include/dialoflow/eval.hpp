#pragma once

#include <cstdint>
#include <vector>

#include "dialoflow/cfm.hpp"
#include "dialoflow/dialm.hpp"
#include "dialoflow/dualtrack.hpp"
#include "dialoflow/synthgen.hpp"

namespace dialoflow::eval {

// Step windows where both gold tracks are simultaneously non-<SIL>.
std::vector<synthgen::StepInterval> gold_overlap_windows(const dualtrack::DialogueRecord& rec,
                                                         const dualtrack::VocabSpec& vocab);

struct DecodeAgreement {
  // Steps outside gold overlap windows where gold has exactly one active
  // channel and the decoded step reproduces that single-channel activity.
  int64_t single_steps_total = 0;
  int64_t single_steps_matched = 0;
  // Gold overlap windows containing at least one decoded step with both
  // channels active.
  int64_t overlap_windows_total = 0;
  int64_t overlap_windows_covered = 0;
  int64_t dialogues = 0;

  double single_rate() const {
    return single_steps_total ? static_cast<double>(single_steps_matched) /
                                    static_cast<double>(single_steps_total)
                              : 1.0;
  }
  double overlap_coverage() const {
    return overlap_windows_total ? static_cast<double>(overlap_windows_covered) /
                                       static_cast<double>(overlap_windows_total)
                                 : 1.0;
  }
};

// Decodes every record's script (gold tracks are the reference only) and
// accumulates activity agreement. Deterministic given seed.
DecodeAgreement decode_agreement(const dialm::DialmModel& model,
                                 const std::vector<dualtrack::DialogueRecord>& records,
                                 int64_t max_steps, uint64_t seed);

// Builds per-run CFM training items from dialogue records: each maximal
// non-<SIL> run of each channel becomes one item, with features synthesized
// from the frozen codebook. Deterministic given seed.
std::vector<cfm::CfmItem> cfm_items_from_records(
    const std::vector<dualtrack::DialogueRecord>& records, const dualtrack::VocabSpec& vocab,
    const synthgen::Codebook& codebook, int64_t frame_ratio, double sigma, uint64_t seed);

// Finite-difference gradient checks on micro model configurations (2 layers,
// hidden 16). Return the max relative error across sampled coordinates.
nn::GradCheckReport micro_dialm_grad_check(int max_coords_per_param = 6);
nn::GradCheckReport micro_cfm_grad_check(int max_coords_per_param = 6);

}  // namespace dialoflow::eval
