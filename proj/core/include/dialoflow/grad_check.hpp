#pragma once

#include <functional>
#include <map>
#include <string>

#include "dialoflow/graph.hpp"
#include "dialoflow/param_store.hpp"

namespace dialoflow::nn {

// Binds ParamStore entries into a tape as gradient-tracking leaves, one leaf
// per parameter, created on first use.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Val operator()(const std::string& name);
  const std::map<std::string, Val>& bound() const { return bound_; }
  Tape& tape() { return tape_; }

  // Collects gradients of all bound parameters after backward().
  std::map<std::string, Tensor> grads() const;

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, Val> bound_;
};

// Builds the (scalar) loss on the given tape. Must be deterministic.
using LossBuilder = std::function<Val(Tape&, ParamBinder&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates checked per parameter tensor (random subsample when the
  // tensor is larger).
  int max_coords_per_param = 8;
  uint64_t seed = 1234;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t coords_checked = 0;
};

// Compares the tape gradient with central finite differences on a random
// subsample of coordinates. Relative error uses max(|a|, |b|, 1e-3) as the
// denominator so near-zero gradients are compared absolutely.
GradCheckReport grad_check(const ParamStore& store, const LossBuilder& loss_builder,
                           const GradCheckOptions& opts = {});

// Convenience: run the builder once and return (loss value, gradients).
std::pair<double, std::map<std::string, Tensor>> loss_and_grads(const ParamStore& store,
                                                                const LossBuilder& loss_builder);

}  // namespace dialoflow::nn
