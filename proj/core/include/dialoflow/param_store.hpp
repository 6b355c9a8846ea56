#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dialoflow/rng.hpp"
#include "dialoflow/tensor.hpp"

namespace dialoflow::nn {

// Named model parameters plus Adam moment state. Iteration order is the
// name order (std::map), which keeps every traversal deterministic.
struct ParamStore {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  int64_t step = 0;

  Tensor& add(const std::string& name, Tensor init);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) > 0; }
  size_t size() const { return params.size(); }

  int64_t total_scalars() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over all parameters. Missing gradients are
// treated as zero for that tensor; shape mismatches and non-finite gradients
// are errors.
void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               const AdamConfig& cfg);

// Gaussian init helpers.
Tensor randn(std::vector<int64_t> shape, RngState& rng, double stddev = 1.0);

}  // namespace dialoflow::nn
