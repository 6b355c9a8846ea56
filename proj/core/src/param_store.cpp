#include "dialoflow/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace dialoflow::nn {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = params.emplace(name, std::move(init));
  if (!inserted) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return it->second;
}

int64_t ParamStore::total_scalars() const {
  int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (!store.has(name)) throw std::invalid_argument("adam_step: unknown parameter " + name);
    if (!store.at(name).same_shape(g))
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    if (!g.all_finite()) throw std::runtime_error("adam_step: non-finite gradient for " + name);
  }
  store.step += 1;
  double t = static_cast<double>(store.step);
  double bc1 = 1.0 - std::pow(cfg.beta1, t);
  double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : store.params) {
    auto git = grads.find(name);
    auto& m = store.adam_m.try_emplace(name, Tensor(p.shape())).first->second;
    auto& v = store.adam_v.try_emplace(name, Tensor(p.shape())).first->second;
    if (!m.same_shape(p) || !v.same_shape(p))
      throw std::logic_error("adam_step: moment shape drift for " + name);
    if (git == grads.end()) {
      // Zero gradient: moments still decay.
      for (int64_t i = 0; i < p.numel(); ++i) {
        m.at(i) *= cfg.beta1;
        v.at(i) *= cfg.beta2;
        double mh = m.at(i) / bc1;
        double vh = v.at(i) / bc2;
        p.at(i) -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
      }
      continue;
    }
    const Tensor& g = git->second;
    for (int64_t i = 0; i < p.numel(); ++i) {
      double gi = g.at(i);
      m.at(i) = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * gi;
      v.at(i) = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * gi * gi;
      double mh = m.at(i) / bc1;
      double vh = v.at(i) / bc2;
      p.at(i) -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

Tensor randn(std::vector<int64_t> shape, RngState& rng, double stddev) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.next_gaussian() * stddev;
  return t;
}

}  // namespace dialoflow::nn
