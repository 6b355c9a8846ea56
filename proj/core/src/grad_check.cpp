#include "dialoflow/grad_check.hpp"

#include <cmath>
#include <stdexcept>

#include "dialoflow/rng.hpp"

namespace dialoflow::nn {

Val ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Val v = tape_.leaf(store_.at(name), /*requires_grad=*/true);
  bound_.emplace(name, v);
  return v;
}

std::map<std::string, Tensor> ParamBinder::grads() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : bound_) {
    if (tape_.has_grad(v)) {
      out.emplace(name, tape_.grad(v));
    } else {
      out.emplace(name, Tensor(tape_.value(v).shape()));
    }
  }
  return out;
}

std::pair<double, std::map<std::string, Tensor>> loss_and_grads(const ParamStore& store,
                                                                const LossBuilder& loss_builder) {
  Tape tape;
  ParamBinder bind(tape, store);
  Val loss = loss_builder(tape, bind);
  double lv = tape.value(loss).at(0);
  if (!std::isfinite(lv)) throw std::runtime_error("grad_check: non-finite loss");
  tape.backward(loss);
  return {lv, bind.grads()};
}

GradCheckReport grad_check(const ParamStore& store, const LossBuilder& loss_builder,
                           const GradCheckOptions& opts) {
  auto [loss0, analytic] = loss_and_grads(store, loss_builder);
  (void)loss0;

  auto eval = [&](const ParamStore& s) {
    Tape tape;
    ParamBinder bind(tape, s);
    Val loss = loss_builder(tape, bind);
    double lv = tape.value(loss).at(0);
    if (!std::isfinite(lv)) throw std::runtime_error("grad_check: non-finite loss");
    return lv;
  };

  GradCheckReport report;
  RngState rng(opts.seed);
  ParamStore work;
  work.params = store.params;

  for (const auto& [name, grad] : analytic) {
    int64_t n = grad.numel();
    std::vector<int64_t> coords;
    if (n <= opts.max_coords_per_param) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < opts.max_coords_per_param; ++i)
        coords.push_back(rng.next_range(0, n - 1));
    }
    Tensor& p = work.at(name);
    for (int64_t c : coords) {
      double orig = p.at(c);
      p.at(c) = orig + opts.eps;
      double lp = eval(work);
      p.at(c) = orig - opts.eps;
      double lm = eval(work);
      p.at(c) = orig;
      double numeric = (lp - lm) / (2.0 * opts.eps);
      double a = grad.at(c);
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_coord = c;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace dialoflow::nn
