#pragma once

#include <functional>
#include <vector>

#include "msim/ops.hpp"
#include "msim/params.hpp"
#include "msim/rng.hpp"

namespace msim {

// Compares reverse-mode gradients against central finite differences.
// `f` must map the inputs to a scalar and work both tracked and untracked
// (every op in this library does). Returns the worst relative error
// max |analytic - numeric| / max(1, |analytic|) over all coordinates of
// all inputs.
inline double grad_check(
    const std::function<Array(const std::vector<Array>&)>& f,
    const std::vector<Array>& inputs, double eps = 1e-5) {
  Tape tape;
  std::vector<Array> tracked;
  tracked.reserve(inputs.size());
  for (const Array& x : inputs) tracked.push_back(tape.leaf(x));
  Array loss = f(tracked);
  tape.backward(loss);

  double worst = 0.0;
  std::vector<Array> probe = inputs;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Array analytic = tape.grad(tracked[k]);
    for (size_t i = 0; i < probe[k].size(); ++i) {
      double saved = probe[k].data[i];
      probe[k].data[i] = saved + eps;
      double up = f(probe).item();
      probe[k].data[i] = saved - eps;
      double down = f(probe).item();
      probe[k].data[i] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double denom = std::max(1.0, std::abs(analytic.data[i]));
      worst = std::max(worst, std::abs(analytic.data[i] - numeric) / denom);
    }
  }
  return worst;
}

// Same comparison over a named parameter map, probing `per_param` randomly
// chosen coordinates of every parameter instead of all of them. `f` maps a
// parameter map to a scalar loss value and is re-evaluated with bumped
// copies; `grads` are the reverse-mode gradients at `params`.
inline double grad_check_sampled(
    const std::function<double(const ParamMap&)>& f, const ParamMap& params,
    const std::map<std::string, Array>& grads, int per_param, uint64_t seed,
    double eps = 1e-5) {
  double worst = 0.0;
  ParamMap probe = params;
  for (const auto& [name, grad] : grads) {
    CounterRng rng(seed);
    rng.key("gradcheck").key(name);
    Array& slot = probe.at(name);
    for (int k = 0; k < per_param; ++k) {
      size_t i = static_cast<size_t>(
          rng.range(0, static_cast<int64_t>(grad.size()) - 1));
      double saved = slot.data[i];
      slot.data[i] = saved + eps;
      double up = f(probe);
      slot.data[i] = saved - eps;
      double down = f(probe);
      slot.data[i] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double denom = std::max(1.0, std::abs(grad.data[i]));
      worst = std::max(worst, std::abs(grad.data[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace msim
