#include "msim/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace msim {

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               const AdamConfig& cfg) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  double inv_bc1 = 1.0 / bc1;
  double inv_bc2 = 1.0 / bc2;
  for (auto& [name, p] : params) {
    std::vector<double>& m = state.m[name];
    std::vector<double>& v = state.v[name];
    if (m.empty()) m.assign(p.size(), 0.0);
    if (v.empty()) v.assign(p.size(), 0.0);
    auto git = grads.find(name);
    const double* g = nullptr;
    if (git != grads.end()) {
      if (git->second.size() != p.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                    name);
      g = git->second.data.data();
    }
    for (size_t i = 0; i < p.size(); ++i) {
      double gi = g ? g[i] : 0.0;
      if (!std::isfinite(gi))
        throw std::runtime_error("adam_step: non-finite gradient in " + name);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      double mhat = m[i] * inv_bc1;
      double vhat = v[i] * inv_bc2;
      p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void ema_update(ParamMap& ema, const ParamMap& params, double decay,
                int64_t every, int64_t step) {
  if (every <= 0) throw std::invalid_argument("ema_update: every must be > 0");
  if (step % every != 0) return;
  for (auto& [name, e] : ema) {
    auto pit = params.find(name);
    if (pit == params.end() || pit->second.size() != e.size())
      throw std::invalid_argument("ema_update: parameter set mismatch at " +
                                  name);
    const std::vector<double>& p = pit->second.data;
    for (size_t i = 0; i < e.size(); ++i)
      e.data[i] = decay * e.data[i] + (1.0 - decay) * p[i];
  }
}

}  // namespace msim
