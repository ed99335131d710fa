#pragma once

#include <map>
#include <string>

#include "msim/params.hpp"

namespace msim {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// First and second moment accumulators, one pair per parameter, plus the
// shared step counter used for bias correction.
struct AdamState {
  int64_t t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One Adam update over every parameter. Parameters missing from `grads`
// are treated as zero-gradient; a non-finite gradient entry is an error
// that names the offending parameter.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               const AdamConfig& cfg);

// Blends `params` into `ema` when step is a multiple of `every`
// (ema <- decay * ema + (1 - decay) * params); other steps are a no-op.
void ema_update(ParamMap& ema, const ParamMap& params, double decay,
                int64_t every, int64_t step);

}  // namespace msim
