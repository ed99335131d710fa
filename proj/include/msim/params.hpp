#pragma once

#include <map>
#include <string>

#include "msim/array.hpp"
#include "msim/rng.hpp"

namespace msim {

// Named parameter set. std::map keeps iteration sorted by name, so every
// walk over the parameters (updates, checkpointing, hashing) is order-stable
// regardless of construction order.
using ParamMap = std::map<std::string, Array>;

// Xavier-uniform weight init in +-sqrt(6 / (fan_in + fan_out)). The draw
// stream is keyed by (seed, name), so adding or reordering parameters never
// shifts another parameter's values.
inline Array xavier_init(std::vector<int> shape, uint64_t seed,
                         const std::string& name) {
  Array a = Array::zeros(std::move(shape));
  int fan_out = a.rows();
  int fan_in = a.cols();
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  CounterRng rng(seed);
  rng.key("init").key(name);
  for (double& v : a.data) v = rng.uniform(-limit, limit);
  return a;
}

}  // namespace msim
