#pragma once

#include <array>
#include <cstdint>

#include "msim/dataset.hpp"
#include "msim/nn.hpp"

namespace msim {

// Per-modality expert encoder/decoder heads. Each modality owns a 4-layer
// gelu MLP in both directions; encoders layer-normalize the first two
// layers and apply inverted dropout after every hidden activation during
// training. No parameters are shared across modalities.
void init_moe_params(ParamMap& p, int expert_width, uint64_t seed);

// [dim_m x cols] -> [expert_width x cols]. `drop_rng` seeds the dropout
// masks and is only consumed when train is true.
Array moe_encode(const Bank& b, int modality, const Array& a, bool train,
                 double dropout, CounterRng drop_rng);

// [expert_width x cols] -> [dim_m x cols]
Array moe_decode(const Bank& b, int modality, const Array& z);

// Sum of squared reconstruction errors over present modalities and all
// columns, divided by (present modalities * timesteps * batch). Absent
// entries of recon/target are ignored.
Array ssl_loss(const std::array<Array, 4>& recon,
               const std::array<Array, 4>& target, const ModalityMask& mask,
               int timesteps, int batch);

}  // namespace msim
