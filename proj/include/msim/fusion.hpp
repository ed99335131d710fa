#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msim/dataset.hpp"
#include "msim/nn.hpp"

namespace msim {

// Projects expert features to the anchor dimension, gates them channel-wise
// against the visual anchor, and fuses the gated features across present
// modalities. Fusion always iterates modalities in canonical id order, so
// the result is bit-identical however the caller assembled its inputs.

// One bias-free d x expert_width projection per modality; the concat
// variant owns one extra d x 4d mixing matrix.
void init_fusion_params(ParamMap& p, int d, int expert_width,
                        const std::string& variant, uint64_t seed);

// [expert_width x cols] -> [d x cols]
Array project_to_anchor(const Bank& b, int modality, const Array& z);

// Channel-wise cross-attention gate. For each column: logits(i, l) =
// zbar_i * z_l, softmax over l within each row i, gate g_l = sum of the i
// rows, output = g ⊙ z. Accepts single vectors ([d] or [d x 1]) and
// column batches ([d x cols]); zbar and z must have identical shape.
Array channel_attend(const Array& zbar, const Array& z);

// Fuses gated features of the present modalities per channel. Variants:
// softmax (per-channel softmax weights over modalities), max, mean, and
// concat (fixed-order stack mixed through fusion.concat.w; absent slots are
// zero-padded). `bank` is only consulted by the concat variant.
Array fuse(const std::array<Array, 4>& gated, const ModalityMask& mask,
           const std::string& variant, const Bank* bank = nullptr);

// Order-free entry point: (modality id, gated feature) pairs in any order,
// folded in canonical id order. Any permutation of the list fuses
// bit-identically. Duplicate ids are rejected.
Array fuse_list(const std::vector<std::pair<int, Array>>& features,
                const std::string& variant, const Bank* bank = nullptr);

// Per-modality softmax fusion weights (absent entries left empty).
std::array<Array, 4> fuse_weights(const std::array<Array, 4>& gated,
                                  const ModalityMask& mask);

}  // namespace msim
