#pragma once

#include <cstdint>

#include "msim/nn.hpp"

namespace msim {

// Frame encoder/decoder. The encoder flattens an H*W frame and maps it
// through a gelu MLP to a d-dimensional latent; the decoder mirrors it for
// the auxiliary reconstruction loss. All functions are column-batched:
// every column is one frame.
struct CodecDims {
  int hw = 256;  // flattened frame size
  int d = 32;    // latent width
  int h0 = 128, h1 = 64;
};

void init_codec_params(ParamMap& p, const CodecDims& dims, uint64_t seed);

// [hw x cols] -> [d x cols]; throws on a row-count mismatch
Array codec_encode(const Bank& b, const Array& frames);
// [d x cols] -> [hw x cols], unclamped (clamping is an evaluation-time step)
Array codec_decode(const Bank& b, const Array& z);

// mean squared reconstruction error per pixel over the whole batch
Array codec_frame_loss(const Bank& b, const Array& frames);

// Arithmetic mean of each group of `per` consecutive columns; the anchor
// feature is the mean over a window of context-frame latents.
Array anchor_mean(const Array& ctx_latents, int groups, int per);

}  // namespace msim
