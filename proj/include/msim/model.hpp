#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "msim/codec.hpp"
#include "msim/dataset.hpp"
#include "msim/diffusion.hpp"
#include "msim/fusion.hpp"
#include "msim/interaction.hpp"
#include "msim/moe.hpp"

namespace msim {

// Structural settings shared by every module; one source of truth for the
// latent width d and the frame geometry.
struct ModelConfig {
  int H = 16, W = 16;
  int context = 4;  // observed frames per episode in the data layout
  int horizon = 8;  // predicted future frames
  int history = 4;  // trailing context frames the model conditions on
  int d = 32;
  int expert_width = 32;
  int codec_h0 = 128, codec_h1 = 64;
  int step_embed = 32, frame_embed = 64, ctx_embed = 64;
  double dropout = 0.1;
  // When true the context encoder also sees fused action features for the
  // conditioning frames, not just their pixels.
  bool context_actions = true;
  std::string fusion = "softmax";
  std::string interaction = "hyperplane";

  int hw() const { return H * W; }
  int T() const { return context + horizon; }
  int ctx_rows() const {
    return history * (hw() + (context_actions ? d : 0));
  }
  CodecDims codec_dims() const { return {hw(), d, codec_h0, codec_h1}; }
  DenoiserDims denoiser_dims() const {
    return {hw(), horizon, d, ctx_rows(), step_embed, frame_embed, ctx_embed};
  }
  void validate() const;
};

// Initializes codec, experts, fusion and denoiser parameters; every
// module's parameter names are disjoint by prefix.
ParamMap init_model_params(const ModelConfig& cfg, uint64_t seed);

// One column per (episode, timestep) pair: col(e, t) = e*T + t. Frames and
// signals are plain constants extracted from the dataset.
struct Batch {
  int B = 0;
  std::vector<int> ep_ids;           // dataset episode ids, batch order
  std::vector<uint64_t> ep_keys;     // per-episode noise stream keys
  Array frames;                      // [hw x B*T]
  std::array<Array, 4> sig;          // [dim_m x B*T]
};

Batch make_batch(const Dataset& ds, const std::vector<int>& ids,
                 const ModelConfig& cfg);

struct Lambdas {
  double vdm = 10.0, ssl = 1.0, norm = 0.1, frame = 1.0;
};

struct LossParts {
  Array total, vdm, ssl, norm, frame;
  InteractionStats stats;
};

// Builds the full weighted training objective on the bank's tape. Dropout
// and the per-episode diffusion draws are keyed by (seed, step). Aborts
// with the component name if any term is non-finite.
LossParts total_loss_graph(const Bank& bank, const ModelConfig& cfg,
                           const Batch& batch, const NoiseSchedule& sched,
                           const ModalityMask& mask, const Lambdas& lam,
                           bool train, uint64_t seed, int64_t step);

// Sampling-time conditioning: reads only context frames and the episode's
// action signals, never future frames. sig_future overrides the batch's
// future-step signals when supplied (the policy feeds predicted actions
// through here); entries for absent modalities are ignored.
struct Conditioning {
  Array y_prime;  // [d x B*F]
  Array ctx_in;   // [ctx_rows x B]
  InteractionStats stats;
};

Conditioning build_conditioning(const Bank& bank, const ModelConfig& cfg,
                                const Batch& batch, const ModalityMask& mask,
                                const std::array<Array, 4>* sig_future = nullptr);

// Full pipeline prediction for a batch of episodes: conditioning plus the
// reverse-process sampler, clamped frames [hw x B*F].
Array predict_frames(const ParamMap& params, const ModelConfig& cfg,
                     const Batch& batch, const NoiseSchedule& sched,
                     const ModalityMask& mask, uint64_t sample_seed);

}  // namespace msim
