#pragma once

#include <cstdint>
#include <vector>

#include "msim/nn.hpp"

namespace msim {

// Linear-beta DDPM noise schedule with 1-based step indices n in [1, N].
struct NoiseSchedule {
  int N = 0;
  std::vector<double> beta_tab, alpha_tab, alpha_bar_tab;

  double beta(int n) const { return beta_tab[static_cast<size_t>(n - 1)]; }
  double alpha(int n) const { return alpha_tab[static_cast<size_t>(n - 1)]; }
  // alpha_bar(0) = 1 is the identity extension used by algebraic checks
  double alpha_bar(int n) const {
    return n == 0 ? 1.0 : alpha_bar_tab[static_cast<size_t>(n - 1)];
  }
};

NoiseSchedule make_schedule(int N = 100, double beta_start = 1e-4,
                            double beta_end = 0.02);

// sqrt(abar_n) x + sqrt(1 - abar_n) eps, elementwise; n must be in [1, N]
Array forward_noise(const Array& x, int n, const Array& eps,
                    const NoiseSchedule& s);

// Reverse-process noise variance at step n: (1 - abar_{n-1}) / (1 - abar_n)
// * beta_n, exactly zero at n = 1.
double sampler_sigma2(const NoiseSchedule& s, int n);

// Conditional denoiser. Context frames (and optional context-step action
// features) are encoded once per episode; each noisy future frame is
// embedded, feature-wise modulated by [step embedding ⊕ context embedding
// ⊕ its own action vector], mixed across the episode's frames by one
// temporal self-attention block, and decoded to a per-frame noise estimate.
struct DenoiserDims {
  int hw = 256;       // flattened frame size
  int horizon = 8;    // future frames per episode
  int d = 32;         // action-conditioning vector width
  int ctx_rows = 0;   // rows of the per-episode context input
  int step_dim = 32;  // sinusoidal step embedding width (even)
  int embed = 64;     // frame embedding width
  int ctx_embed = 64; // context embedding width
};

void init_denoiser_params(ParamMap& p, const DenoiserDims& dims,
                          uint64_t seed);

struct DenoiserOut {
  Array eps_hat;   // [hw x B*F]
  Array pre_attn;  // modulated frame embeddings before temporal attention
};

// x_noisy [hw x B*F], step_emb [step_dim x B*F], ctx_in [ctx_rows x B],
// y_prime [d x B*F]; column layout col(e, f) = e*F + f.
DenoiserOut denoiser_forward(const Bank& b, const DenoiserDims& dims,
                             const Array& x_noisy, const Array& step_emb,
                             const Array& ctx_in, const Array& y_prime);

// Denoising objective: per episode e, noise the true future frames at step
// n_steps[e] with the supplied eps draws and regress the denoiser output
// onto eps; mean squared error over every frame pixel in the batch.
Array vdm_loss(const Bank& b, const DenoiserDims& dims,
               const NoiseSchedule& s, const Array& x_future,
               const Array& eps, const std::vector<int>& n_steps,
               const Array& ctx_in, const Array& y_prime);

// Full reverse-process sampler. Starts from seeded Gaussian noise and
// applies the reverse recurrence for n = N..1 with fresh sigma-noise per
// step (none at n = 1); the result is clamped to [0, 1] only at the end.
// Noise streams are keyed per episode by ep_keys, so a sampled episode does
// not depend on which other episodes share the batch.
Array sample_frames(const Bank& b, const DenoiserDims& dims,
                    const NoiseSchedule& s, const Array& ctx_in,
                    const Array& y_prime, uint64_t seed,
                    const std::vector<uint64_t>& ep_keys);

// Short differentiable sampler used inside the policy loss: K evenly
// spaced schedule points, deterministic updates (no sigma-noise) that jump
// between them via the predicted clean frame, gradients flow through all K
// steps. Output is unclamped.
Array reduced_sample(const Bank& b, const DenoiserDims& dims,
                     const NoiseSchedule& s, int K, const Array& ctx_in,
                     const Array& y_prime, uint64_t seed,
                     const std::vector<uint64_t>& ep_keys);

}  // namespace msim
