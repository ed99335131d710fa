#include "msim/model.hpp"

#include <cmath>
#include <stdexcept>

namespace msim {

namespace {

// [r x B*k] with per-episode groups of k columns -> [k*r x B], stacking
// each episode's k columns into one column
Array stack_group_cols(const Array& x, int B, int k) {
  std::vector<Array> parts;
  parts.reserve(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    std::vector<int> picks(static_cast<size_t>(B));
    for (int e = 0; e < B; ++e) picks[static_cast<size_t>(e)] = e * k + c;
    parts.push_back(select_cols(x, picks));
  }
  return concat_rows(parts);
}

struct CondCore {
  Array y_prime;
  Array ctx_in;
  InteractionStats stats;
};

// Shared tail of the conditioning pipeline: project + gate + fuse the
// expert features, regularize against the last context latent, and build
// the per-episode context input for the denoiser.
CondCore cond_core(const Bank& bank, const ModelConfig& cfg,
                   const Array& ctx_pixels,
                   const std::array<Array, 4>& feat_fut,
                   const std::array<Array, 4>& feat_ctx, const Array& zbar,
                   const Array& z_last, const ModalityMask& mask, int B) {
  int F = cfg.horizon;
  int hist = cfg.history;

  Array zbar_fut = matmul(zbar, replication_matrix(B, F));
  std::array<Array, 4> gated_fut;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    Array proj = project_to_anchor(bank, m, feat_fut[static_cast<size_t>(m)]);
    gated_fut[static_cast<size_t>(m)] = channel_attend(zbar_fut, proj);
  }
  Array fused = fuse(gated_fut, mask, cfg.fusion, &bank);

  CondCore out;
  Array z_ctx = matmul(z_last, replication_matrix(B, F));
  out.y_prime = interaction_apply(fused, z_ctx, cfg.interaction,
                                  kContextNormEps, &out.stats);

  Array pix = stack_group_cols(ctx_pixels, B, hist);
  if (cfg.context_actions) {
    Array zbar_ctx = matmul(zbar, replication_matrix(B, hist));
    std::array<Array, 4> gated_ctx;
    for (int m = 0; m < kNumModalities; ++m) {
      if (!mask[static_cast<size_t>(m)]) continue;
      Array proj = project_to_anchor(bank, m, feat_ctx[static_cast<size_t>(m)]);
      gated_ctx[static_cast<size_t>(m)] = channel_attend(zbar_ctx, proj);
    }
    Array y_ctx = fuse(gated_ctx, mask, cfg.fusion, &bank);
    out.ctx_in = concat_rows({pix, stack_group_cols(y_ctx, B, hist)});
  } else {
    out.ctx_in = pix;
  }
  return out;
}

void check_finite(const Array& component, const char* name) {
  if (!std::isfinite(component.item()))
    throw std::runtime_error(std::string("total_loss: non-finite ") + name);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("model config: invalid " + what);
  };
  if (H < 1 || W < 1) fail("frame size");
  if (context < 1 || horizon < 1) fail("episode layout");
  if (history < 1 || history > context) fail("history");
  if (d < 1 || expert_width < 1) fail("latent widths");
  if (codec_h0 < 1 || codec_h1 < 1) fail("codec widths");
  if (step_embed < 2 || step_embed % 2 != 0) fail("step_embed");
  if (frame_embed < 1 || ctx_embed < 1) fail("denoiser widths");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout");
  if (fusion != "softmax" && fusion != "max" && fusion != "mean" &&
      fusion != "concat")
    fail("fusion variant " + fusion);
  if (interaction != "hyperplane" && interaction != "projection" &&
      interaction != "none")
    fail("interaction mode " + interaction);
}

ParamMap init_model_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParamMap p;
  init_codec_params(p, cfg.codec_dims(), seed);
  init_moe_params(p, cfg.expert_width, seed);
  init_fusion_params(p, cfg.d, cfg.expert_width, cfg.fusion, seed);
  init_denoiser_params(p, cfg.denoiser_dims(), seed);
  return p;
}

Batch make_batch(const Dataset& ds, const std::vector<int>& ids,
                 const ModelConfig& cfg) {
  if (ids.empty()) throw std::invalid_argument("make_batch: empty id list");
  int B = static_cast<int>(ids.size());
  int T = cfg.T();
  int hw = cfg.hw();
  Batch batch;
  batch.B = B;
  batch.frames = Array::zeros({hw, B * T});
  for (int m = 0; m < kNumModalities; ++m)
    batch.sig[static_cast<size_t>(m)] =
        Array::zeros({kModalities[static_cast<size_t>(m)].dim, B * T});
  for (int e = 0; e < B; ++e) {
    int id = ids[static_cast<size_t>(e)];
    if (id < 0 || id >= static_cast<int>(ds.episodes.size()))
      throw std::invalid_argument("make_batch: episode id out of range");
    const Episode& ep = ds.episodes[static_cast<size_t>(id)];
    if (ep.T != T || ep.H * ep.W != hw)
      throw std::invalid_argument(
          "make_batch: dataset episode shape does not match the model config");
    batch.ep_ids.push_back(id);
    batch.ep_keys.push_back(static_cast<uint64_t>(ep.id));
    for (int t = 0; t < T; ++t) {
      const float* fr = ep.frame(t);
      for (int i = 0; i < hw; ++i)
        batch.frames.at(i, e * T + t) = static_cast<double>(fr[i]);
      for (int m = 0; m < kNumModalities; ++m) {
        int dim = kModalities[static_cast<size_t>(m)].dim;
        const float* sg = ep.signal(m, t);
        for (int k = 0; k < dim; ++k)
          batch.sig[static_cast<size_t>(m)].at(k, e * T + t) =
              static_cast<double>(sg[k]);
      }
    }
  }
  return batch;
}

LossParts total_loss_graph(const Bank& bank, const ModelConfig& cfg,
                           const Batch& batch, const NoiseSchedule& sched,
                           const ModalityMask& mask, const Lambdas& lam,
                           bool train, uint64_t seed, int64_t step) {
  cfg.validate();
  if (mask_count(mask) == 0)
    throw std::invalid_argument("total_loss: empty modality mask");
  int B = batch.B;
  int T = cfg.T(), C = cfg.context, F = cfg.horizon, hist = cfg.history;

  Array z_all = codec_encode(bank, batch.frames);
  Array frame_err = sub(codec_decode(bank, z_all), batch.frames);
  Array frame = mean_all(mul(frame_err, frame_err));

  std::vector<int> ctx_cols = group_cols(B, T, C - hist, C);
  std::vector<int> fut_cols = group_cols(B, T, C, T);
  Array zbar = anchor_mean(select_cols(z_all, ctx_cols), B, hist);
  Array z_last = select_cols(z_all, group_cols(B, T, C - 1, C));

  std::array<Array, 4> recon;
  std::array<Array, 4> feat_fut, feat_ctx;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    CounterRng drop_rng(seed);
    drop_rng.key("dropout").key(static_cast<uint64_t>(step)).key(
        static_cast<uint64_t>(m));
    Array zm = moe_encode(bank, m, batch.sig[static_cast<size_t>(m)], train,
                          cfg.dropout, drop_rng);
    recon[static_cast<size_t>(m)] = moe_decode(bank, m, zm);
    feat_fut[static_cast<size_t>(m)] = select_cols(zm, fut_cols);
    if (cfg.context_actions)
      feat_ctx[static_cast<size_t>(m)] = select_cols(zm, ctx_cols);
  }
  Array ssl = ssl_loss(recon, batch.sig, mask, T, B);

  Array ctx_pixels = select_cols(batch.frames, ctx_cols);
  CondCore core = cond_core(bank, cfg, ctx_pixels, feat_fut, feat_ctx, zbar,
                            z_last, mask, B);

  Array norm;
  if (cfg.interaction == "none") {
    norm = Array::scalar(0.0);
  } else {
    Array z_t = select_cols(z_all, fut_cols);
    Array z_prev = select_cols(z_all, group_cols(B, T, C - 1, T - 1));
    norm = interaction_norm_loss(core.y_prime, z_t, z_prev);
  }

  Array x_fut = select_cols(batch.frames, fut_cols);
  std::vector<int> n_steps(static_cast<size_t>(B));
  CounterRng nrng(seed);
  nrng.key("vdm-n").key(static_cast<uint64_t>(step));
  for (int e = 0; e < B; ++e)
    n_steps[static_cast<size_t>(e)] =
        static_cast<int>(nrng.range(1, sched.N));
  Array eps = Array::zeros({cfg.hw(), B * F});
  for (int e = 0; e < B; ++e) {
    CounterRng erng(seed);
    erng.key("vdm-eps").key(static_cast<uint64_t>(step)).key(
        static_cast<uint64_t>(e));
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < cfg.hw(); ++i)
        eps.at(i, e * F + f) = erng.normal();
  }
  Array vdm = vdm_loss(bank, cfg.denoiser_dims(), sched, x_fut, eps, n_steps,
                       core.ctx_in, core.y_prime);

  check_finite(vdm, "vdm");
  check_finite(ssl, "ssl");
  check_finite(norm, "norm");
  check_finite(frame, "frame");

  LossParts out;
  out.vdm = vdm;
  out.ssl = ssl;
  out.norm = norm;
  out.frame = frame;
  out.stats = core.stats;
  out.total = add(add(scale(vdm, lam.vdm), scale(ssl, lam.ssl)),
                  add(scale(norm, lam.norm), scale(frame, lam.frame)));
  return out;
}

Conditioning build_conditioning(const Bank& bank, const ModelConfig& cfg,
                                const Batch& batch, const ModalityMask& mask,
                                const std::array<Array, 4>* sig_future) {
  cfg.validate();
  if (mask_count(mask) == 0)
    throw std::invalid_argument("conditioning: empty modality mask");
  int B = batch.B;
  int T = cfg.T(), C = cfg.context, F = cfg.horizon, hist = cfg.history;

  std::vector<int> ctx_cols = group_cols(B, T, C - hist, C);
  std::vector<int> fut_cols = group_cols(B, T, C, T);
  Array ctx_pixels = select_cols(batch.frames, ctx_cols);
  Array zc = codec_encode(bank, ctx_pixels);
  Array zbar = anchor_mean(zc, B, hist);
  std::vector<int> last_of_group(static_cast<size_t>(B));
  for (int e = 0; e < B; ++e)
    last_of_group[static_cast<size_t>(e)] =
        e * hist + select_context_index(hist);
  Array z_last = select_cols(zc, last_of_group);

  CounterRng unused_rng(0);
  std::array<Array, 4> feat_fut, feat_ctx;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<size_t>(m)]) continue;
    Array a_fut = (sig_future != nullptr)
                      ? (*sig_future)[static_cast<size_t>(m)]
                      : select_cols(batch.sig[static_cast<size_t>(m)], fut_cols);
    if (a_fut.cols() != B * F)
      throw std::invalid_argument("conditioning: future signals for " +
                                  std::string(kModalities[static_cast<size_t>(m)].name) +
                                  " have " + a_fut.shape_str());
    feat_fut[static_cast<size_t>(m)] =
        moe_encode(bank, m, a_fut, false, 0.0, unused_rng);
    if (cfg.context_actions) {
      Array a_ctx = select_cols(batch.sig[static_cast<size_t>(m)], ctx_cols);
      feat_ctx[static_cast<size_t>(m)] =
          moe_encode(bank, m, a_ctx, false, 0.0, unused_rng);
    }
  }

  CondCore core = cond_core(bank, cfg, ctx_pixels, feat_fut, feat_ctx, zbar,
                            z_last, mask, B);
  Conditioning out;
  out.y_prime = std::move(core.y_prime);
  out.ctx_in = std::move(core.ctx_in);
  out.stats = core.stats;
  return out;
}

Array predict_frames(const ParamMap& params, const ModelConfig& cfg,
                     const Batch& batch, const NoiseSchedule& sched,
                     const ModalityMask& mask, uint64_t sample_seed) {
  Bank bank = plain_bank(params);
  Conditioning cond = build_conditioning(bank, cfg, batch, mask);
  return sample_frames(bank, cfg.denoiser_dims(), sched, cond.ctx_in,
                       cond.y_prime, sample_seed, batch.ep_keys);
}

}  // namespace msim
