#include "msim/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace msim {

namespace {

void check_step(const NoiseSchedule& s, int n, const char* who) {
  if (n < 1 || n > s.N)
    throw std::invalid_argument(std::string(who) + ": step " +
                                std::to_string(n) + " outside [1, " +
                                std::to_string(s.N) + "]");
}

// per-column scalar row built from per-episode values, [1 x B*F]
Array episode_row(const std::vector<double>& v, int F) {
  int B = static_cast<int>(v.size());
  Array row = Array::zeros({1, B * F});
  for (int e = 0; e < B; ++e)
    for (int f = 0; f < F; ++f) row.at(0, e * F + f) = v[static_cast<size_t>(e)];
  return row;
}

Array gaussian_cols(int rows, int F, uint64_t seed, const char* label,
                    uint64_t step_key, const std::vector<uint64_t>& ep_keys) {
  int B = static_cast<int>(ep_keys.size());
  Array x = Array::zeros({rows, B * F});
  for (int e = 0; e < B; ++e) {
    CounterRng rng(seed);
    rng.key(label).key(ep_keys[static_cast<size_t>(e)]).key(step_key);
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < rows; ++i) x.at(i, e * F + f) = rng.normal();
  }
  return x;
}

}  // namespace

NoiseSchedule make_schedule(int N, double beta_start, double beta_end) {
  if (N < 1) throw std::invalid_argument("make_schedule: N must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument(
        "make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.N = N;
  s.beta_tab.resize(static_cast<size_t>(N));
  s.alpha_tab.resize(static_cast<size_t>(N));
  s.alpha_bar_tab.resize(static_cast<size_t>(N));
  double abar = 1.0;
  for (int n = 1; n <= N; ++n) {
    double beta = (N == 1) ? beta_start
                           : beta_start + (beta_end - beta_start) * (n - 1) /
                                              static_cast<double>(N - 1);
    double alpha = 1.0 - beta;
    abar *= alpha;
    s.beta_tab[static_cast<size_t>(n - 1)] = beta;
    s.alpha_tab[static_cast<size_t>(n - 1)] = alpha;
    s.alpha_bar_tab[static_cast<size_t>(n - 1)] = abar;
  }
  return s;
}

Array forward_noise(const Array& x, int n, const Array& eps,
                    const NoiseSchedule& s) {
  check_step(s, n, "forward_noise");
  if (!x.same_shape(eps))
    throw std::invalid_argument("forward_noise: shape mismatch " +
                                x.shape_str() + " vs " + eps.shape_str());
  double abar = s.alpha_bar(n);
  return add(scale(x, std::sqrt(abar)), scale(eps, std::sqrt(1.0 - abar)));
}

double sampler_sigma2(const NoiseSchedule& s, int n) {
  check_step(s, n, "sampler_sigma2");
  if (n == 1) return 0.0;
  return (1.0 - s.alpha_bar(n - 1)) / (1.0 - s.alpha_bar(n)) * s.beta(n);
}

void init_denoiser_params(ParamMap& p, const DenoiserDims& dims,
                          uint64_t seed) {
  if (dims.ctx_rows < 1)
    throw std::invalid_argument("denoiser: ctx_rows must be set");
  int cond = dims.step_dim + dims.ctx_embed + dims.d;
  auto put = [&](const std::string& name, std::vector<int> shape) {
    p.emplace(name, xavier_init(std::move(shape), seed, name));
  };
  put("denoiser.ctx.w0", {dims.ctx_embed, dims.ctx_rows});
  p.emplace("denoiser.ctx.b0", Array::zeros({dims.ctx_embed}));
  put("denoiser.ctx.w1", {dims.ctx_embed, dims.ctx_embed});
  p.emplace("denoiser.ctx.b1", Array::zeros({dims.ctx_embed}));
  put("denoiser.emb.w", {dims.embed, dims.hw});
  p.emplace("denoiser.emb.b", Array::zeros({dims.embed}));
  put("denoiser.film.ws", {dims.embed, cond});
  p.emplace("denoiser.film.bs", Array::zeros({dims.embed}));
  put("denoiser.film.wt", {dims.embed, cond});
  p.emplace("denoiser.film.bt", Array::zeros({dims.embed}));
  put("denoiser.attn.wq", {dims.embed, dims.embed});
  put("denoiser.attn.wk", {dims.embed, dims.embed});
  put("denoiser.attn.wv", {dims.embed, dims.embed});
  put("denoiser.attn.wp", {dims.embed, dims.embed});
  put("denoiser.out.w", {dims.hw, dims.embed});
  p.emplace("denoiser.out.b", Array::zeros({dims.hw}));
  // Noise pass-through. The dense trunk is a bottleneck (embed < hw), so it
  // cannot reproduce the full-rank noise component of its input; the skip
  // gain, a per-step scalar read off the step embedding, carries it instead.
  p.emplace("denoiser.skip.w", Array::zeros({1, dims.step_dim}));
  p.emplace("denoiser.skip.b", Array::full({1, 1}, 1.0));
}

DenoiserOut denoiser_forward(const Bank& b, const DenoiserDims& dims,
                             const Array& x_noisy, const Array& step_emb,
                             const Array& ctx_in, const Array& y_prime) {
  int F = dims.horizon;
  int B = ctx_in.cols();
  if (x_noisy.rows() != dims.hw || x_noisy.cols() != B * F)
    throw std::invalid_argument("denoiser: noisy frames " +
                                x_noisy.shape_str() + " do not match " +
                                std::to_string(B) + " episodes of horizon " +
                                std::to_string(F));
  if (y_prime.rows() != dims.d || y_prime.cols() != B * F)
    throw std::invalid_argument(
        "denoiser: conditioning misaligned with frames, " +
        y_prime.shape_str());
  if (ctx_in.rows() != dims.ctx_rows)
    throw std::invalid_argument("denoiser: context input " +
                                ctx_in.shape_str() + " expected " +
                                std::to_string(dims.ctx_rows) + " rows");

  Array c0 = gelu(add(matmul(b("denoiser.ctx.w0"), ctx_in), b("denoiser.ctx.b0")));
  Array ctx = add(matmul(b("denoiser.ctx.w1"), c0), b("denoiser.ctx.b1"));
  Array ctx_rep = matmul(ctx, replication_matrix(B, F));

  Array embedded =
      gelu(add(matmul(b("denoiser.emb.w"), x_noisy), b("denoiser.emb.b")));
  Array cond = concat_rows({step_emb, ctx_rep, y_prime});
  Array mod_scale = add(matmul(b("denoiser.film.ws"), cond), b("denoiser.film.bs"));
  Array mod_shift = add(matmul(b("denoiser.film.wt"), cond), b("denoiser.film.bt"));
  Array pre_attn = add(mul(embedded, shift(mod_scale, 1.0)), mod_shift);

  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dims.embed));
  std::vector<Array> mixed;
  mixed.reserve(static_cast<size_t>(B));
  for (int e = 0; e < B; ++e) {
    Array me = slice_cols(pre_attn, e * F, (e + 1) * F);
    Array q = matmul(b("denoiser.attn.wq"), me);
    Array k = matmul(b("denoiser.attn.wk"), me);
    Array v = matmul(b("denoiser.attn.wv"), me);
    Array weights = softmax_axis(scale(matmul(transpose(q), k), inv_sqrt), 1);
    Array attended = matmul(v, transpose(weights));
    mixed.push_back(add(me, matmul(b("denoiser.attn.wp"), attended)));
  }
  Array post = (B == 1) ? mixed[0] : concat_cols(mixed);
  Array dense = add(matmul(b("denoiser.out.w"), post), b("denoiser.out.b"));
  Array gain = add(matmul(b("denoiser.skip.w"), step_emb), b("denoiser.skip.b"));
  Array eps_hat = add(dense, mul(x_noisy, gain));
  return {std::move(eps_hat), std::move(pre_attn)};
}

Array vdm_loss(const Bank& b, const DenoiserDims& dims,
               const NoiseSchedule& s, const Array& x_future,
               const Array& eps, const std::vector<int>& n_steps,
               const Array& ctx_in, const Array& y_prime) {
  int F = dims.horizon;
  int B = static_cast<int>(n_steps.size());
  if (x_future.cols() != B * F || !x_future.same_shape(eps))
    throw std::invalid_argument("vdm_loss: frame/noise shape mismatch");
  std::vector<double> root_abar(static_cast<size_t>(B));
  std::vector<double> root_rest(static_cast<size_t>(B));
  std::vector<int> emb_steps(static_cast<size_t>(B));
  for (int e = 0; e < B; ++e) {
    int n = n_steps[static_cast<size_t>(e)];
    check_step(s, n, "vdm_loss");
    root_abar[static_cast<size_t>(e)] = std::sqrt(s.alpha_bar(n));
    root_rest[static_cast<size_t>(e)] = std::sqrt(1.0 - s.alpha_bar(n));
    emb_steps[static_cast<size_t>(e)] = n;
  }
  Array x_noisy = add(mul(x_future, episode_row(root_abar, F)),
                      mul(eps, episode_row(root_rest, F)));
  Array step_emb = matmul(step_embedding(emb_steps, dims.step_dim),
                          replication_matrix(B, F));
  Array eps_hat =
      denoiser_forward(b, dims, x_noisy, step_emb, ctx_in, y_prime).eps_hat;
  Array err = sub(eps, eps_hat);
  return mean_all(mul(err, err));
}

Array sample_frames(const Bank& b, const DenoiserDims& dims,
                    const NoiseSchedule& s, const Array& ctx_in,
                    const Array& y_prime, uint64_t seed,
                    const std::vector<uint64_t>& ep_keys) {
  int F = dims.horizon;
  int B = ctx_in.cols();
  if (static_cast<int>(ep_keys.size()) != B)
    throw std::invalid_argument("sample_frames: need one key per episode");
  Array x = gaussian_cols(dims.hw, F, seed, "sample-init", 0, ep_keys);
  for (int n = s.N; n >= 1; --n) {
    std::vector<int> steps(static_cast<size_t>(B), n);
    Array step_emb =
        matmul(step_embedding(steps, dims.step_dim), replication_matrix(B, F));
    Array eps_hat =
        denoiser_forward(b, dims, x, step_emb, ctx_in, y_prime).eps_hat;
    double coef = (1.0 - s.alpha(n)) / std::sqrt(1.0 - s.alpha_bar(n));
    x = scale(sub(x, scale(eps_hat, coef)), 1.0 / std::sqrt(s.alpha(n)));
    if (n > 1) {
      double sigma = std::sqrt(sampler_sigma2(s, n));
      Array z = gaussian_cols(dims.hw, F, seed, "sample-noise",
                              static_cast<uint64_t>(n), ep_keys);
      x = add(x, scale(z, sigma));
    }
  }
  Array out = detach(x);
  for (double& v : out.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return out;
}

Array reduced_sample(const Bank& b, const DenoiserDims& dims,
                     const NoiseSchedule& s, int K, const Array& ctx_in,
                     const Array& y_prime, uint64_t seed,
                     const std::vector<uint64_t>& ep_keys) {
  if (K < 1 || K > s.N)
    throw std::invalid_argument("reduced_sample: K must be in [1, N]");
  int F = dims.horizon;
  std::vector<int> plan(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k)
    plan[static_cast<size_t>(k - 1)] =
        std::max(k, static_cast<int>(std::lround(
                        static_cast<double>(s.N) * k / K)));
  Array x = gaussian_cols(dims.hw, F, seed, "reduced-init", 0, ep_keys);
  int B = ctx_in.cols();
  for (int k = K; k >= 1; --k) {
    int n = plan[static_cast<size_t>(k - 1)];
    double abar = s.alpha_bar(n);
    double abar_prev = (k > 1) ? s.alpha_bar(plan[static_cast<size_t>(k - 2)])
                               : 1.0;
    std::vector<int> steps(static_cast<size_t>(B), n);
    Array step_emb =
        matmul(step_embedding(steps, dims.step_dim), replication_matrix(B, F));
    Array eps_hat =
        denoiser_forward(b, dims, x, step_emb, ctx_in, y_prime).eps_hat;
    Array x0 = scale(sub(x, scale(eps_hat, std::sqrt(1.0 - abar))),
                     1.0 / std::sqrt(abar));
    x = add(scale(x0, std::sqrt(abar_prev)),
            scale(eps_hat, std::sqrt(1.0 - abar_prev)));
  }
  return x;
}

}  // namespace msim
