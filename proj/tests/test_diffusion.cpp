#include <cmath>
#include <vector>

#include "doctest.h"
#include "msim/diffusion.hpp"
#include "msim/rng.hpp"
#include "msim/tape.hpp"

using namespace msim;

namespace {

// Bank whose denoiser always outputs zero, so sampler recurrences can be
// checked against hand-rolled references.
ParamMap zero_denoiser(const DenoiserDims& dims) {
  ParamMap p;
  init_denoiser_params(p, dims, 1);
  for (auto& [name, a] : p)
    for (double& v : a.data) v = 0.0;
  return p;
}

Array keyed_noise(int rows, int F, uint64_t seed, const char* label,
                  uint64_t step_key, const std::vector<uint64_t>& keys) {
  int B = static_cast<int>(keys.size());
  Array x = Array::zeros({rows, B * F});
  for (int e = 0; e < B; ++e) {
    CounterRng rng(seed);
    rng.key(label).key(keys[static_cast<size_t>(e)]).key(step_key);
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < rows; ++i) x.at(i, e * F + f) = rng.normal();
  }
  return x;
}

}  // namespace

TEST_SUITE_BEGIN("diffusion");

TEST_CASE("schedule accumulates alpha_bar multiplicatively") {
  // Linear ramp with N=2 from 0.1 to 0.2: alphas 0.9 and 0.8, so
  // alpha_bar(2) = 0.72.
  NoiseSchedule s = make_schedule(2, 0.1, 0.2);
  CHECK(s.beta(1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.beta(2) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(s.alpha(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(s.alpha_bar(0) == 1.0);

  NoiseSchedule d = make_schedule(100, 1e-4, 0.02);
  for (int n = 1; n <= d.N; ++n) {
    CHECK(d.alpha_bar(n) ==
          doctest::Approx(d.alpha_bar(n - 1) * d.alpha(n)).epsilon(1e-15));
    CHECK(d.alpha(n) == doctest::Approx(1.0 - d.beta(n)).epsilon(1e-15));
  }
  CHECK(d.beta(1) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(d.beta(100) == doctest::Approx(0.02).epsilon(1e-12));

  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("forward noising matches the closed form") {
  // alpha_bar = 0.25 via a single step with beta = 0.75:
  // x_n = 0.5 * 1 + sqrt(0.75) * 2.
  NoiseSchedule s = make_schedule(1, 0.75, 0.75);
  Array x({1}, {1.0});
  Array eps({1}, {2.0});
  Array noisy = forward_noise(x, 1, eps, s);
  CHECK(noisy.data[0] ==
        doctest::Approx(0.5 + std::sqrt(0.75) * 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(forward_noise(x, 0, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_noise(x, 2, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_noise(x, 1, Array({2}, {1.0, 1.0}), s),
                  std::invalid_argument);
}

TEST_CASE("known-noise inversion recovers the clean frame") {
  CounterRng rng(71);
  NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.range(0, s.N - 1));
    Array x({4}, {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    Array eps({4}, {rng.normal(), rng.normal(), rng.normal(), rng.normal()});
    Array noisy = forward_noise(x, n, eps, s);
    // Reverse the closed form with the true eps.
    double ab = s.alpha_bar(n);
    for (int i = 0; i < 4; ++i) {
      double rec = (noisy.data[static_cast<size_t>(i)] -
                    std::sqrt(1.0 - ab) * eps.data[static_cast<size_t>(i)]) /
                   std::sqrt(ab);
      CHECK(std::abs(rec - x.data[static_cast<size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("sampler sigma matches the posterior formula and vanishes at n=1") {
  NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
  CHECK(sampler_sigma2(s, 1) == 0.0);
  for (int n = 2; n <= s.N; ++n) {
    double want =
        (1.0 - s.alpha_bar(n - 1)) / (1.0 - s.alpha_bar(n)) * s.beta(n);
    CHECK(sampler_sigma2(s, n) == doctest::Approx(want).epsilon(1e-15));
    CHECK(sampler_sigma2(s, n) > 0.0);
  }
}

TEST_CASE("step embedding interleaves sine and cosine pairs") {
  Array e = step_embedding({0, 7}, 6);
  REQUIRE(e.shape == std::vector<int>({6, 2}));
  for (int i = 0; i < 3; ++i) {
    CHECK(e.at(2 * i, 0) == 0.0);
    CHECK(e.at(2 * i + 1, 0) == 1.0);
    double freq = std::exp(-std::log(10000.0) * (2.0 * i) / 6.0);
    CHECK(e.at(2 * i, 1) == doctest::Approx(std::sin(7.0 * freq)).epsilon(1e-12));
    CHECK(e.at(2 * i + 1, 1) ==
          doctest::Approx(std::cos(7.0 * freq)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(step_embedding({1}, 5), std::invalid_argument);
}

TEST_CASE("denoiser validates its input shapes") {
  DenoiserDims dims{6, 2, 3, 5, 4, 8, 4};
  ParamMap p;
  init_denoiser_params(p, dims, 3);
  Tape tape;
  Bank bank = tracked_bank(tape, p);
  int B = 2;
  Array x = Array::zeros({dims.hw, B * dims.horizon});
  Array se = Array::zeros({dims.step_dim, B * dims.horizon});
  Array ctx = Array::zeros({dims.ctx_rows, B});
  Array yp = Array::zeros({dims.d, B * dims.horizon});

  DenoiserOut out = denoiser_forward(bank, dims, x, se, ctx, yp);
  CHECK(out.eps_hat.shape == std::vector<int>({dims.hw, B * dims.horizon}));
  CHECK(out.pre_attn.shape == std::vector<int>({dims.embed, B * dims.horizon}));

  CHECK_THROWS_AS(
      denoiser_forward(bank, dims, Array::zeros({dims.hw, 3}), se, ctx, yp),
      std::invalid_argument);
  CHECK_THROWS_AS(denoiser_forward(bank, dims, x, se,
                                   Array::zeros({dims.ctx_rows + 1, B}), yp),
                  std::invalid_argument);
  CHECK_THROWS_AS(denoiser_forward(bank, dims, x,
                                   Array::zeros({dims.step_dim, B}), ctx, yp),
                  std::invalid_argument);
  CHECK_THROWS_AS(denoiser_forward(bank, dims, x, se, ctx,
                                   Array::zeros({dims.d + 1, B * dims.horizon})),
                  std::invalid_argument);
}

TEST_CASE("conditioning a frame changes only that frame before attention") {
  DenoiserDims dims{6, 3, 2, 4, 4, 8, 4};
  ParamMap p;
  init_denoiser_params(p, dims, 5);
  Bank bank = plain_bank(p);
  int B = 2;
  CounterRng rng(72);
  Array x = Array::zeros({dims.hw, B * dims.horizon});
  Array se = Array::zeros({dims.step_dim, B * dims.horizon});
  Array ctx = Array::zeros({dims.ctx_rows, B});
  Array yp = Array::zeros({dims.d, B * dims.horizon});
  for (double& v : x.data) v = rng.uniform();
  for (double& v : se.data) v = rng.uniform();
  for (double& v : ctx.data) v = rng.uniform();
  for (double& v : yp.data) v = rng.uniform();

  Array base = denoiser_forward(bank, dims, x, se, ctx, yp).pre_attn;
  Array yp2 = yp;
  int target = 4;
  for (int i = 0; i < dims.d; ++i) yp2.at(i, target) += 1.0;
  Array bumped = denoiser_forward(bank, dims, x, se, ctx, yp2).pre_attn;
  for (int c = 0; c < B * dims.horizon; ++c)
    for (int i = 0; i < dims.embed; ++i) {
      if (c == target)
        CHECK(base.at(i, c) != bumped.at(i, c));
      else
        CHECK(base.at(i, c) == bumped.at(i, c));
    }
}

TEST_CASE("attention mixes frames within an episode but not across") {
  DenoiserDims dims{6, 2, 2, 4, 4, 8, 4};
  ParamMap p;
  init_denoiser_params(p, dims, 9);
  Bank bank = plain_bank(p);
  int B = 2;
  CounterRng rng(73);
  Array x = Array::zeros({dims.hw, B * dims.horizon});
  Array se = Array::zeros({dims.step_dim, B * dims.horizon});
  Array ctx = Array::zeros({dims.ctx_rows, B});
  Array yp = Array::zeros({dims.d, B * dims.horizon});
  for (double& v : x.data) v = rng.uniform();
  for (double& v : se.data) v = rng.uniform();
  for (double& v : ctx.data) v = rng.uniform();
  for (double& v : yp.data) v = rng.uniform();

  Array base = denoiser_forward(bank, dims, x, se, ctx, yp).eps_hat;
  // Perturb episode 1's first frame; episode 0's outputs must not move.
  Array x2 = x;
  for (int i = 0; i < dims.hw; ++i) x2.at(i, 2) += 0.5;
  Array bumped = denoiser_forward(bank, dims, x2, se, ctx, yp).eps_hat;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < dims.hw; ++i) CHECK(base.at(i, c) == bumped.at(i, c));
  // Episode 1's second frame shifts through attention even though its own
  // input column did not change.
  bool moved = false;
  for (int i = 0; i < dims.hw; ++i)
    if (base.at(i, 3) != bumped.at(i, 3)) moved = true;
  CHECK(moved);
}

TEST_CASE("zero denoiser reduces sampling to the bare recurrence") {
  DenoiserDims dims{3, 2, 2, 4, 4, 8, 4};
  ParamMap p = zero_denoiser(dims);
  Bank bank = plain_bank(p);
  NoiseSchedule s = make_schedule(2, 0.1, 0.2);
  std::vector<uint64_t> keys{11, 22};
  int B = 2;
  Array ctx = Array::zeros({dims.ctx_rows, B});
  Array yp = Array::zeros({dims.d, B * dims.horizon});

  Array got = sample_frames(bank, dims, s, ctx, yp, 77, keys);

  // Mirror the sampler's arithmetic exactly: scale by the reciprocal root,
  // then scale the noise, then add, as separate elementwise passes.
  Array x = keyed_noise(dims.hw, dims.horizon, 77, "sample-init", 0, keys);
  Array z2 = keyed_noise(dims.hw, dims.horizon, 77, "sample-noise", 2, keys);
  double sigma = std::sqrt(sampler_sigma2(s, 2));
  for (double& v : x.data) v = v * (1.0 / std::sqrt(s.alpha(2)));
  for (double& v : z2.data) v = v * sigma;
  for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = x.data[i] + z2.data[i];
  for (double& v : x.data) v = v * (1.0 / std::sqrt(s.alpha(1)));
  for (double& v : x.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  CHECK(got.data == x.data);
}

TEST_CASE("fixed-seed sampling is bit-identical and batch-independent") {
  DenoiserDims dims{4, 2, 2, 5, 4, 8, 4};
  ParamMap p;
  init_denoiser_params(p, dims, 13);
  Bank bank = plain_bank(p);
  NoiseSchedule s = make_schedule(5, 1e-2, 0.1);
  CounterRng rng(74);

  Array ctx = Array::zeros({dims.ctx_rows, 2});
  Array yp = Array::zeros({dims.d, 2 * dims.horizon});
  for (double& v : ctx.data) v = rng.uniform();
  for (double& v : yp.data) v = rng.uniform();

  Array a = sample_frames(bank, dims, s, ctx, yp, 5, {7, 9});
  Array b = sample_frames(bank, dims, s, ctx, yp, 5, {7, 9});
  CHECK(a.data == b.data);
  Array c = sample_frames(bank, dims, s, ctx, yp, 6, {7, 9});
  CHECK(a.data != c.data);

  // Episode 1 sampled alone reproduces its in-batch columns bit for bit.
  Array ctx1 = Array::zeros({dims.ctx_rows, 1});
  Array yp1 = Array::zeros({dims.d, dims.horizon});
  for (int i = 0; i < dims.ctx_rows; ++i) ctx1.at(i, 0) = ctx.at(i, 1);
  for (int i = 0; i < dims.d; ++i)
    for (int f = 0; f < dims.horizon; ++f)
      yp1.at(i, f) = yp.at(i, dims.horizon + f);
  Array solo = sample_frames(bank, dims, s, ctx1, yp1, 5, {9});
  for (int i = 0; i < dims.hw; ++i)
    for (int f = 0; f < dims.horizon; ++f)
      CHECK(solo.at(i, f) == a.at(i, dims.horizon + f));

  for (double& v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("reduced sampler visits K evenly spaced steps and stays on tape") {
  DenoiserDims dims{4, 2, 2, 5, 4, 8, 4};
  ParamMap p;
  init_denoiser_params(p, dims, 17);
  NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
  CounterRng rng(75);

  Tape tape;
  Bank bank = tracked_bank(tape, p);
  Array ctx = Array::zeros({dims.ctx_rows, 1});
  for (double& v : ctx.data) v = rng.uniform();
  Array yp = Array::zeros({dims.d, dims.horizon});
  for (double& v : yp.data) v = rng.uniform();
  Array ty = tape.leaf(yp, "yp");

  Array out = reduced_sample(bank, dims, s, 8, ctx, ty, 3, {5});
  REQUIRE(out.shape == std::vector<int>({dims.hw, dims.horizon}));
  Array loss = mean_all(mul(out, out));
  tape.backward(loss);
  const Array& gy = tape.named_grads().at("yp");
  double gmag = 0.0;
  for (double v : gy.data) gmag += std::abs(v);
  CHECK(gmag > 0.0);

  CHECK_THROWS_AS(reduced_sample(bank, dims, s, 0, ctx, ty, 3, {5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(reduced_sample(bank, dims, s, 101, ctx, ty, 3, {5}),
                  std::invalid_argument);

  // K = N degenerates to the full deterministic plan n = K..1.
  NoiseSchedule tiny = make_schedule(3, 0.1, 0.2);
  Array full = reduced_sample(bank, dims, tiny, 3, ctx, ty, 3, {5});
  REQUIRE(full.shape == std::vector<int>({dims.hw, dims.horizon}));
}

TEST_CASE("vdm loss regresses the true noise at matched steps") {
  DenoiserDims dims{4, 2, 2, 5, 4, 8, 4};
  ParamMap p;
  init_denoiser_params(p, dims, 19);
  NoiseSchedule s = make_schedule(10, 1e-3, 0.1);
  CounterRng rng(76);
  int B = 2;

  Array xf = Array::zeros({dims.hw, B * dims.horizon});
  Array eps = Array::zeros({dims.hw, B * dims.horizon});
  Array ctx = Array::zeros({dims.ctx_rows, B});
  Array yp = Array::zeros({dims.d, B * dims.horizon});
  for (double& v : xf.data) v = rng.uniform();
  for (double& v : eps.data) v = rng.normal();
  for (double& v : ctx.data) v = rng.uniform();
  for (double& v : yp.data) v = rng.uniform();

  Tape tape;
  Bank bank = tracked_bank(tape, p);
  Array loss = vdm_loss(bank, dims, s, xf, eps, {3, 7}, ctx, yp);
  REQUIRE(loss.size() == 1);
  CHECK(std::isfinite(loss.item()));
  tape.backward(loss);

  // Reference: noise each episode at its own step, run the denoiser, and
  // average the squared eps error over all entries.
  Bank plain = plain_bank(p);
  double want = 0.0;
  std::vector<int> steps{3, 7};
  Array xn = Array::zeros({dims.hw, B * dims.horizon});
  Array se = Array::zeros({dims.step_dim, B * dims.horizon});
  for (int e = 0; e < B; ++e) {
    double ab = s.alpha_bar(steps[static_cast<size_t>(e)]);
    Array emb = step_embedding({steps[static_cast<size_t>(e)]}, dims.step_dim);
    for (int f = 0; f < dims.horizon; ++f) {
      int c = e * dims.horizon + f;
      for (int i = 0; i < dims.hw; ++i)
        xn.at(i, c) = std::sqrt(ab) * xf.at(i, c) +
                      std::sqrt(1.0 - ab) * eps.at(i, c);
      for (int i = 0; i < dims.step_dim; ++i) se.at(i, c) = emb.at(i, 0);
    }
  }
  Array eh = denoiser_forward(plain, dims, xn, se, ctx, yp).eps_hat;
  for (size_t i = 0; i < eh.data.size(); ++i) {
    double dlt = eh.data[i] - eps.data[i];
    want += dlt * dlt;
  }
  want /= static_cast<double>(eh.data.size());
  CHECK(loss.item() == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(vdm_loss(bank, dims, s, xf, eps, {3}, ctx, yp),
                  std::invalid_argument);
  CHECK_THROWS_AS(vdm_loss(bank, dims, s, xf, eps, {3, 11}, ctx, yp),
                  std::invalid_argument);
}

TEST_SUITE_END();
