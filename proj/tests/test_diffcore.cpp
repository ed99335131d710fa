#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "msim/adam.hpp"
#include "msim/checkpoint.hpp"
#include "msim/gradcheck.hpp"
#include "msim/ops.hpp"
#include "msim/rng.hpp"

using namespace msim;

namespace {

Array random_array(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                   double hi = 1.0) {
  Array a = Array::zeros(std::move(shape));
  CounterRng rng(seed);
  for (double& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_SUITE_BEGIN("diffcore");

TEST_CASE("counter rng is keyed and repeatable") {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool any_diff = false;
  CounterRng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  CHECK(any_diff);

  CounterRng k1(7), k2(7);
  k1.key("init").key("w1");
  k2.key("init").key("w2");
  CHECK(k1.next_u64() != k2.next_u64());

  CounterRng u(5);
  for (int i = 0; i < 1000; ++i) {
    double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("elementwise ops and broadcasting") {
  Array a({2, 3}, {1, 2, 3, 4, 5, 6});
  Array col({2, 1}, {10, 20});
  Array row({1, 3}, {1, 2, 3});
  Array s = Array::scalar(2.0);

  Array r1 = add(a, col);
  CHECK(r1.data == std::vector<double>{11, 12, 13, 24, 25, 26});
  Array r2 = mul(a, row);
  CHECK(r2.data == std::vector<double>{1, 4, 9, 4, 10, 18});
  Array r3 = sub(a, s);
  CHECK(r3.data == std::vector<double>{-1, 0, 1, 2, 3, 4});
  Array r4 = div(a, col);
  CHECK(r4.at(1, 2) == doctest::Approx(0.3));

  CHECK_THROWS_AS(add(a, Array({3, 2}, {1, 2, 3, 4, 5, 6})),
                  std::invalid_argument);
  CHECK_THROWS_AS(div(a, Array::zeros({2, 3})), std::domain_error);
  CHECK_THROWS_AS(sqrt(Array({1}, {-1.0})), std::domain_error);
}

TEST_CASE("matmul matches a naive triple loop") {
  Array a = random_array({7, 5}, 1);
  Array b = random_array({5, 9}, 2);
  Array c = matmul(a, b);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 9; ++j) {
      double s = 0.0;
      for (int k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-12));
    }
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);

  Array v({5}, {1, 2, 3, 4, 5});
  Array av = matmul(a, v);
  CHECK(av.shape == std::vector<int>{7});
}

TEST_CASE("softmax is shift invariant and sums to one") {
  Array x({3}, {1.0, 2.0, 3.0});
  Array y = softmax_axis(x, 0);
  double s = y.data[0] + y.data[1] + y.data[2];
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));

  Array xs = shift(x, 1000.0);
  Array ys = softmax_axis(xs, 0);
  for (int i = 0; i < 3; ++i)
    CHECK(ys.data[i] == doctest::Approx(y.data[i]).epsilon(1e-12));

  // extreme magnitudes stay finite thanks to max subtraction
  Array big({2}, {1e6, -1e6});
  Array yb = softmax_axis(big, 0);
  CHECK(std::isfinite(yb.data[0]));
  CHECK(yb.data[0] == doctest::Approx(1.0));

  Array m({2, 2}, {0.0, 1.0, 2.0, -1.0});
  Array rowsm = softmax_axis(m, 1);
  CHECK(rowsm.at(0, 0) + rowsm.at(0, 1) == doctest::Approx(1.0));
  Array colsm = softmax_axis(m, 0);
  CHECK(colsm.at(0, 1) + colsm.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("softmax gradient at the symmetric point") {
  // d softmax([0,0])[0] / dx = [0.25, -0.25]
  Tape t;
  Array x = t.leaf(Array({2}, {0.0, 0.0}), "x");
  Array y = slice_rows(softmax_axis(x, 0), 0, 1);
  t.backward(y);
  Array g = t.grad(x);
  CHECK(g.data[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(g.data[1] == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("repeated operand accumulates both gradient paths") {
  // f(x) = sum(x * x) + sum(x): df/dx_i = 2 x_i + 1, exactly
  Tape t;
  Array x = t.leaf(Array({3}, {1.5, -2.0, 0.25}), "x");
  Array loss = add(sum_all(mul(x, x)), sum_all(x));
  t.backward(loss);
  Array g = t.grad(x);
  CHECK(g.data[0] == 2.0 * 1.5 + 1.0);
  CHECK(g.data[1] == 2.0 * -2.0 + 1.0);
  CHECK(g.data[2] == 2.0 * 0.25 + 1.0);
}

TEST_CASE("backward reduces broadcast gradients over the right axes") {
  Tape t;
  Array col = t.leaf(Array({2, 1}, {1.0, 2.0}), "col");
  Array row = t.leaf(Array({1, 3}, {3.0, 4.0, 5.0}), "row");
  Array full = t.leaf(random_array({2, 3}, 9), "full");
  Array loss = sum_all(mul(add(full, col), row));
  t.backward(loss);
  Array gc = t.grad(col);
  // d/d col_i = sum_j row_j
  CHECK(gc.data[0] == doctest::Approx(12.0));
  CHECK(gc.data[1] == doctest::Approx(12.0));
  Array gr = t.grad(row);
  for (int j = 0; j < 3; ++j) {
    double expect = (full.at(0, j) + 1.0) + (full.at(1, j) + 2.0);
    CHECK(gr.data[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("gradients of composite expressions match finite differences") {
  auto f = [](const std::vector<Array>& in) {
    Array w = in[0], x = in[1], b = in[2];
    Array h = gelu(add(matmul(w, x), b));
    Array sm = softmax_axis(h, 0);
    Array n = l2norm_cols(sm);
    return mean_all(add(sum_all(mul(sm, h)), sum_all(n)));
  };
  std::vector<Array> inputs = {random_array({4, 3}, 11), random_array({3, 5}, 12),
                               random_array({4, 1}, 13)};
  CHECK(grad_check(f, inputs) < 1e-7);
}

TEST_CASE("gradcheck covers slicing, concat, transpose, div, sqrt, exp") {
  auto f = [](const std::vector<Array>& in) {
    Array a = in[0], b = in[1];
    Array top = transpose(slice_rows(a, 0, 2));       // [3 x 2]
    Array bot = transpose(slice_rows(a, 2, 4));       // [3 x 2]
    Array joined = concat_cols({top, slice_cols(bot, 0, 1)});  // [3 x 3]
    Array d = div(joined, shift(exp(scale(b, 0.1)), 0.5));
    Array r = sqrt(shift(mul(d, d), 1.0));
    return mean_all(r);
  };
  std::vector<Array> inputs = {random_array({4, 3}, 21),
                               random_array({3, 3}, 22)};
  CHECK(grad_check(f, inputs) < 1e-7);
}

TEST_CASE("elem_max routes gradient to the winner, ties to the first") {
  Tape t;
  Array a = t.leaf(Array({3}, {1.0, 5.0, 2.0}), "a");
  Array b = t.leaf(Array({3}, {4.0, 5.0, 0.0}), "b");
  Array loss = sum_all(elem_max(a, b));
  t.backward(loss);
  CHECK(t.grad(a).data == std::vector<double>{0.0, 1.0, 1.0});
  CHECK(t.grad(b).data == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("l2norm of a zero column has zero subgradient") {
  Tape t;
  Array x = t.leaf(Array({2, 2}, {0.0, 3.0, 0.0, 4.0}), "x");
  Array loss = sum_all(l2norm_cols(x));
  t.backward(loss);
  Array g = t.grad(x);
  CHECK(g.at(0, 0) == 0.0);
  CHECK(g.at(1, 0) == 0.0);
  CHECK(g.at(0, 1) == doctest::Approx(0.6));
  CHECK(g.at(1, 1) == doctest::Approx(0.8));
  Array n = l2norm_cols(detach(x));
  CHECK(n.at(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("ops are pure: same inputs give bit-identical outputs") {
  Array a = random_array({6, 6}, 31);
  Array b = random_array({6, 6}, 32);
  Array r1 = softmax_axis(matmul(gelu(a), b), 0);
  Array r2 = softmax_axis(matmul(gelu(a), b), 0);
  CHECK(r1.data == r2.data);
}

TEST_CASE("non-participating leaves get zero gradients") {
  Tape t;
  Array x = t.leaf(Array({2}, {1.0, 2.0}), "x");
  Array unused = t.leaf(Array({3}, {9.0, 9.0, 9.0}), "unused");
  t.backward(sum_all(x));
  CHECK(t.grad(unused).data == std::vector<double>{0.0, 0.0, 0.0});
  auto grads = t.named_grads();
  CHECK(grads.at("unused").data == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(grads.at("x").data == std::vector<double>{1.0, 1.0});
}

TEST_CASE("backward rejects non-scalar losses and foreign tapes") {
  Tape t1, t2;
  Array x = t1.leaf(Array({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(t1.backward(x), std::invalid_argument);
  Array y = t2.leaf(Array({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(add(x, y), std::invalid_argument);
  CHECK_THROWS_AS(t2.backward(sum_all(x)), std::invalid_argument);
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
  ParamMap params;
  params.emplace("w", Array({3}, {1.0, 1.0, 1.0}));
  ParamMap grads;
  grads.emplace("w", Array({3}, {0.5, -2.0, 0.0}));
  AdamState state;
  AdamConfig cfg;
  adam_step(params, grads, state, cfg);
  // after one step: m_hat = g, v_hat = g^2, delta = lr * g / (|g| + eps)
  for (int i = 0; i < 3; ++i) {
    double g = grads.at("w").data[i];
    double expect = 1.0 - cfg.lr * g / (std::abs(g) + cfg.eps);
    CHECK(params.at("w").data[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(state.t == 1);

  ParamMap bad;
  bad.emplace("w", Array({3}, {0.0, std::nan(""), 0.0}));
  CHECK_THROWS_WITH_AS(adam_step(params, bad, state, cfg),
                       "adam_step: non-finite gradient in w",
                       std::runtime_error);
}

TEST_CASE("ema blends only on schedule and copies at decay zero") {
  ParamMap params;
  params.emplace("w", Array({2}, {2.0, 4.0}));
  ParamMap ema;
  ema.emplace("w", Array({2}, {0.0, 0.0}));

  ema_update(ema, params, 0.995, 10, 7);  // off-schedule: no-op
  CHECK(ema.at("w").data == std::vector<double>{0.0, 0.0});

  ema_update(ema, params, 0.995, 10, 10);
  CHECK(ema.at("w").data[0] == doctest::Approx(0.005 * 2.0).epsilon(1e-15));
  CHECK(ema.at("w").data[1] == doctest::Approx(0.005 * 4.0).epsilon(1e-15));

  ema_update(ema, params, 0.0, 10, 20);  // decay 0 copies the params
  CHECK(ema.at("w").data == std::vector<double>{2.0, 4.0});
}

TEST_CASE("checkpoint round-trips byte for byte") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "msim_ckpt_test";
  fs::create_directories(dir);
  std::string p1 = (dir / "a.swck").string();
  std::string p2 = (dir / "b.swck").string();

  ParamMap params;
  params.emplace("enc.w1", random_array({4, 3}, 51));
  params.emplace("enc.b1", random_array({4}, 52));
  params.emplace("dec.w1", random_array({3, 4}, 53));
  save_checkpoint(p1, params);
  ParamMap loaded = load_checkpoint(p1);
  CHECK(loaded.size() == 3);
  CHECK(loaded.at("enc.b1").shape == std::vector<int>{4});
  save_checkpoint(p2, loaded);

  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  CHECK(slurp(p1) == slurp(p2));
  CHECK(checkpoint_digest(params) == checkpoint_digest(loaded));

  // loaded values are the f32 quantization of the originals
  for (size_t i = 0; i < params.at("enc.w1").size(); ++i)
    CHECK(loaded.at("enc.w1").data[i] ==
          static_cast<double>(static_cast<float>(params.at("enc.w1").data[i])));

  std::string bad = (dir / "bad.swck").string();
  {
    std::ofstream f(bad, std::ios::binary);
    f << "NOTCK\n";
  }
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);

  std::string trunc = (dir / "trunc.swck").string();
  {
    std::string whole = slurp(p1);
    std::ofstream f(trunc, std::ios::binary);
    f.write(whole.data(), static_cast<std::streamsize>(whole.size() - 3));
  }
  CHECK_THROWS_AS(load_checkpoint(trunc), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("xavier init is a pure function of seed and name") {
  Array a = xavier_init({8, 4}, 7, "enc.w1");
  Array b = xavier_init({8, 4}, 7, "enc.w1");
  Array c = xavier_init({8, 4}, 7, "enc.w2");
  Array d = xavier_init({8, 4}, 8, "enc.w1");
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  CHECK(a.data != d.data);
  double limit = std::sqrt(6.0 / 12.0);
  for (double v : a.data) CHECK(std::abs(v) <= limit);
}

TEST_CASE("reshape keeps row-major order and rejects bad shapes") {
  Array a({2, 3}, {1, 2, 3, 4, 5, 6});
  Array r = reshape(a, {3, 2});
  CHECK(r.shape == std::vector<int>{3, 2});
  CHECK(r.data == a.data);
  Array flat = reshape(a, {6});
  CHECK(flat.rank() == 1);
  CHECK_THROWS_AS(reshape(a, {4, 2}), std::invalid_argument);
  CHECK_THROWS_AS(reshape(a, {2, 3, 1}), std::invalid_argument);
}

TEST_CASE("repeat_rows and block_sum_rows are transposed scatters") {
  Array a({2, 2}, {1, 2, 3, 4});
  Array rep = repeat_rows(a, 3);
  CHECK(rep.shape == std::vector<int>{6, 2});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 2; ++j) CHECK(rep.at(i, j) == a.at(i / 3, j));

  Array back = block_sum_rows(rep, 3);
  CHECK(back.shape == std::vector<int>{2, 2});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(back.at(i, j) == 3.0 * a.at(i, j));

  CHECK_THROWS_AS(block_sum_rows(Array({3, 2}, {1, 2, 3, 4, 5, 6}), 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(repeat_rows(a, 0), std::invalid_argument);
}

TEST_CASE("gradcheck covers reshape, repeat_rows and block_sum_rows") {
  CounterRng rng(404);
  rng.key("repeat-grad");
  Array a = Array::zeros({3, 4});
  Array b = Array::zeros({9, 2});
  for (double& v : a.data) v = rng.normal();
  for (double& v : b.data) v = rng.normal();
  auto f = [](const std::vector<Array>& in) {
    Array rep = repeat_rows(in[0], 2);        // [6 x 4]
    Array rs = reshape(rep, {8, 3});          // [8 x 3]
    Array head = slice_rows(in[1], 0, 3);     // [3 x 2]
    Array mixed = matmul(rs, head);           // [8 x 2]
    Array summed = block_sum_rows(mixed, 4);  // [2 x 2]
    return sum_all(mul(summed, summed));
  };
  CHECK(grad_check(f, {a, b}) < 1e-7);
}

TEST_SUITE_END();
