#include <cmath>
#include <vector>

#include "doctest.h"
#include "msim/interaction.hpp"
#include "msim/rng.hpp"
#include "msim/tape.hpp"

using namespace msim;

namespace {

std::vector<double> random_vec(int d, CounterRng& rng, double scale = 2.0) {
  std::vector<double> v(static_cast<size_t>(d));
  for (double& x : v) x = (rng.uniform() * 2.0 - 1.0) * scale;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

TEST_SUITE_BEGIN("interaction");

TEST_CASE("projection removes the context component in the worked example") {
  // y = (3, 4) against z = (1, 0): the z-component 3 is removed, leaving
  // (0, 4).
  std::vector<double> out = project_out({3.0, 4.0}, {1.0, 0.0});
  CHECK(out[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("relaxed rule projects only on negative alignment") {
  // y = (-1, 2) has negative dot with z = (1, 0), so it is projected to
  // (0, 2); y = (1, 2) has positive dot and passes through untouched.
  std::vector<double> hit = hyperplane_relax({-1.0, 2.0}, {1.0, 0.0});
  CHECK(hit[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(hit[1] == doctest::Approx(2.0).epsilon(1e-15));

  std::vector<double> pass = hyperplane_relax({1.0, 2.0}, {1.0, 0.0});
  CHECK(pass[0] == 1.0);
  CHECK(pass[1] == 2.0);
}

TEST_CASE("norm loss matches the worked example") {
  // ||y'|| = 1 and ||z_t - z_prev|| = 2 gives (1 - 2)^2 = 1.
  CHECK(norm_loss_single({0.0, 1.0}, {2.0, 0.0}, {0.0, 0.0}) ==
        doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("projection output is orthogonal to the context direction") {
  CounterRng rng(61);
  for (int trial = 0; trial < 300; ++trial) {
    int d = 2 + static_cast<int>(rng.range(0, 6));
    std::vector<double> y = random_vec(d, rng);
    std::vector<double> z = random_vec(d, rng);
    if (norm(z) < 1e-6) continue;
    std::vector<double> p = project_out(y, z);
    CHECK(std::abs(dot(p, z)) <= 1e-9 * norm(y) * norm(z));
    CHECK(norm(p) <= norm(y) + 1e-12);

    std::vector<double> pp = project_out(p, z);
    for (int i = 0; i < d; ++i)
      CHECK(std::abs(pp[static_cast<size_t>(i)] - p[static_cast<size_t>(i)]) <
            1e-10);
  }
}

TEST_CASE("relaxed rule is piecewise exact and scale invariant") {
  CounterRng rng(62);
  for (int trial = 0; trial < 300; ++trial) {
    int d = 2 + static_cast<int>(rng.range(0, 6));
    std::vector<double> y = random_vec(d, rng);
    std::vector<double> z = random_vec(d, rng);
    if (norm(z) < 1e-6) continue;
    std::vector<double> r = hyperplane_relax(y, z);
    if (dot(y, z) >= 0.0) {
      for (int i = 0; i < d; ++i)
        CHECK(r[static_cast<size_t>(i)] == y[static_cast<size_t>(i)]);
    } else {
      std::vector<double> p = project_out(y, z);
      for (int i = 0; i < d; ++i)
        CHECK(r[static_cast<size_t>(i)] == p[static_cast<size_t>(i)]);
    }

    // Scaling z changes neither branch choice nor the projection.
    double c = 0.25 + rng.uniform() * 8.0;
    std::vector<double> zs = z;
    for (double& v : zs) v *= c;
    std::vector<double> rs = hyperplane_relax(y, zs);
    for (int i = 0; i < d; ++i)
      CHECK(std::abs(rs[static_cast<size_t>(i)] - r[static_cast<size_t>(i)]) <
            1e-10);
  }
}

TEST_CASE("batched interaction matches the per-vector reference") {
  CounterRng rng(63);
  int d = 5, cols = 40;
  Array y = Array::zeros({d, cols});
  Array z = Array::zeros({d, cols});
  for (double& v : y.data) v = rng.uniform() * 4.0 - 2.0;
  for (double& v : z.data) v = rng.uniform() * 4.0 - 2.0;
  for (int i = 0; i < d; ++i) z.at(i, 7) = 0.0;

  for (const char* mode : {"projection", "hyperplane", "none"}) {
    InteractionStats stats;
    Array out = interaction_apply(y, z, mode, kContextNormEps, &stats);
    REQUIRE(out.shape == y.shape);
    for (int c = 0; c < cols; ++c) {
      std::vector<double> yc(static_cast<size_t>(d)), zc(static_cast<size_t>(d));
      for (int i = 0; i < d; ++i) {
        yc[static_cast<size_t>(i)] = y.at(i, c);
        zc[static_cast<size_t>(i)] = z.at(i, c);
      }
      std::vector<double> want = yc;
      if (std::string(mode) != "none" && norm(zc) > kContextNormEps) {
        want = (std::string(mode) == "projection") ? project_out(yc, zc)
                                                   : hyperplane_relax(yc, zc);
      }
      for (int i = 0; i < d; ++i)
        CHECK(out.at(i, c) ==
              doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-12));
    }
    if (std::string(mode) == "none")
      CHECK(stats.degenerate == 0);
    else
      CHECK(stats.degenerate == 1);
  }
}

TEST_CASE("pass-through columns keep their bits") {
  CounterRng rng(64);
  int d = 4, cols = 24;
  Array y = Array::zeros({d, cols});
  Array z = Array::zeros({d, cols});
  for (double& v : y.data) v = rng.uniform() * 2.0 - 1.0;
  for (double& v : z.data) v = rng.uniform() * 2.0 - 1.0;

  Array out = interaction_apply(y, z, "hyperplane");
  for (int c = 0; c < cols; ++c) {
    double yz = 0.0;
    for (int i = 0; i < d; ++i) yz += y.at(i, c) * z.at(i, c);
    if (yz >= 0.0)
      for (int i = 0; i < d; ++i) CHECK(out.at(i, c) == y.at(i, c));
  }

  Array none = interaction_apply(y, z, "none");
  CHECK(none.data == y.data);
}

TEST_CASE("single vectors and degenerate context are handled") {
  Array y({3}, {1.0, 2.0, 3.0});
  Array z({3}, {2.0, 0.0, 0.0});
  Array out = interaction_apply(y, z, "projection");
  REQUIRE(out.shape == std::vector<int>{3});
  CHECK(out.data[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(out.data[1] == 2.0);
  CHECK(out.data[2] == 3.0);

  InteractionStats stats;
  Array zero_z = Array::zeros({3});
  Array kept = interaction_apply(y, zero_z, "projection", kContextNormEps,
                                 &stats);
  CHECK(kept.data == y.data);
  CHECK(stats.degenerate == 1);

  CHECK_THROWS_AS(interaction_apply(y, Array::zeros({4}), "projection"),
                  std::invalid_argument);
  CHECK_THROWS_AS(interaction_apply(y, z, "sideways"), std::invalid_argument);
  CHECK_THROWS_AS(select_context_index(0), std::invalid_argument);
  CHECK(select_context_index(4) == 3);
}

TEST_CASE("norm loss on the tape matches the scalar reference") {
  CounterRng rng(65);
  int d = 4, cols = 6;
  Array yp = Array::zeros({d, cols});
  Array zt = Array::zeros({d, cols});
  Array zp = Array::zeros({d, cols});
  for (double& v : yp.data) v = rng.uniform() * 2.0 - 1.0;
  for (double& v : zt.data) v = rng.uniform() * 2.0 - 1.0;
  for (double& v : zp.data) v = rng.uniform() * 2.0 - 1.0;

  double want = 0.0;
  for (int c = 0; c < cols; ++c) {
    std::vector<double> ypc(static_cast<size_t>(d)), ztc(static_cast<size_t>(d)),
        zpc(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
      ypc[static_cast<size_t>(i)] = yp.at(i, c);
      ztc[static_cast<size_t>(i)] = zt.at(i, c);
      zpc[static_cast<size_t>(i)] = zp.at(i, c);
    }
    want += norm_loss_single(ypc, ztc, zpc);
  }
  want /= cols;
  CHECK(interaction_norm_loss(yp, zt, zp).item() ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradients flow through the selected branch only") {
  // One projected column and one pass-through column; finite differences
  // must agree on both y entries.
  Tape tape;
  Array y0({2, 2}, {-1.0, 2.0, 1.0, 2.0});
  Array z0({2, 2}, {1.0, 0.0, 1.0, 0.0});

  auto loss_at = [&](const Array& py, Tape& t) {
    Array ay = t.leaf(py, "y");
    Array az = t.leaf(z0, "z");
    Array out = interaction_apply(ay, az, "hyperplane");
    return sum_all(mul(out, out));
  };
  Array loss = loss_at(y0, tape);
  tape.backward(loss);
  double base = loss.item();
  auto grads = tape.named_grads();
  const Array& gy = grads.at("y");

  double h = 1e-6;
  for (size_t idx = 0; idx < y0.data.size(); ++idx) {
    Array bumped = y0;
    bumped.data[idx] += h;
    Tape t2;
    double up = loss_at(bumped, t2).item();
    CHECK(gy.data[idx] == doctest::Approx((up - base) / h).epsilon(1e-3));
  }
}

TEST_SUITE_END();
