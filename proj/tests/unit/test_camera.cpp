#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "hmmr/ad/gradcheck.hpp"
#include "hmmr/ad/ops.hpp"
#include "hmmr/camera/camera.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmmr;
using namespace hmmr::camera;

namespace {

using Vis = std::vector<std::uint8_t>;

Vis all_visible(std::size_t k) { return Vis(k, 1); }

}  // namespace

TEST_CASE("project examples") {
  const std::vector<double> X = {1, 1, 5, -2, 0.5, 3};
  const auto a = project(X, {1.0, 0.0, 0.0});
  CHECK(a == std::vector<double>{1, 1, -2, 0.5});
  const auto b = project(X, {2.0, 3.0, 4.0});
  CHECK(b[0] == 5);
  CHECK(b[1] == 6);
  CHECK_THROWS(project(std::vector<double>(4), {}));
}

TEST_CASE("optimal camera examples") {
  std::mt19937_64 rng(1);
  const auto x = testutil::randn(16, rng);
  std::vector<double> y(16);
  for (std::size_t q = 0; q < 8; ++q) {
    y[2 * q] = 2.0 * x[2 * q] + 3.0;
    y[2 * q + 1] = 2.0 * x[2 * q + 1] + 4.0;
  }
  Vis vis = all_visible(8);
  const auto fit = optimal_camera(x, y, vis);
  CHECK(std::abs(fit.cam.s - 2.0) < 1e-12);
  CHECK(std::abs(fit.cam.tx - 3.0) < 1e-12);
  CHECK(std::abs(fit.cam.ty - 4.0) < 1e-12);
  CHECK(fit.residual < 1e-10);
  CHECK_FALSE(fit.nonpositive_scale);

  // identity except an outlier that is masked out
  std::vector<double> y2 = x;
  y2[6] += 50.0;
  Vis v2 = all_visible(8);
  v2[3] = false;
  Vis vis2 = v2;
  const auto fit2 = optimal_camera(x, y2, vis2);
  CHECK(std::abs(fit2.cam.s - 1.0) < 1e-12);
  CHECK(std::abs(fit2.cam.tx) < 1e-12);
  CHECK(std::abs(fit2.cam.ty) < 1e-12);
  CHECK(fit2.residual < 1e-20);
}

TEST_CASE("project then solve recovers the camera") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto X = testutil::randn(3 * 14, rng);
    std::vector<double> x(2 * 14);
    for (std::size_t q = 0; q < 14; ++q) {
      x[2 * q] = X[3 * q];
      x[2 * q + 1] = X[3 * q + 1];
    }
    const CameraParams cam{0.5 + (t % 5) * 0.3, 0.1 * t - 1.0, 0.7};
    const auto y = project(X, cam);
    Vis vis = all_visible(14);
    const auto fit = optimal_camera(x, y, vis);
    CHECK(std::abs(fit.cam.s - cam.s) < 1e-12);
    CHECK(std::abs(fit.cam.tx - cam.tx) < 1e-12);
    CHECK(std::abs(fit.cam.ty - cam.ty) < 1e-12);
  }
}

TEST_CASE("unobservable cameras are reported") {
  const std::vector<double> x = {1, 2, 1, 2, 1, 2};
  const std::vector<double> y = {0, 0, 1, 1, 2, 2};
  Vis vis = all_visible(3);
  CHECK_THROWS_AS(optimal_camera(x, y, vis), CameraUnobservable);
  Vis one = {1, 0, 0};
  const std::vector<double> x2 = {1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(optimal_camera(x2, y, one), CameraUnobservable);
}

TEST_CASE("negative scale is flagged, not clamped") {
  const std::vector<double> x = {0, 0, 1, 0, 0, 1};
  const std::vector<double> y = {0, 0, -1, 0, 0, -1};
  Vis vis = all_visible(3);
  const auto fit = optimal_camera(x, y, vis);
  CHECK(fit.nonpositive_scale);
  CHECK(std::abs(fit.cam.s + 1.0) < 1e-12);
}

TEST_CASE("closed form beats a dense grid search") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int inst = 0; inst < 10; ++inst) {
    const auto x = testutil::randn(16, rng, 0.5);
    const double s = 1.0 + 0.5 * u(rng), tx = 0.5 * u(rng), ty = 0.5 * u(rng);
    auto y = testutil::randn(16, rng, 0.05);
    for (std::size_t q = 0; q < 8; ++q) {
      y[2 * q] += s * x[2 * q] + tx;
      y[2 * q + 1] += s * x[2 * q + 1] + ty;
    }
    Vis vis = all_visible(8);
    const auto fit = optimal_camera(x, y, vis);
    const auto grid = oracle::camera_grid_search(x, y, vis, 0.0, 2.0, 0.005, 1.5, 0.005);
    CHECK(fit.residual <= grid.objective + 1e-12);
    CHECK(grid.objective - fit.residual < 1e-3);
    CHECK(std::abs(grid.s - fit.cam.s) <= 0.005);
  }
}

TEST_CASE("optimum is stationary under small perturbations") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto x = testutil::randn(16, rng);
  const auto y = testutil::randn(16, rng);
  Vis vis = all_visible(8);
  const auto fit = optimal_camera(x, y, vis);
  const double base = camera_objective(x, y, vis, fit.cam);
  CHECK(std::abs(base - fit.residual) < 1e-12);
  for (int t = 0; t < 100; ++t) {
    double d[3] = {u(rng), u(rng), u(rng)};
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (auto& v : d) v *= 1e-3 / n;
    const CameraParams c{fit.cam.s + d[0], fit.cam.tx + d[1], fit.cam.ty + d[2]};
    CHECK(camera_objective(x, y, vis, c) >= base);
  }
}

TEST_CASE("invisible points do not affect the solve") {
  std::mt19937_64 rng(5);
  const auto x = testutil::randn(16, rng);
  const auto y = testutil::randn(16, rng);
  Vis v = all_visible(8);
  v[1] = v[5] = false;
  Vis vis = v;
  const auto a = optimal_camera(x, y, vis);
  auto x2 = x, y2 = y;
  x2[2] = 1e3;
  y2[11] = -7.0;
  const auto b = optimal_camera(x2, y2, vis);
  CHECK(std::memcmp(&a.cam, &b.cam, sizeof(CameraParams)) == 0);
  CHECK(a.residual == b.residual);
}

TEST_CASE("graph projection and residual gradients") {
  std::mt19937_64 rng(6);
  const std::size_t F = 3, k = 6;
  const auto joints = testutil::rand_tensor({F, 3 * k}, rng);
  const auto sc = ad::Tensor({F, 1}, {0.8, 1.2, 0.5});
  const auto tr = testutil::rand_tensor({F, 2}, rng);
  auto probe = [](ad::Var y) {
    std::mt19937_64 r(1);
    return ad::sum(ad::mul(y, y.graph()->constant(testutil::rand_tensor(y.shape(), r))));
  };
  CHECK(ad::finite_diff_check([&](ad::Graph& g, ad::Var j) { return probe(project(j, g.constant(sc), g.constant(tr))); },
                              joints)
            .max_rel_error < 1e-6);
  CHECK(ad::finite_diff_check([&](ad::Graph& g, ad::Var s) { return probe(project(g.constant(joints), s, g.constant(tr))); },
                              sc)
            .max_rel_error < 1e-6);
  CHECK(ad::finite_diff_check([&](ad::Graph& g, ad::Var t) { return probe(project(g.constant(joints), g.constant(sc), t)); },
                              tr)
            .max_rel_error < 1e-6);

  const auto x = testutil::rand_tensor({F, 2 * k}, rng);
  const auto gt = testutil::randn(F * 2 * k, rng);
  Vis v(F * k, 1);
  v[2] = v[9] = false;
  // row 2 is unobservable: a single visible point
  for (std::size_t q = 0; q < k; ++q) v[2 * k + q] = q == 0;
  Vis vis = v;
  for (auto mode : {CameraGradient::Full, CameraGradient::Fixed}) {
    auto f = [&](ad::Graph&, ad::Var xv) { return probe(optimal_camera_residual(xv, gt, vis, mode)); };
    CHECK(ad::finite_diff_check(f, x).max_rel_error < 1e-4);
  }
  std::vector<bool> observable;
  ad::Graph g;
  ad::Var xl = g.leaf(x);
  ad::Var r = optimal_camera_residual(xl, gt, vis, CameraGradient::Full, &observable);
  CHECK(observable == std::vector<bool>{true, true, false});
  CHECK(r.value()[2] == 0.0);
  // row 0 value equals the plain solve divided by the visible count
  const auto fit = optimal_camera(std::span(x.ptr(), 2 * k), std::span(gt.data(), 2 * k), camera::VisMask(vis).subspan(0, k));
  CHECK(std::abs(r.value()[0] - fit.residual / 5.0) < 1e-14);

  // both gradient modes agree: the residual is stationary in (s, t)
  ad::Graph g1, g2;
  ad::Var a = g1.leaf(x), b = g2.leaf(x);
  const auto ga = g1.backward(ad::sum(optimal_camera_residual(a, gt, vis, CameraGradient::Full))).wrt(a);
  const auto gb = g2.backward(ad::sum(optimal_camera_residual(b, gt, vis, CameraGradient::Fixed))).wrt(b);
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(ga[i] - gb[i]) < 1e-12);
}
