#include <doctest.h>

#include <cmath>
#include <random>

#include "hmmr/body/body_model.hpp"
#include "hmmr/eval/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmmr;
using namespace hmmr::eval;

namespace {

std::vector<double> transform(std::span<const double> p, const oracle::M3& R, double c, const double t[3]) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size() / 3; ++i)
    for (int a = 0; a < 3; ++a)
      out[3 * i + a] = c * (R[a * 3] * p[3 * i] + R[a * 3 + 1] * p[3 * i + 1] + R[a * 3 + 2] * p[3 * i + 2]) + t[a];
  return out;
}

oracle::M3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double ax = n(rng), ay = n(rng), az = n(rng);
  const double norm = std::sqrt(ax * ax + ay * ay + az * az);
  std::uniform_real_distribution<double> ang(0.0, M_PI);
  return oracle::axis_angle(ax / norm, ay / norm, az / norm, ang(rng));
}

}  // namespace

TEST_CASE("mpjpe examples") {
  std::mt19937_64 rng(1);
  const auto gt = testutil::randn(2 * 5 * 3, rng);
  CHECK(mpjpe(gt, gt, 5, 0) == 0.0);

  auto shifted = gt;
  for (double& v : shifted) v += 0.010;
  CHECK(mpjpe(shifted, gt, 5, 0) < 1e-9);

  // root at origin in both; the second joint is off by (3, 4, 0) cm
  const std::vector<double> p{0, 0, 0, 0.03, 0.04, 0.0}, g{0, 0, 0, 0, 0, 0};
  CHECK(mpjpe(p, g, 2, 0) == doctest::Approx(25.0));
  CHECK_THROWS_AS(mpjpe(p, std::vector<double>{0, 0, 0}, 2, 0), std::invalid_argument);
}

TEST_CASE("procrustes recovers an exact similarity") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testutil::randn(6 * 3, rng);
    const auto R = random_rotation(rng);
    const double t[3] = {0.3, -1.2, 2.0};
    const double c = 0.5 + trial * 0.2;
    const auto g = transform(p, R, c, t);
    const auto pa = procrustes_align(p, g);
    CHECK(pa.residual < 1e-9);
    CHECK_FALSE(pa.degenerate);
    CHECK(pa.transform.scale == doctest::Approx(c).epsilon(1e-9));
    for (int i = 0; i < 9; ++i) CHECK(std::abs(pa.transform.R[i] - R[i]) < 1e-9);
    for (int i = 0; i < 3; ++i) CHECK(pa.transform.t[i] == doctest::Approx(t[i]).epsilon(1e-9));
  }
}

TEST_CASE("procrustes never reflects") {
  std::mt19937_64 rng(3);
  const auto p = testutil::randn(8 * 3, rng);
  auto g = p;
  for (std::size_t i = 0; i < 8; ++i) g[3 * i] = -g[3 * i];
  const auto pa = procrustes_align(p, g);
  const auto& R = pa.transform.R;
  const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                     R[2] * (R[3] * R[7] - R[4] * R[6]);
  CHECK(det == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pa.residual > 1e-3);
}

TEST_CASE("procrustes matches the rotation grid oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testutil::randn(18, rng);
    auto g = transform(p, random_rotation(rng), 1.3, std::array<double, 3>{0.1, 0.2, 0.3}.data());
    for (double& v : g) v += 0.3 * std::normal_distribution<double>(0, 1)(rng);
    const double ours = procrustes_align(p, g).residual;
    const double grid = oracle::procrustes_grid_search(p, g, 2.0);
    CHECK(ours <= grid + 1e-9);
    CHECK(ours >= grid - 1e-6 * std::max(1.0, grid));
  }
}

TEST_CASE("procrustes residual ignores a pre-applied similarity") {
  std::mt19937_64 rng(5);
  const auto p = testutil::randn(18, rng), g = testutil::randn(18, rng);
  const double base = procrustes_align(p, g).residual;
  const double t[3] = {5, -3, 1};
  const auto q = transform(p, random_rotation(rng), 2.5, t);
  CHECK(procrustes_align(q, g).residual == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("procrustes input checks") {
  const std::vector<double> two{0, 0, 0, 1, 0, 0};
  CHECK_THROWS_AS(procrustes_align(two, two), std::invalid_argument);
  const std::vector<double> same(9, 1.0), gt{0, 0, 0, 1, 0, 0, 0, 1, 0};
  CHECK_THROWS_AS(procrustes_align(same, gt), MetricError);
  // collinear points: rotation about the line is free
  const std::vector<double> line{0, 0, 0, 1, 0, 0, 2, 0, 0};
  CHECK(procrustes_align(line, line).degenerate);
}

TEST_CASE("pa-mpjpe bounded by mpjpe on random data") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto gt = testutil::randn(4 * 14 * 3, rng);
    auto pred = gt;
    for (double& v : pred) v += 0.05 * std::normal_distribution<double>(0, 1)(rng);
    CHECK(pa_mpjpe(pred, gt, 14) <= mpjpe(pred, gt, 14, 0));
  }
}

TEST_CASE("pck examples") {
  // bbox 1 x 0.5, so threshold 0.1 at alpha 0.1
  const std::vector<double> gt{0, 0, 1, 0, 0, 0.5, 1, 0.5};
  const std::vector<std::uint8_t> vis{1, 1, 1, 1};
  CHECK(pck(gt, gt, vis, 4, 0.05).fraction() == 1.0);
  const std::vector<double> pred{0.05, 0, 1, 0.09, 0.2, 0.5, 1, 0.8};
  const auto c = pck(pred, gt, vis, 4, 0.1);
  CHECK(c.correct == 2);
  CHECK(c.total == 4);
  CHECK(c.fraction() == 0.5);
  auto far = gt;
  for (double& v : far) v += 0.2;
  CHECK(pck(far, gt, vis, 4, 0.1).fraction() == 0.0);

  // invisible keypoints neither count nor shape the box
  const std::vector<std::uint8_t> vis3{1, 1, 1, 0};
  auto pred3 = gt;
  pred3[6] = 50.0;
  CHECK(pck(pred3, gt, vis3, 4, 0.05).fraction() == 1.0);
  CHECK(pck(pred3, gt, vis3, 4, 0.05).total == 3);
}

TEST_CASE("pck is monotone in alpha") {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution b(0.8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto gt = testutil::randn(5 * 14 * 2, rng);
    auto pred = gt;
    for (double& v : pred) v += 0.3 * std::normal_distribution<double>(0, 1)(rng);
    std::vector<std::uint8_t> vis(5 * 14);
    for (auto& v : vis) v = b(rng);
    double prev = 1.0;
    for (double alpha = 1.0; alpha > 1e-3; alpha *= 0.7) {
      const double f = pck(pred, gt, vis, 14, alpha).fraction();
      CHECK(f <= prev);
      CHECK(f >= 0.0);
      prev = f;
    }
  }
}

TEST_CASE("accel error examples") {
  std::mt19937_64 rng(8);
  const std::size_t T = 10, k = 3;
  const auto x = testutil::randn(T * k * 3, rng);
  CHECK(accel_error(x, x, k, 25.0).value == 0.0);
  CHECK(accel_error(x, x, k, 25.0).terms == T - 2);

  std::vector<double> a(T * k * 3), b(T * k * 3);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < k * 3; ++i) {
      a[t * k * 3 + i] = 0.1 * i + 0.01 * t;
      b[t * k * 3 + i] = -0.2 * i - 0.03 * t * (i % 2 ? 1 : -1);
    }
  CHECK(accel_error(a, b, k, 25.0).value < 1e-6);

  const std::vector<double> short_seq(2 * k * 3, 0.0);
  CHECK_FALSE(accel_error(short_seq, short_seq, k, 25.0).defined());
}

TEST_CASE("accel error matches the analytic sinusoid") {
  const double fps = 25.0, A = 0.05, f = 1.0;
  const std::size_t T = 101;  // four full periods
  std::vector<double> gt(T * 3, 0.0), pred(T * 3, 0.0);
  for (std::size_t t = 0; t < T; ++t) gt[3 * t + 1] = A * std::sin(2 * M_PI * f * t / fps);
  const double expected = oracle::sinusoid_mean_abs_accel(A, f) * 1000.0;
  const auto r = accel_error(pred, gt, 1, fps);
  CHECK(std::abs(r.value - expected) / expected < 0.02);
}

TEST_CASE("accel error ignores shared constant-velocity drift") {
  std::mt19937_64 rng(9);
  const std::size_t T = 12, k = 4;
  const auto p = testutil::randn(T * k * 3, rng), g = testutil::randn(T * k * 3, rng);
  auto pd = p, gd = g;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < k * 3; ++i) {
      const double drift = 0.7 * t * (1.0 + i);
      pd[t * k * 3 + i] += drift;
      gd[t * k * 3 + i] += drift;
    }
  CHECK(accel_error(pd, gd, k, 25.0).value == doctest::Approx(accel_error(p, g, k, 25.0).value).epsilon(1e-9));
  // with no gt the mean predicted magnitude is reported
  CHECK(accel_error(p, {}, k, 25.0).value == doctest::Approx(accel_error(p, std::vector<double>(p.size()), k, 25.0).value));
}

TEST_CASE("accel error skips second differences touching excluded frames") {
  std::mt19937_64 rng(10);
  const std::size_t T = 8, k = 2;
  const auto p = testutil::randn(T * k * 3, rng), g = testutil::randn(T * k * 3, rng);
  std::vector<std::uint8_t> ex(T, 0);
  ex[3] = 1;
  CHECK(accel_error(p, g, k, 25.0, ex).terms == T - 2 - 3);
  ex.assign(T, 1);
  CHECK_FALSE(accel_error(p, g, k, 25.0, ex).defined());
}

TEST_CASE("mesh error examples") {
  const auto model = body::make_toy_model(3);
  std::mt19937_64 rng(11);
  body::ThetaFull a;
  for (auto& v : a.pose.theta) v = 0.3 * std::normal_distribution<double>(0, 1)(rng);
  for (auto& v : a.shape.beta) v = 0.5 * std::normal_distribution<double>(0, 1)(rng);
  const auto ra = a.to_raw();
  const auto same = mesh_errors(model, ra, ra);
  CHECK(same.posed == 0.0);
  CHECK(same.unposed == 0.0);

  body::ThetaFull b = a;
  for (auto& v : b.pose.theta) v += 0.2;
  const auto rb = b.to_raw();
  const auto pose_only = mesh_errors(model, rb, ra);
  CHECK(pose_only.unposed == 0.0);
  CHECK(pose_only.posed > 0.0);

  body::ThetaFull c0, c1;
  c1.shape.beta[0] = 1.0;
  const auto r0 = c0.to_raw(), r1 = c1.to_raw();
  const auto& dirs = model.data().shape_dirs;
  const std::size_t N = model.n_vertices();
  double expected = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (int ax = 0; ax < 3; ++ax) s += dirs[(i * 3 + ax) * 10] * dirs[(i * 3 + ax) * 10];
    expected += std::sqrt(s) / static_cast<double>(N);
  }
  CHECK(mesh_errors(model, r1, r0).unposed == doctest::Approx(1000.0 * expected).epsilon(1e-12));
}

TEST_CASE("compensated sum is grouping independent") {
  std::vector<double> v{1e16, 1.0, -1e16, 1.0};
  CompensatedSum s;
  for (double x : v) s.add(x);
  CHECK(s.value() == 2.0);
}
