#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "hmmr/camera/camera.hpp"
#include "hmmr/data/dataset.hpp"
#include "hmmr/data/synthetic.hpp"
#include "hmmr/data/tracking.hpp"
#include "hmmr/io/sections.hpp"
#include "hmmr/losses/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmmr;
using namespace hmmr::data;

namespace {

const body::BodyModel& model() {
  static const body::BodyModel m = body::make_toy_model(0);
  return m;
}

SyntheticConfig small(std::uint64_t seed = 1) {
  SyntheticConfig c;
  c.n_seqs = 3;
  c.frames = 12;
  c.seed = seed;
  return c;
}

std::vector<double> joints_of(const SequenceSample& s, std::size_t t) {
  const auto th = s.theta(t);
  return body::regress_joints(model(), body::skin(model(), th.shape, th.pose));
}

}  // namespace

TEST_CASE("synthetic generation is deterministic") {
  const auto a = gen_synthetic_dataset(model(), small());
  const auto b = gen_synthetic_dataset(model(), small());
  CHECK(serialize_dataset(a) == serialize_dataset(b));
  const auto c = gen_synthetic_dataset(model(), small(2));
  CHECK(serialize_dataset(a) != serialize_dataset(c));
  CHECK(a.size() == 3);
  CHECK(a[0].frames == 12);
  CHECK(a[0].keypoints == model().n_keypoints());
  CHECK(a[0].feature_dim == 64);

  auto bad = small();
  bad.frames = 2;
  CHECK_THROWS_WITH_AS(gen_synthetic_dataset(model(), bad), doctest::Contains("at least 3 frames"), DataError);
  bad = small();
  bad.feature_dim = 20;
  CHECK_THROWS_AS(gen_synthetic_dataset(model(), bad), DataError);
  CHECK(parse_motion("ballistic") == MotionKind::Ballistic);
  CHECK_THROWS_AS(parse_motion("jumpy"), DataError);
}

TEST_CASE("synthetic ground truth is self-consistent") {
  auto cfg = small();
  cfg.motion = MotionKind::Ballistic;
  const auto seqs = gen_synthetic_dataset(model(), cfg);
  const std::size_t k = model().n_keypoints();
  for (const auto& s : seqs) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      const auto X = joints_of(s, t);
      std::vector<double> orth(2 * k);
      for (std::size_t q = 0; q < k; ++q) {
        orth[2 * q] = X[3 * q];
        orth[2 * q + 1] = X[3 * q + 1];
      }
      const std::span<const double> gt(s.kp2d.data() + t * 2 * k, 2 * k);
      const std::span<const std::uint8_t> vis(s.vis.data() + t * k, k);
      const auto fit = camera::optimal_camera(orth, gt, vis);
      CHECK(fit.residual < 1e-20);
      CHECK(std::abs(std::log(fit.cam.s) - s.theta_gt[t * 85 + body::kCamOffset]) < 1e-10);

      // loss_2d of the ground truth against its own rendering
      const auto th = s.theta(t);
      const auto x = camera::project(X, th.cam);
      losses::Keypoints2D kp{{gt.begin(), gt.end()}, {vis.begin(), vis.end()}};
      CHECK(losses::loss_2d(x, kp).value == 0.0);
    }
  }
}

TEST_CASE("constant motion has zero acceleration") {
  auto cfg = small();
  cfg.motion = MotionKind::Constant;
  const auto seqs = gen_synthetic_dataset(model(), cfg);
  for (const auto& s : seqs) {
    for (std::size_t t = 2; t < s.frames; ++t) {
      const auto a = joints_of(s, t - 2), b = joints_of(s, t - 1), c = joints_of(s, t);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i] - (2.0 * b[i] - a[i]) == 0.0);
    }
  }
}

TEST_CASE("feature encoding") {
  auto cfg = small();
  cfg.feature_noise = 0.0;
  for (auto kind : {MotionKind::Ballistic, MotionKind::Ambiguous}) {
    cfg.motion = kind;
    const auto seqs = gen_synthetic_dataset(model(), cfg);
    const auto world = make_world(cfg.world_seed, cfg.feature_dim);
    for (const auto& s : seqs) {
      // camera columns of the encoder recover the raw camera exactly (the
      // basis carries the gain, so the projection picks it up twice)
      const double g2 = cfg.cam_gain * cfg.cam_gain;
      for (std::size_t t = 0; t < s.frames; ++t) {
        for (int a = 0; a < 3; ++a) {
          double z = 0.0, vel = 0.0;
          for (std::size_t d = 0; d < 64; ++d) {
            z += s.cam_basis[d * 3 + a] * s.features[t * 64 + d];
            vel += world.encoder[d * kCodeDim + kLatentDim + a] * s.features[t * 64 + d];
          }
          CHECK(std::abs(z / g2 - s.cam_raw[t * 3 + a]) < 1e-12);
          if (kind == MotionKind::Ambiguous) CHECK(std::abs(vel) < 1e-12);
          if (kind == MotionKind::Ballistic) CHECK(std::abs(vel) > 0.0);
        }
      }
    }
  }
  // orthonormal encoder
  const auto w = make_world(0, 64);
  for (std::size_t i = 0; i < kCodeDim; ++i) {
    for (std::size_t j = 0; j < kCodeDim; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < 64; ++d) dot += w.encoder[d * kCodeDim + i] * w.encoder[d * kCodeDim + j];
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("dataset round trip and validation") {
  auto seqs = gen_synthetic_dataset(model(), small());
  seqs[1].tier = Tier::GT2D;
  seqs[1].theta_gt.clear();
  seqs[2].cam_basis.clear();
  seqs[2].cam_raw.clear();
  const std::string img = serialize_dataset(seqs);
  const auto back = deserialize_dataset(img);
  REQUIRE(back.size() == 3);
  CHECK(serialize_dataset(back) == img);
  CHECK(back[0].features == seqs[0].features);
  CHECK(back[1].tier == Tier::GT2D);
  CHECK_FALSE(back[1].has_theta());
  CHECK(back[0].theta_gt == seqs[0].theta_gt);

  auto bad = seqs[0];
  bad.fps = 0.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("fps"), DataError);
  bad = seqs[0];
  bad.theta_gt.clear();
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("full3d"), DataError);

  // a file claiming full3d without theta_gt is rejected on load
  io::SectionWriter w("HMMRDATA1");
  const std::int64_t one = 1;
  w.i64("count", std::span(&one, 1));
  const auto& s = seqs[0];
  w.bytes("seq0.id", "x");
  const std::int64_t meta[] = {0, static_cast<std::int64_t>(s.frames), 64, static_cast<std::int64_t>(s.keypoints)};
  w.i64("seq0.meta", meta);
  w.f64("seq0.fps", std::span(&s.fps, 1));
  w.f64("seq0.features", s.features);
  w.f64("seq0.kp2d", s.kp2d);
  w.bytes("seq0.vis", std::string(s.vis.begin(), s.vis.end()));
  CHECK_THROWS_WITH_AS(deserialize_dataset(w.finish(), "crafted"), doctest::Contains("full3d"), DataError);
  CHECK_THROWS_AS(deserialize_dataset(img.substr(0, img.size() / 2)), io::FormatError);
}

TEST_CASE("frame filter") {
  auto s = gen_synthetic_dataset(model(), small())[0];
  CHECK(filter_frames(s) == 0);
  CHECK(std::all_of(s.excluded.begin(), s.excluded.end(), [](auto v) { return v == 0; }));
  const std::size_t k = s.keypoints;
  for (std::size_t q = 5; q < k; ++q) s.vis[3 * k + q] = 0;
  for (std::size_t q = 6; q < k; ++q) s.vis[4 * k + q] = 0;
  CHECK(filter_frames(s) == 1);
  CHECK(s.excluded[3] == 1);
  CHECK(s.excluded[4] == 0);
  CHECK(s.n_included() == s.frames - 1);
}

TEST_CASE("hungarian matches brute force") {
  const std::vector<double> c = {1, 10, 10, 1};
  const auto m = hungarian(c, 2, 2);
  CHECK(m == std::vector<int>{0, 1});
  CHECK(assignment_cost(c, 2, m) == 2.0);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> ints(0, 20);
  std::uniform_real_distribution<double> reals(0.0, 1.0);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t R = 1 + trial % 6, C = 1 + (trial / 6) % 6;
    std::vector<double> cost(R * C);
    const bool integral = trial % 2 == 0;
    for (auto& x : cost) x = integral ? ints(rng) : reals(rng);
    const auto a = hungarian(cost, R, C);
    // valid partial permutation
    std::vector<int> seen(C, 0);
    std::size_t matched = 0;
    for (int j : a) {
      if (j < 0) continue;
      ++matched;
      CHECK(++seen[static_cast<std::size_t>(j)] == 1);
    }
    CHECK(matched == std::min(R, C));
    const double got = assignment_cost(cost, C, a), want = oracle::assignment_brute_force(cost, R, C);
    if (integral) CHECK(got == want);
    else CHECK(std::abs(got - want) < 1e-12);
  }
}

namespace {

losses::Keypoints2D person_at(double x, double y, std::size_t k) {
  losses::Keypoints2D kp;
  for (std::size_t q = 0; q < k; ++q) {
    kp.points.push_back(x + 0.05 * std::cos(static_cast<double>(q)));
    kp.points.push_back(y + 0.2 * static_cast<double>(q) / static_cast<double>(k));
    kp.vis.push_back(1);
  }
  return kp;
}

}  // namespace

TEST_CASE("track linking") {
  const std::size_t k = 8;
  {
    std::vector<DetectionFrame> frames(30);
    for (std::size_t f = 0; f < 30; ++f) frames[f].detections.push_back({person_at(0.01 * f, 0.0, k), 0.9});
    const auto tracks = link_tracks(frames);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].entries.size() == 30);
  }
  {
    std::mt19937_64 rng(4);
    std::vector<DetectionFrame> frames(40);
    std::vector<std::vector<int>> who(40);
    for (std::size_t f = 0; f < 40; ++f) {
      std::vector<int> order = {0, 1};
      std::shuffle(order.begin(), order.end(), rng);
      for (int p : order) {
        frames[f].detections.push_back({person_at(p == 0 ? -0.5 + 0.005 * f : 0.5 - 0.005 * f, 0.1 * p, k), 1.0});
        who[f].push_back(p);
      }
    }
    const auto tracks = link_tracks(frames);
    REQUIRE(tracks.size() == 2);
    std::size_t covered = 0;
    for (const auto& t : tracks) {
      const int id = who[t.entries[0].frame][t.entries[0].detection];
      for (const auto& e : t.entries) CHECK(who[e.frame][e.detection] == id);
      covered += t.entries.size();
    }
    CHECK(covered == 80);
  }
  {
    // a gap longer than the tolerance splits the track, a shorter one does not
    std::vector<DetectionFrame> frames(30);
    for (std::size_t f = 0; f < 30; ++f) {
      if ((f >= 5 && f < 10) || (f >= 15 && f < 21)) continue;
      frames[f].detections.push_back({person_at(0.0, 0.0, k), 1.0});
    }
    const auto tracks = link_tracks(frames);
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].entries.back().frame == 14);
    CHECK(tracks[1].entries.front().frame == 21);
  }
  {
    // a detection far from every open track starts a new one
    std::vector<DetectionFrame> frames(2);
    frames[0].detections.push_back({person_at(0.0, 0.0, k), 1.0});
    frames[1].detections.push_back({person_at(0.8, 0.0, k), 1.0});
    CHECK(link_tracks(frames).size() == 2);
  }
}

TEST_CASE("detection import") {
  std::istringstream in(
      "# frame person x y c ...\n"
      "0 0  0.1 0.2 0.9  0.3 0.4 0.0\n"
      "0 1  0.5 0.5 0.5  0.6 0.6 0.7\n"
      "\n"
      "2 0  0.1 0.2 1.0  0.3 0.4 1.0  # trailing comment\n");
  const auto frames = read_detections(in, 2);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0].detections.size() == 2);
  CHECK(frames[1].detections.empty());
  CHECK(frames[0].detections[0].kp.vis == std::vector<std::uint8_t>{1, 0});
  CHECK(std::abs(frames[0].detections[0].score - 0.9) < 1e-15);
  CHECK(std::abs(frames[0].detections[1].score - 0.6) < 1e-15);
  std::istringstream bad("0 0 0.1 0.2\n");
  CHECK_THROWS_WITH_AS(read_detections(bad, 2), doctest::Contains("line 1"), DataError);
}
