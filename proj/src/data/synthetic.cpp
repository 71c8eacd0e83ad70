#include "hmmr/data/synthetic.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "hmmr/camera/camera.hpp"

namespace hmmr::data {

const char* motion_name(MotionKind k) {
  switch (k) {
    case MotionKind::Mixed: return "mixed";
    case MotionKind::Ballistic: return "ballistic";
    case MotionKind::Sinusoid: return "sinusoid";
    case MotionKind::Ambiguous: return "ambiguous";
    case MotionKind::Constant: return "constant";
  }
  return "?";
}

MotionKind parse_motion(const std::string& s) {
  for (auto k : {MotionKind::Mixed, MotionKind::Ballistic, MotionKind::Sinusoid, MotionKind::Ambiguous,
                 MotionKind::Constant}) {
    if (s == motion_name(k)) return k;
  }
  throw DataError("unknown motion kind '" + s + "' (expected mixed, ballistic, sinusoid, ambiguous or constant)");
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& m) { throw DataError("synthetic config: " + m); };
  if (frames < 3) fail("sequences need at least 3 frames, got " + std::to_string(frames));
  if (!(fps > 0.0)) fail("fps must be positive");
  if (feature_dim < kCodeDim) {
    fail("feature_dim " + std::to_string(feature_dim) + " is below the code size " + std::to_string(kCodeDim));
  }
  if (!(feature_noise >= 0.0)) fail("feature_noise must be >= 0");
  if (!(cam_gain > 0.0) || !std::isfinite(cam_gain)) fail("cam_gain must be positive");
  if (!(vis_dropout >= 0.0 && vis_dropout <= 1.0)) fail("vis_dropout must be in [0, 1]");
  if (!(velocity_sd >= 0.0 && accel_sd >= 0.0 && shape_sd >= 0.0 && velocity_window >= 0.0)) {
    fail("motion scales must be >= 0");
  }
}

SyntheticWorld make_world(std::uint64_t world_seed, std::size_t D) {
  std::mt19937_64 rng(world_seed ^ 0x4d4f54494f4eULL);
  std::normal_distribution<double> n(0.0, 1.0);
  SyntheticWorld w;
  w.pose_basis.assign(body::kPoseDim * kLatentDim, 0.0);
  for (std::size_t r = 0; r < body::kPoseDim; ++r) {
    // the root only turns about the vertical axis
    if (r < 3 && r != 1) continue;
    const double sd = r < 3 ? 0.3 : 0.15;
    for (std::size_t c = 0; c < kLatentDim; ++c) w.pose_basis[r * kLatentDim + c] = sd * n(rng);
  }
  Eigen::MatrixXd A(D, kCodeDim);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < kCodeDim; ++j) A(i, j) = n(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(D, kCodeDim);
  w.encoder.resize(D * kCodeDim);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < kCodeDim; ++j) w.encoder[i * kCodeDim + j] = Q(i, j);
  return w;
}

std::vector<double> render_keypoints(const body::BodyModel& model, std::span<const double> theta_raw) {
  const std::size_t F = theta_raw.size() / body::kThetaDim, k = model.n_keypoints();
  std::vector<double> out;
  out.reserve(F * k * 2);
  for (std::size_t f = 0; f < F; ++f) {
    const auto th = body::ThetaFull::from_raw(theta_raw.subspan(f * body::kThetaDim, body::kThetaDim));
    const auto X = body::regress_joints(model, body::skin(model, th.shape, th.pose));
    const auto x = camera::project(X, th.cam);
    out.insert(out.end(), x.begin(), x.end());
  }
  return out;
}

namespace {

struct Motion {
  std::vector<double> c, c_dot;  // frames x 10
};

Motion sample_motion(MotionKind kind, const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t T = cfg.frames, L = kLatentDim;
  Motion m{std::vector<double>(T * L), std::vector<double>(T * L, 0.0)};
  const double mid = 0.5 * static_cast<double>(T - 1);
  std::vector<double> c0(L), v(L), a(L);
  for (auto& x : c0) x = 0.5 * n(rng);
  for (auto& x : v) x = cfg.velocity_sd * n(rng);
  for (auto& x : a) x = cfg.accel_sd * n(rng);
  std::vector<double> amp(L), freq(L), phase(L);
  for (std::size_t j = 0; j < L; ++j) {
    amp[j] = 0.2 + 0.4 * u(rng);
    freq[j] = 0.5 + u(rng);
    phase[j] = 2.0 * std::numbers::pi * u(rng);
  }
  const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double ts = (static_cast<double>(t) - mid) / cfg.fps;
    for (std::size_t j = 0; j < L; ++j) {
      double c = c0[j], cd = 0.0;
      switch (kind) {
        case MotionKind::Ballistic:
          c += v[j] * ts + 0.5 * a[j] * ts * ts;
          cd = v[j] + a[j] * ts;
          break;
        case MotionKind::Sinusoid: {
          const double w = 2.0 * std::numbers::pi * freq[j];
          c += amp[j] * std::sin(w * ts + phase[j]);
          cd = amp[j] * w * std::cos(w * ts + phase[j]);
          break;
        }
        case MotionKind::Ambiguous:
          c += sign * v[j] * ts;
          cd = sign * v[j];
          break;
        case MotionKind::Constant:
        case MotionKind::Mixed:
          break;
      }
      m.c[t * L + j] = c;
      m.c_dot[t * L + j] = cd;
    }
  }
  return m;
}

}  // namespace

std::vector<SequenceSample> gen_synthetic_dataset(const body::BodyModel& model, const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.frames, D = cfg.feature_dim, L = kLatentDim, k = model.n_keypoints();
  const SyntheticWorld world = make_world(cfg.world_seed, D);
  std::vector<SequenceSample> out;
  out.reserve(cfg.n_seqs);
  for (std::size_t i = 0; i < cfg.n_seqs; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i), 0x53594eu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    MotionKind kind = cfg.motion;
    if (kind == MotionKind::Mixed) kind = u(rng) < 0.0 ? MotionKind::Ballistic : MotionKind::Sinusoid;
    const Motion m = sample_motion(kind, cfg, rng);

    std::array<double, body::kNumBetas> beta{};
    for (auto& b : beta) b = cfg.shape_sd * n(rng);
    const double log_s0 = std::log(0.8) + 0.1 * u(rng), log_sv = 0.05 * u(rng);
    const double tx0 = 0.15 * u(rng), ty0 = 0.15 * u(rng), txv = 0.1 * u(rng), tyv = 0.1 * u(rng);

    SequenceSample s;
    s.id = "syn-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
    s.fps = cfg.fps;
    s.tier = cfg.tier;
    s.frames = T;
    s.feature_dim = D;
    s.keypoints = k;
    s.theta_gt.resize(T * body::kThetaDim);
    s.cam_raw.resize(T * 3);
    const double mid = 0.5 * static_cast<double>(T - 1);
    for (std::size_t t = 0; t < T; ++t) {
      double* th = s.theta_gt.data() + t * body::kThetaDim;
      std::copy(beta.begin(), beta.end(), th);
      for (std::size_t r = 0; r < body::kPoseDim; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) acc += world.pose_basis[r * L + j] * m.c[t * L + j];
        th[body::kPoseOffset + r] = acc;
      }
      const double ts = (static_cast<double>(t) - mid) / cfg.fps;
      const double cam[3] = {log_s0 + log_sv * ts, tx0 + txv * ts, ty0 + tyv * ts};
      for (int a = 0; a < 3; ++a) {
        th[body::kCamOffset + a] = cam[a];
        s.cam_raw[t * 3 + a] = cam[a];
      }
    }
    s.kp2d = render_keypoints(model, s.theta_gt);

    s.vis.assign(T * k, 1);
    if (cfg.vis_dropout > 0.0) {
      std::bernoulli_distribution drop(cfg.vis_dropout);
      for (auto& v : s.vis) v = drop(rng) ? 0 : 1;
    }

    s.features.resize(T * D);
    std::vector<double> z(kCodeDim);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < L; ++j) {
        z[j] = m.c[t * L + j];
        z[L + j] = kind == MotionKind::Ambiguous ? 0.0 : cfg.velocity_window * m.c_dot[t * L + j];
        z[2 * L + j] = beta[j];
      }
      for (int a = 0; a < 3; ++a) z[3 * L + a] = cfg.cam_gain * s.cam_raw[t * 3 + a];
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < kCodeDim; ++j) acc += world.encoder[d * kCodeDim + j] * z[j];
        s.features[t * D + d] = acc + cfg.feature_noise * n(rng);
      }
    }
    s.cam_basis.resize(D * 3);
    for (std::size_t d = 0; d < D; ++d)
      for (int a = 0; a < 3; ++a) s.cam_basis[d * 3 + a] = cfg.cam_gain * world.encoder[d * kCodeDim + 3 * L + a];

    filter_frames(s);
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hmmr::data
