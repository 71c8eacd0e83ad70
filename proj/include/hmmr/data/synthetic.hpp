#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmmr/body/body_model.hpp"
#include "hmmr/data/dataset.hpp"

// Synthetic motion clips rendered through the body model. Pose lives on a
// 10-D latent c_t with theta_t = U c_t; per-frame features encode
//   z_t = [c_t, tau * dc/dt, beta, raw camera]
// through a fixed orthonormal D x 33 map E plus i.i.d. noise. U and E are
// drawn from `world_seed`, so datasets sharing it are the same task.

namespace hmmr::data {

enum class MotionKind { Mixed, Ballistic, Sinusoid, Ambiguous, Constant };

const char* motion_name(MotionKind k);
MotionKind parse_motion(const std::string& s);

inline constexpr std::size_t kLatentDim = 10;
inline constexpr std::size_t kCodeDim = 3 * kLatentDim + 3;  // 33

struct SyntheticConfig {
  std::size_t n_seqs = 8;
  std::size_t frames = 20;
  double fps = 25.0;
  std::uint64_t seed = 0;
  std::uint64_t world_seed = 0;
  MotionKind motion = MotionKind::Mixed;
  Tier tier = Tier::Full3D;
  std::size_t feature_dim = 64;
  double feature_noise = 0.05;
  // Probability that each keypoint is independently marked invisible.
  double vis_dropout = 0.0;
  double velocity_sd = 1.0;     // latent units per second
  double accel_sd = 1.0;        // latent units per second^2
  double velocity_window = 0.2; // tau, seconds
  double shape_sd = 0.5;
  // Gain of the raw camera in the feature code. Keypoints move one-for-one
  // with translation, so the camera needs a higher signal-to-noise ratio
  // than the pose code.
  double cam_gain = 10.0;

  void validate() const;
};

struct SyntheticWorld {
  std::vector<double> pose_basis;  // 72 x 10, row-major
  std::vector<double> encoder;     // D x 33, orthonormal columns
};

SyntheticWorld make_world(std::uint64_t world_seed, std::size_t feature_dim);

std::vector<SequenceSample> gen_synthetic_dataset(const body::BodyModel& model, const SyntheticConfig& cfg);

// Renders keypoints for raw Theta rows [F,85]: project(regress(skin(beta, theta)), cam).
std::vector<double> render_keypoints(const body::BodyModel& model, std::span<const double> theta_raw);

}  // namespace hmmr::data
