#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmmr/body/body_model.hpp"

// Pose and mesh metrics. 3D inputs are in model units (meters) and reported
// in millimeters; 2D inputs are normalized image coordinates.

namespace hmmr::eval {

inline constexpr double kMillimeters = 1000.0;

// Neumaier-compensated running sum, so aggregates do not depend on the
// grouping of partial sums.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean joint distance of one frame after subtracting each set's root joint.
double frame_mpjpe(std::span<const double> pred, std::span<const double> gt, std::size_t root);

// Mean over frames (pred, gt: frames x k x 3), root-aligned, in mm.
double mpjpe(std::span<const double> pred, std::span<const double> gt, std::size_t k, std::size_t root);

struct Similarity {
  std::array<double, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  double scale = 1.0;
  std::array<double, 3> t{};
};

struct Procrustes {
  std::vector<double> aligned;  // k x 3
  Similarity transform;
  double residual = 0.0;        // sum of squared distances after alignment
  // Covariance rank < 2: the rotation is not unique; the returned one is
  // still a minimizer.
  bool degenerate = false;
};

// argmin over R in SO(3), c > 0, t of sum |c R p_i + t - g_i|^2.
Procrustes procrustes_align(std::span<const double> pred, std::span<const double> gt);

double frame_pa_mpjpe(std::span<const double> pred, std::span<const double> gt);
double pa_mpjpe(std::span<const double> pred, std::span<const double> gt, std::size_t k);

struct PckCount {
  std::size_t correct = 0;
  std::size_t total = 0;
  double fraction() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0; }
};

// Visible keypoints within alpha * max side of the visible-GT bounding box,
// per frame. pred and gt are frames x k x 2, vis frames x k.
PckCount pck(std::span<const double> pred, std::span<const double> gt, std::span<const std::uint8_t> vis,
             std::size_t k, double alpha);

struct AccelResult {
  double value = 0.0;     // mm/s^2
  std::size_t terms = 0;  // frames contributing (interior frames)
  bool defined() const { return terms > 0; }
};

// Mean over interior frames and joints of |a_pred - a_gt|, a = second
// difference times fps^2. Empty gt reports mean |a_pred|. `excluded` (optional)
// drops any second difference touching an excluded frame.
AccelResult accel_error(std::span<const double> pred, std::span<const double> gt, std::size_t k, double fps,
                        std::span<const std::uint8_t> excluded = {});

struct MeshErrors {
  double posed = 0.0;    // mm, root-aligned
  double unposed = 0.0;  // mm, zero pose on both, no alignment
};

// Per-frame mesh errors for raw Theta rows.
MeshErrors mesh_errors(const body::BodyModel& model, std::span<const double> pred_theta,
                       std::span<const double> gt_theta);

// Keypoints [F, 3k] for raw Theta rows [F, 85].
std::vector<double> keypoints_3d(const body::BodyModel& model, std::span<const double> theta_raw);

}  // namespace hmmr::eval
