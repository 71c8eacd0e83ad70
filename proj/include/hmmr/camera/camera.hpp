#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmmr/ad/graph.hpp"

namespace hmmr::camera {

// One byte per keypoint, nonzero when visible.
using VisMask = std::span<const std::uint8_t>;

// Weak-perspective camera: x = s * X[:2] + t.
struct CameraParams {
  double s = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

class CameraUnobservable : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct CameraFit {
  CameraParams cam;
  double residual = 0.0;  // sum over visible points of squared error
  bool nonpositive_scale = false;
};

// joints: k*3 flat, returns k*2 flat.
std::vector<double> project(std::span<const double> joints, const CameraParams& cam);

// Closed-form argmin over (s, t) of sum_i vis_i |s x_i + t - y_i|^2.
// Throws CameraUnobservable with fewer than two visible points or when the
// visible x_orth are all identical.
CameraFit optimal_camera(std::span<const double> x_orth, std::span<const double> x_gt,
                         VisMask vis);

double camera_objective(std::span<const double> x_orth, std::span<const double> x_gt,
                        VisMask vis, const CameraParams& cam);

// Graph versions ------------------------------------------------------------

// joints [F,3k], scale [F,1] (already positive), trans [F,2] -> [F,2k]
ad::Var project(ad::Var joints, ad::Var scale, ad::Var trans);

enum class CameraGradient {
  // differentiate through s*(x) and t*(x) as well
  Full,
  // hold the solved camera fixed
  Fixed,
};

// Per-row optimal-camera reprojection error in mean form: the attained
// objective divided by the number of visible keypoints. x_orth [F,2k]; gt and
// vis are F*2k / F*k flat. Rows where the camera is unobservable yield 0 and
// no gradient; `observable` (if given) receives one flag per row.
ad::Var optimal_camera_residual(ad::Var x_orth, std::span<const double> gt,
                                VisMask vis,
                                CameraGradient mode = CameraGradient::Full,
                                std::vector<bool>* observable = nullptr);

}  // namespace hmmr::camera
