#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmmr/ad/graph.hpp"
#include "hmmr/body/body_model.hpp"
#include "hmmr/camera/camera.hpp"

// Loss terms. Batched versions take one row per frame and return a [F]
// vector of per-frame values, so callers can weight or mask frames before
// summing; composite objectives are scalars.

namespace hmmr::losses {

struct LossWeights {
  double w_2d = 60.0;
  double w_3d = 60.0;
  double w_adv = 1.0;
  double w_beta = 1e-3;
  double w_const = 1.0;
  double w_hal = 1.0;
  // Multiplies every delta-frame term; 0 gives the variant without dynamics.
  double w_delta = 1.0;

  // Throws std::invalid_argument naming the first negative or non-finite weight.
  void validate() const;
};

// Image coordinates are normalized: the frame spans [-1, 1] on both axes.
struct Keypoints2D {
  std::vector<double> points;  // k*2
  std::vector<std::uint8_t> vis;  // k

  std::size_t k() const { return vis.size(); }
  std::size_t visible() const;
};

// Which of the 85 raw Theta components L_3D supervises. Default: shape and
// pose, not the camera.
struct ThetaMask {
  bool beta = true;
  bool pose = true;
  bool cam = false;

  std::vector<double> columns() const;  // 85 entries of 0/1
};

// ---- batched graph losses -------------------------------------------------

// Sum over visible keypoints of squared error divided by the visible count.
// Rows with no visible keypoint give 0 and clear their `has_signal` flag.
ad::Var loss_2d(ad::Var pred_x, std::span<const double> gt, camera::VisMask vis,
                std::vector<bool>* has_signal = nullptr);

// Mean squared error over the supervised columns of raw Theta rows [F,85].
ad::Var loss_3d(ad::Var pred, std::span<const double> gt, const ThetaMask& mask = {});

// Pose-only MSE for rows [F,72] (delta frames predict pose only).
ad::Var loss_3d_pose(ad::Var pred_pose, std::span<const double> gt_pose);

// sum_k (D_k - 1)^2 per row of discriminator scores [F,K].
ad::Var adv_generator_loss(ad::Var scores);
// mean_rows sum_k (D_k(real) - 1)^2 + mean_rows sum_k D_k(fake)^2, scalar.
ad::Var adv_discriminator_loss(ad::Var real_scores, ad::Var fake_scores);

// |beta|^2 per row of [F,10].
ad::Var beta_prior(ad::Var beta);

// sum_t |beta_t - beta_{t+1}| over rows of [T,10]; the norm's derivative is
// taken as zero at equal neighbours. `defined` is false for T < 2.
struct ConstShape {
  ad::Var value;
  bool defined = false;
};
ConstShape const_shape_loss(ad::Var betas);

// |Phi - Phi_tilde| per row. With stop_target the gradient does not reach Phi.
ad::Var hallucination_loss(ad::Var phi, ad::Var phi_tilde, bool stop_target = true);

// ---- composites -----------------------------------------------------------

// Per-frame terms of L_t, each [F]. l3d may be left invalid when no frame
// has 3D supervision.
struct FrameTerms {
  ad::Var l2d;
  ad::Var l3d;
  ad::Var adv;
  ad::Var beta;
};

// sum_f row_weight_f * (w_2d l2d + w_3d w3_f l3d + w_adv adv + w_beta beta).
// row_weight removes filtered frames; w3 is 1 where 3D ground truth exists.
// Empty spans mean all ones.
ad::Var frame_loss(const FrameTerms& t, const LossWeights& w, std::span<const double> row_weight = {},
                   std::span<const double> w3 = {});

// sum_t L_t + w_delta sum_dt L_{t+dt} + w_const L_const.
ad::Var temporal_objective(ad::Var frames, std::span<const ad::Var> deltas, const ConstShape& cs,
                           const LossWeights& w);

// L_temporal + w_hal L_hal + L_t(hal) + w_delta sum_dt L_{t+dt}(hal).
ad::Var total_objective(ad::Var temporal, ad::Var hal, ad::Var hal_frames,
                        std::span<const ad::Var> hal_deltas, const LossWeights& w);

// sum_i w_i x_i for x [F].
ad::Var weighted_sum(ad::Var x, std::span<const double> w);

// ---- single-frame conveniences ---------------------------------------------

struct ScalarLoss {
  double value = 0.0;
  bool has_signal = true;
};

ScalarLoss loss_2d(std::span<const double> pred_x, const Keypoints2D& gt);
double loss_3d(const body::ThetaFull& pred, const body::ThetaFull& gt, const ThetaMask& mask = {});
double beta_prior(const body::ShapeParams& beta);
ScalarLoss const_shape_loss(std::span<const body::ShapeParams> betas);

}  // namespace hmmr::losses
