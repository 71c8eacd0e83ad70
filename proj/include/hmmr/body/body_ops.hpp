#pragma once

#include "hmmr/ad/graph.hpp"
#include "hmmr/body/body_model.hpp"

// Differentiable body-model stages on batches of F rows.

namespace hmmr::body {

// [F,72] axis-angle -> [F,216] row-major rotation matrices.
ad::Var rodrigues(ad::Var theta);

// [F,10] -> [F,3N]
ad::Var shape_blend(const BodyModel& model, ad::Var beta);
// [F,10] -> [F,72], equal to rest_joint_regressor applied to shape_blend.
ad::Var rest_joints(const BodyModel& model, ad::Var beta);

// Rotations [F,216] and rest joints [F,72] -> world transforms [F,288]
// stored per joint as 9 rotation entries then the joint's displacement from
// its rest position (posed joint = rest joint + displacement).
ad::Var kinematic_chain(const BodyModel& model, ad::Var rotations, ad::Var joints);

// Linear blend skinning relative to the rest joints: [F,3N].
ad::Var blend_skin(const BodyModel& model, ad::Var shaped, ad::Var joints, ad::Var world);

// X = W * vertices per row: [F,3N] -> [F,3k].
ad::Var regress_keypoints(const BodyModel& model, ad::Var vertices);

struct BodyOutput {
  ad::Var rotations;  // [F,216]
  ad::Var vertices;   // [F,3N]
  ad::Var keypoints;  // [F,3k]
};

BodyOutput run_body(const BodyModel& model, ad::Var beta, ad::Var theta);

}  // namespace hmmr::body
