#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmmr/camera/camera.hpp"

namespace hmmr::body {

inline constexpr std::size_t kNumJoints = 24;
inline constexpr std::size_t kNumBetas = 10;
inline constexpr std::size_t kPoseDim = 3 * kNumJoints;
inline constexpr std::size_t kCamDim = 3;
inline constexpr std::size_t kThetaDim = kNumBetas + kPoseDim + kCamDim;  // 85

// Offsets into the flat 85-vector [beta | theta | cam].
inline constexpr std::size_t kBetaOffset = 0;
inline constexpr std::size_t kPoseOffset = kNumBetas;
inline constexpr std::size_t kCamOffset = kNumBetas + kPoseDim;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ShapeParams {
  std::array<double, kNumBetas> beta{};
};

// 24 axis-angle vectors: global rotation first, then the 23 relative ones.
struct PoseParams {
  std::array<double, kPoseDim> theta{};
};

struct ThetaFull {
  ShapeParams shape;
  PoseParams pose;
  camera::CameraParams cam;

  // Network space stores the camera as (log s, tx, ty).
  std::array<double, kThetaDim> to_raw() const;
  static ThetaFull from_raw(std::span<const double> raw);
};

// Raw arrays of the body model, as stored on disk.
struct BodyModelData {
  std::vector<double> template_vertices;      // N*3
  std::vector<double> shape_dirs;             // N*3*10, [(i*3 + axis)*10 + b]
  std::vector<double> joint_regressor;        // k*N
  std::vector<std::int64_t> parents;          // 24, parents[0] = -1
  std::vector<double> skin_weights;           // N*24
  std::vector<double> rest_joint_regressor;   // 24*N
  std::int64_t root_keypoint = 0;
};

struct SkinInfluence {
  std::uint32_t joint;
  double weight;
};

// Immutable after construction; construction validates every invariant.
class BodyModel {
 public:
  explicit BodyModel(BodyModelData data);

  const BodyModelData& data() const { return data_; }
  std::size_t n_vertices() const { return n_vertices_; }
  std::size_t n_keypoints() const { return n_keypoints_; }
  std::size_t root_keypoint() const { return static_cast<std::size_t>(data_.root_keypoint); }
  std::span<const std::int64_t> parents() const { return data_.parents; }
  // Joints ordered so every parent precedes its children.
  std::span<const std::size_t> topo_order() const { return topo_; }

  // Rest joints for zero shape (72) and their shape derivative (72 x 10).
  std::span<const double> rest_joints_template() const { return rest_joints_; }
  std::span<const double> rest_joint_dirs() const { return rest_joint_dirs_; }
  std::span<const SkinInfluence> influences(std::size_t vertex) const;

  bool operator==(const BodyModel& o) const;

 private:
  BodyModelData data_;
  std::size_t n_vertices_ = 0;
  std::size_t n_keypoints_ = 0;
  std::vector<std::size_t> topo_;
  std::vector<double> rest_joints_;
  std::vector<double> rest_joint_dirs_;
  std::vector<SkinInfluence> influence_data_;
  std::vector<std::size_t> influence_begin_;
};

// Checks sizes, row sums of W and skin_weights (1e-9) and the kinematic tree.
void validate(const BodyModelData& data);

// Deterministic humanoid stand-in with the 24-joint tree
// (pelvis, spine x3, neck, head, legs and arms).
BodyModel make_toy_model(std::uint64_t seed, std::size_t n_vertices = 120,
                         std::size_t k_keypoints = 14);

void save_model(const BodyModel& model, const std::filesystem::path& path);
BodyModel load_model(const std::filesystem::path& path);
std::string serialize_model(const BodyModel& model);
BodyModel deserialize_model(std::string image, const std::string& source = "<memory>");

// Plain evaluation ----------------------------------------------------------

using Mat3 = std::array<double, 9>;
using Vec3 = std::array<double, 3>;

Mat3 rodrigues(const Vec3& axis_angle);

struct Kinematics {
  // Row-major 4x4 world transform per joint.
  std::vector<std::array<double, 16>> transforms;
  std::vector<double> joints;  // 24*3 posed joint positions
  std::vector<double> rest_joints;
};

Kinematics forward_kinematics(const BodyModel& model, const ShapeParams& beta,
                              const PoseParams& theta);
std::vector<double> skin(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta);
std::vector<double> regress_joints(const BodyModel& model, std::span<const double> vertices);
std::vector<double> shaped_template(const BodyModel& model, const ShapeParams& beta);

}  // namespace hmmr::body
