#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmmr/body/body_model.hpp"

namespace hmmr::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Supervision available for a sequence: 3D ground truth, annotated 2D, or
// 2D from an automatic tracker.
enum class Tier : std::uint8_t { Full3D = 0, GT2D = 1, Pseudo2D = 2 };

const char* tier_name(Tier t);
Tier parse_tier(const std::string& s);

inline constexpr std::size_t kMinVisible = 6;

// One video clip. Per-frame arrays are stored flat, frame-major.
struct SequenceSample {
  std::string id;
  double fps = 25.0;
  Tier tier = Tier::Full3D;
  std::size_t frames = 0;
  std::size_t feature_dim = 0;
  std::size_t keypoints = 0;

  std::vector<double> features;     // frames * feature_dim
  std::vector<double> kp2d;         // frames * keypoints * 2, normalized image units
  std::vector<std::uint8_t> vis;    // frames * keypoints
  std::vector<double> theta_gt;     // frames * 85 raw Theta, or empty
  std::vector<std::uint8_t> excluded;  // frames; set by filter_frames

  // Synthetic data only: how the camera enters the features (feature_dim x 3,
  // applied to raw camera (log s, tx, ty)) and the per-frame raw camera.
  // Lets jitter move the features consistently with the keypoints.
  std::vector<double> cam_basis;
  std::vector<double> cam_raw;      // frames * 3

  bool has_theta() const { return !theta_gt.empty(); }
  bool has_cam_encoding() const { return !cam_basis.empty(); }
  std::size_t visible(std::size_t t) const;
  std::size_t n_included() const;
  body::ThetaFull theta(std::size_t t) const;

  // Throws DataError naming the sequence and the violated invariant.
  void validate() const;
};

// Flags frames with fewer than min_visible visible keypoints. Frame indices
// are unchanged. Returns the number of frames flagged.
std::size_t filter_frames(SequenceSample& s, std::size_t min_visible = kMinVisible);

std::string serialize_dataset(const std::vector<SequenceSample>& seqs);
std::vector<SequenceSample> deserialize_dataset(std::string image, const std::string& source = "<memory>");
void save_dataset(const std::filesystem::path& path, const std::vector<SequenceSample>& seqs);
std::vector<SequenceSample> load_dataset(const std::filesystem::path& path);

}  // namespace hmmr::data
