#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <limits>
#include <vector>

#include "hmmr/losses/losses.hpp"

// Pseudo-ground-truth track building from per-frame 2D detections.

namespace hmmr::data {

// Minimum-cost assignment for a rows x cols cost matrix (row-major). Returns
// the column of each row, or -1 for rows left unmatched when rows > cols.
// Every row is matched when rows <= cols.
std::vector<int> hungarian(std::span<const double> cost, std::size_t rows, std::size_t cols);
double assignment_cost(std::span<const double> cost, std::size_t cols, std::span<const int> assignment);

struct Detection {
  losses::Keypoints2D kp;
  double score = 1.0;
};

struct DetectionFrame {
  std::vector<Detection> detections;
};

struct TrackEntry {
  std::size_t frame;
  std::size_t detection;  // index into that frame's detections
};

struct Track {
  std::size_t id = 0;
  std::vector<TrackEntry> entries;  // increasing frame order
};

struct LinkOptions {
  // Largest accepted mean keypoint distance, relative to the diagonal of the
  // track's last bounding box.
  double max_dist = 0.2;
  // Frames a track may go unmatched before it closes.
  std::size_t gap = 5;
};

// Mean distance over keypoints visible in both, or +inf if none are shared.
double detection_distance(const losses::Keypoints2D& a, const losses::Keypoints2D& b);
double bbox_diagonal(const losses::Keypoints2D& kp);

std::vector<Track> link_tracks(const std::vector<DetectionFrame>& frames, const LinkOptions& opts = {});

// Text import, one record per line:
//   frame person x_1 y_1 c_1 ... x_k y_k c_k
// '#' starts a comment. Keypoints with confidence <= min_conf are invisible;
// the detection score is the mean confidence of its visible keypoints.
std::vector<DetectionFrame> read_detections(std::istream& in, std::size_t k, double min_conf = 0.0);
std::vector<DetectionFrame> load_detections(const std::filesystem::path& path, std::size_t k,
                                            double min_conf = 0.0);

}  // namespace hmmr::data
