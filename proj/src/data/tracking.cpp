#include "hmmr/data/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hmmr/data/dataset.hpp"

namespace hmmr::data {

std::vector<int> hungarian(std::span<const double> cost, std::size_t rows, std::size_t cols) {
  if (cost.size() != rows * cols) {
    throw std::invalid_argument("hungarian: " + std::to_string(cost.size()) + " costs for a " +
                                std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
  if (rows == 0) return {};
  // Potentials method on the transposed problem when rows > cols, so the
  // side being assigned is never the larger one.
  const bool flip = rows > cols;
  const std::size_t n = flip ? cols : rows, m = flip ? rows : cols;
  auto a = [&](std::size_t i, std::size_t j) { return flip ? cost[(j - 1) * cols + (i - 1)] : cost[(i - 1) * cols + (j - 1)]; };
  for (double c : cost) {
    if (!std::isfinite(c)) throw std::invalid_argument("hungarian: costs must be finite");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (flip) out[j - 1] = static_cast<int>(p[j] - 1);
    else out[p[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

double assignment_cost(std::span<const double> cost, std::size_t cols, std::span<const int> assignment) {
  double s = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r)
    if (assignment[r] >= 0) s += cost[r * cols + static_cast<std::size_t>(assignment[r])];
  return s;
}

double detection_distance(const losses::Keypoints2D& a, const losses::Keypoints2D& b) {
  double s = 0.0;
  std::size_t n = 0;
  const std::size_t k = std::min(a.k(), b.k());
  for (std::size_t q = 0; q < k; ++q) {
    if (!a.vis[q] || !b.vis[q]) continue;
    s += std::hypot(a.points[2 * q] - b.points[2 * q], a.points[2 * q + 1] - b.points[2 * q + 1]);
    ++n;
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::infinity();
}

double bbox_diagonal(const losses::Keypoints2D& kp) {
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  for (std::size_t q = 0; q < kp.k(); ++q) {
    if (!kp.vis[q]) continue;
    for (int a = 0; a < 2; ++a) {
      lo[a] = std::min(lo[a], kp.points[2 * q + a]);
      hi[a] = std::max(hi[a], kp.points[2 * q + a]);
    }
  }
  if (!(hi[0] >= lo[0])) return 0.0;
  return std::hypot(hi[0] - lo[0], hi[1] - lo[1]);
}

std::vector<Track> link_tracks(const std::vector<DetectionFrame>& frames, const LinkOptions& opts) {
  struct Open {
    std::size_t track;
    std::size_t last_frame;
    const losses::Keypoints2D* last;
  };
  std::vector<Track> tracks;
  std::vector<Open> open;
  // stands in for "no shared keypoints" so the solver sees finite costs
  const double kReject = 1e6;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::erase_if(open, [&](const Open& o) { return f - o.last_frame > opts.gap + 1; });
    const auto& dets = frames[f].detections;
    const std::size_t R = open.size(), C = dets.size();
    std::vector<int> match(R, -1);
    if (R && C) {
      std::vector<double> cost(R * C);
      for (std::size_t r = 0; r < R; ++r) {
        const double diag = std::max(bbox_diagonal(*open[r].last), 1e-12);
        for (std::size_t c = 0; c < C; ++c) {
          const double d = detection_distance(*open[r].last, dets[c].kp) / diag;
          cost[r * C + c] = std::isfinite(d) ? std::min(d, kReject) : kReject;
        }
      }
      match = hungarian(cost, R, C);
      for (std::size_t r = 0; r < R; ++r)
        if (match[r] >= 0 && cost[r * C + static_cast<std::size_t>(match[r])] > opts.max_dist) match[r] = -1;
    }
    std::vector<char> taken(C, 0);
    for (std::size_t r = 0; r < R; ++r) {
      if (match[r] < 0) continue;
      const auto c = static_cast<std::size_t>(match[r]);
      taken[c] = 1;
      tracks[open[r].track].entries.push_back({f, c});
      open[r].last_frame = f;
      open[r].last = &dets[c].kp;
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (taken[c]) continue;
      Track t;
      t.id = tracks.size();
      t.entries.push_back({f, c});
      tracks.push_back(std::move(t));
      open.push_back({tracks.size() - 1, f, &dets[c].kp});
    }
  }
  return tracks;
}

std::vector<DetectionFrame> read_detections(std::istream& in, std::size_t k, double min_conf) {
  std::map<std::size_t, std::map<std::size_t, Detection>> by_frame;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ss(line);
    long long frame = 0, person = 0;
    if (!(ss >> frame)) continue;
    auto fail = [&](const std::string& m) {
      throw DataError("detections line " + std::to_string(lineno) + ": " + m);
    };
    if (!(ss >> person) || frame < 0 || person < 0) fail("expected non-negative frame and person indices");
    Detection d;
    d.kp.points.resize(2 * k);
    d.kp.vis.resize(k);
    double conf_sum = 0.0;
    std::size_t n_vis = 0;
    for (std::size_t q = 0; q < k; ++q) {
      double x, y, c;
      if (!(ss >> x >> y >> c)) fail("expected " + std::to_string(k) + " (x, y, confidence) triples");
      d.kp.points[2 * q] = x;
      d.kp.points[2 * q + 1] = y;
      d.kp.vis[q] = c > min_conf;
      if (d.kp.vis[q]) {
        conf_sum += c;
        ++n_vis;
      }
    }
    std::string extra;
    if (ss >> extra) fail("trailing values");
    d.score = n_vis ? std::clamp(conf_sum / static_cast<double>(n_vis), 0.0, 1.0) : 0.0;
    if (!by_frame[static_cast<std::size_t>(frame)].emplace(static_cast<std::size_t>(person), std::move(d)).second) {
      fail("person " + std::to_string(person) + " repeated in frame " + std::to_string(frame));
    }
  }
  std::vector<DetectionFrame> out(by_frame.empty() ? 0 : by_frame.rbegin()->first + 1);
  for (auto& [f, persons] : by_frame)
    for (auto& [p, d] : persons) out[f].detections.push_back(std::move(d));
  return out;
}

std::vector<DetectionFrame> load_detections(const std::filesystem::path& path, std::size_t k, double min_conf) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_detections(in, k, min_conf);
}

}  // namespace hmmr::data
