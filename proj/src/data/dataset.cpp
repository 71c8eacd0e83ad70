#include "hmmr/data/dataset.hpp"

#include <cmath>
#include <string_view>

#include "hmmr/io/sections.hpp"

namespace hmmr::data {

namespace {
constexpr std::string_view kMagic = "HMMRDATA1";
}

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::Full3D: return "full3d";
    case Tier::GT2D: return "gt2d";
    case Tier::Pseudo2D: return "pseudo2d";
  }
  return "?";
}

Tier parse_tier(const std::string& s) {
  if (s == "full3d") return Tier::Full3D;
  if (s == "gt2d") return Tier::GT2D;
  if (s == "pseudo2d") return Tier::Pseudo2D;
  throw DataError("unknown tier '" + s + "' (expected full3d, gt2d or pseudo2d)");
}

std::size_t SequenceSample::visible(std::size_t t) const {
  std::size_t n = 0;
  for (std::size_t q = 0; q < keypoints; ++q) n += vis[t * keypoints + q] != 0;
  return n;
}

std::size_t SequenceSample::n_included() const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < frames; ++t) n += excluded.empty() || !excluded[t];
  return n;
}

body::ThetaFull SequenceSample::theta(std::size_t t) const {
  if (!has_theta()) throw DataError("sequence '" + id + "' has no 3D ground truth");
  return body::ThetaFull::from_raw(std::span(theta_gt).subspan(t * body::kThetaDim, body::kThetaDim));
}

void SequenceSample::validate() const {
  auto fail = [&](const std::string& m) { throw DataError("sequence '" + id + "': " + m); };
  if (!(fps > 0.0) || !std::isfinite(fps)) fail("fps must be positive, got " + std::to_string(fps));
  if (frames == 0) fail("no frames");
  auto want = [&](const char* what, std::size_t have, std::size_t expected) {
    if (have != expected) {
      fail(std::string(what) + " has " + std::to_string(have) + " values, expected " + std::to_string(expected));
    }
  };
  want("features", features.size(), frames * feature_dim);
  want("kp2d", kp2d.size(), frames * keypoints * 2);
  want("vis", vis.size(), frames * keypoints);
  if (!excluded.empty()) want("excluded", excluded.size(), frames);
  if (tier == Tier::Full3D && !has_theta()) fail("tier full3d requires theta_gt on every frame");
  if (has_theta()) want("theta_gt", theta_gt.size(), frames * body::kThetaDim);
  if (has_cam_encoding()) {
    want("cam_basis", cam_basis.size(), feature_dim * 3);
    want("cam_raw", cam_raw.size(), frames * 3);
  } else if (!cam_raw.empty()) {
    fail("cam_raw present without cam_basis");
  }
  for (double v : features)
    if (!std::isfinite(v)) fail("non-finite feature value");
  for (std::size_t i = 0; i < vis.size(); ++i) {
    if (vis[i] && (!std::isfinite(kp2d[2 * i]) || !std::isfinite(kp2d[2 * i + 1]))) {
      fail("non-finite visible keypoint at frame " + std::to_string(i / keypoints));
    }
  }
}

std::size_t filter_frames(SequenceSample& s, std::size_t min_visible) {
  s.excluded.assign(s.frames, 0);
  std::size_t n = 0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    if (s.visible(t) < min_visible) {
      s.excluded[t] = 1;
      ++n;
    }
  }
  return n;
}

std::string serialize_dataset(const std::vector<SequenceSample>& seqs) {
  io::SectionWriter w(kMagic);
  const std::int64_t count = static_cast<std::int64_t>(seqs.size());
  w.i64("count", std::span(&count, 1));
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    s.validate();
    const std::string p = "seq" + std::to_string(i) + ".";
    w.bytes(p + "id", s.id);
    const std::int64_t meta[] = {static_cast<std::int64_t>(s.tier), static_cast<std::int64_t>(s.frames),
                                 static_cast<std::int64_t>(s.feature_dim), static_cast<std::int64_t>(s.keypoints)};
    w.i64(p + "meta", meta);
    w.f64(p + "fps", std::span(&s.fps, 1));
    w.f64(p + "features", s.features);
    w.f64(p + "kp2d", s.kp2d);
    w.bytes(p + "vis", std::string_view(reinterpret_cast<const char*>(s.vis.data()), s.vis.size()));
    if (s.has_theta()) w.f64(p + "theta_gt", s.theta_gt);
    if (!s.excluded.empty()) {
      w.bytes(p + "excluded", std::string_view(reinterpret_cast<const char*>(s.excluded.data()), s.excluded.size()));
    }
    if (s.has_cam_encoding()) {
      w.f64(p + "cam_basis", s.cam_basis);
      w.f64(p + "cam_raw", s.cam_raw);
    }
  }
  return w.finish();
}

std::vector<SequenceSample> deserialize_dataset(std::string image, const std::string& source) {
  io::SectionReader r(std::move(image), kMagic, source);
  const auto& count = r.i64("count");
  if (count.size() != 1 || count[0] < 0) throw io::FormatError(source + ": bad sequence count");
  std::vector<SequenceSample> out(static_cast<std::size_t>(count[0]));
  auto to_bytes = [](const std::string& b) { return std::vector<std::uint8_t>(b.begin(), b.end()); };
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    const std::string p = "seq" + std::to_string(i) + ".";
    s.id = r.bytes(p + "id");
    const auto& meta = r.i64(p + "meta");
    if (meta.size() != 4 || meta[0] < 0 || meta[0] > 2 || meta[1] < 0 || meta[2] < 0 || meta[3] < 0) {
      throw io::FormatError(source + ": section " + p + "meta is malformed");
    }
    s.tier = static_cast<Tier>(meta[0]);
    s.frames = static_cast<std::size_t>(meta[1]);
    s.feature_dim = static_cast<std::size_t>(meta[2]);
    s.keypoints = static_cast<std::size_t>(meta[3]);
    s.fps = r.f64(p + "fps", 1)[0];
    s.features = r.f64(p + "features");
    s.kp2d = r.f64(p + "kp2d");
    s.vis = to_bytes(r.bytes(p + "vis"));
    if (r.has(p + "theta_gt")) s.theta_gt = r.f64(p + "theta_gt");
    if (r.has(p + "excluded")) s.excluded = to_bytes(r.bytes(p + "excluded"));
    if (r.has(p + "cam_basis")) {
      s.cam_basis = r.f64(p + "cam_basis");
      s.cam_raw = r.f64(p + "cam_raw");
    }
    try {
      s.validate();
    } catch (const DataError& e) {
      throw DataError(source + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<SequenceSample>& seqs) {
  const std::string image = serialize_dataset(seqs);
  io::write_image(path, image);
}

std::vector<SequenceSample> load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(io::read_image(path), path.string());
}

}  // namespace hmmr::data
