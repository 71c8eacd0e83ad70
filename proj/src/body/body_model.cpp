#include "hmmr/body/body_model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "hmmr/ad/ops.hpp"
#include "hmmr/body/body_ops.hpp"
#include "hmmr/io/sections.hpp"

namespace hmmr::body {

std::array<double, kThetaDim> ThetaFull::to_raw() const {
  std::array<double, kThetaDim> raw{};
  std::copy(shape.beta.begin(), shape.beta.end(), raw.begin() + kBetaOffset);
  std::copy(pose.theta.begin(), pose.theta.end(), raw.begin() + kPoseOffset);
  raw[kCamOffset] = std::log(cam.s);
  raw[kCamOffset + 1] = cam.tx;
  raw[kCamOffset + 2] = cam.ty;
  return raw;
}

ThetaFull ThetaFull::from_raw(std::span<const double> raw) {
  if (raw.size() != kThetaDim) {
    throw std::invalid_argument("ThetaFull::from_raw: expected 85 values, got " +
                                std::to_string(raw.size()));
  }
  ThetaFull t;
  std::copy(raw.begin() + kBetaOffset, raw.begin() + kPoseOffset, t.shape.beta.begin());
  std::copy(raw.begin() + kPoseOffset, raw.begin() + kCamOffset, t.pose.theta.begin());
  t.cam = {std::exp(raw[kCamOffset]), raw[kCamOffset + 1], raw[kCamOffset + 2]};
  return t;
}

void validate(const BodyModelData& d) {
  if (d.template_vertices.empty() || d.template_vertices.size() % 3 != 0) {
    throw ModelError("template: element count " + std::to_string(d.template_vertices.size()) +
                     " is not a positive multiple of 3");
  }
  const std::size_t N = d.template_vertices.size() / 3;
  auto expect = [](const char* field, std::size_t got, std::size_t want) {
    if (got != want) {
      throw ModelError(std::string(field) + ": " + std::to_string(got) + " elements, expected " +
                       std::to_string(want));
    }
  };
  expect("shape_dirs", d.shape_dirs.size(), N * 3 * kNumBetas);
  expect("skin_weights", d.skin_weights.size(), N * kNumJoints);
  expect("rest_joints_regressor", d.rest_joint_regressor.size(), kNumJoints * N);
  expect("parents", d.parents.size(), kNumJoints);
  if (d.joint_regressor.empty() || d.joint_regressor.size() % N != 0) {
    throw ModelError("W: element count " + std::to_string(d.joint_regressor.size()) +
                     " is not a positive multiple of N=" + std::to_string(N));
  }
  const std::size_t k = d.joint_regressor.size() / N;
  for (double v : d.template_vertices)
    if (!std::isfinite(v)) throw ModelError("template: non-finite entry");
  for (double v : d.shape_dirs)
    if (!std::isfinite(v)) throw ModelError("shape_dirs: non-finite entry");

  auto check_rows = [](const char* field, const std::vector<double>& m, std::size_t rows,
                       std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = m[r * cols + c];
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw ModelError(std::string(field) + ": row " + std::to_string(r) + " has entry " +
                           std::to_string(v) + " at column " + std::to_string(c) +
                           " (must be finite and nonnegative)");
        }
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        throw ModelError(std::string(field) + ": row " + std::to_string(r) + " sums to " +
                         std::to_string(s) + ", expected 1");
      }
    }
  };
  check_rows("W", d.joint_regressor, k, N);
  check_rows("skin_weights", d.skin_weights, N, kNumJoints);
  check_rows("rest_joints_regressor", d.rest_joint_regressor, kNumJoints, N);

  if (d.parents[0] != -1) throw ModelError("parents: joint 0 must be the root (parent -1)");
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    const auto p = d.parents[j];
    if (p < 0 || p >= static_cast<std::int64_t>(kNumJoints) || p == static_cast<std::int64_t>(j)) {
      throw ModelError("parents: joint " + std::to_string(j) + " has invalid parent " +
                       std::to_string(p));
    }
  }
  // every joint must reach the root without revisiting
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    std::int64_t cur = static_cast<std::int64_t>(j);
    std::size_t steps = 0;
    while (cur != 0) {
      cur = d.parents[cur];
      if (cur < 0 || ++steps > kNumJoints) {
        throw ModelError("parents: joint " + std::to_string(j) + " is on a cycle or detached");
      }
    }
  }
  if (d.root_keypoint < 0 || d.root_keypoint >= static_cast<std::int64_t>(k)) {
    throw ModelError("root_keypoint: " + std::to_string(d.root_keypoint) + " out of range for k=" +
                     std::to_string(k));
  }
}

BodyModel::BodyModel(BodyModelData data) : data_(std::move(data)) {
  validate(data_);
  n_vertices_ = data_.template_vertices.size() / 3;
  n_keypoints_ = data_.joint_regressor.size() / n_vertices_;

  // Parents-first order by depth.
  std::vector<std::size_t> depth(kNumJoints, 0);
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    for (auto cur = data_.parents[j]; cur > 0; cur = data_.parents[cur]) ++depth[j];
    ++depth[j];
  }
  topo_.resize(kNumJoints);
  for (std::size_t j = 0; j < kNumJoints; ++j) topo_[j] = j;
  std::stable_sort(topo_.begin(), topo_.end(),
                   [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });

  const std::size_t N = n_vertices_;
  const auto& Jr = data_.rest_joint_regressor;
  rest_joints_.assign(kPoseDim, 0.0);
  rest_joint_dirs_.assign(kPoseDim * kNumBetas, 0.0);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    for (std::size_t n = 0; n < N; ++n) {
      const double w = Jr[j * N + n];
      if (w == 0.0) continue;
      for (std::size_t a = 0; a < 3; ++a) {
        rest_joints_[3 * j + a] += w * data_.template_vertices[3 * n + a];
        for (std::size_t b = 0; b < kNumBetas; ++b)
          rest_joint_dirs_[(3 * j + a) * kNumBetas + b] += w * data_.shape_dirs[(3 * n + a) * kNumBetas + b];
      }
    }
  }

  influence_begin_.assign(N + 1, 0);
  for (std::size_t i = 0; i < N; ++i) {
    influence_begin_[i] = influence_data_.size();
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double w = data_.skin_weights[i * kNumJoints + j];
      if (w != 0.0) influence_data_.push_back({static_cast<std::uint32_t>(j), w});
    }
  }
  influence_begin_[N] = influence_data_.size();
}

std::span<const SkinInfluence> BodyModel::influences(std::size_t vertex) const {
  return std::span<const SkinInfluence>(influence_data_).subspan(
      influence_begin_[vertex], influence_begin_[vertex + 1] - influence_begin_[vertex]);
}

bool BodyModel::operator==(const BodyModel& o) const {
  return data_.template_vertices == o.data_.template_vertices &&
         data_.shape_dirs == o.data_.shape_dirs && data_.joint_regressor == o.data_.joint_regressor &&
         data_.parents == o.data_.parents && data_.skin_weights == o.data_.skin_weights &&
         data_.rest_joint_regressor == o.data_.rest_joint_regressor &&
         data_.root_keypoint == o.data_.root_keypoint;
}

// Toy humanoid ---------------------------------------------------------------

namespace {

constexpr std::array<std::int64_t, kNumJoints> kParents = {
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

// Rest joints in meters, y up, +x toward the body's left side.
constexpr std::array<std::array<double, 3>, kNumJoints> kRestJoints = {{
    {0.0, 0.0, 0.0},        // pelvis
    {0.09, -0.08, 0.0},     // left hip
    {-0.09, -0.08, 0.0},    // right hip
    {0.0, 0.11, -0.01},     // spine1
    {0.11, -0.47, 0.01},    // left knee
    {-0.11, -0.47, 0.01},   // right knee
    {0.0, 0.24, 0.0},       // spine2
    {0.12, -0.87, -0.03},   // left ankle
    {-0.12, -0.87, -0.03},  // right ankle
    {0.0, 0.30, 0.01},      // spine3
    {0.13, -0.93, 0.10},    // left foot
    {-0.13, -0.93, 0.10},   // right foot
    {0.0, 0.52, -0.01},     // neck
    {0.07, 0.43, 0.0},      // left collar
    {-0.07, 0.43, 0.0},     // right collar
    {0.0, 0.66, 0.03},      // head
    {0.17, 0.45, -0.01},    // left shoulder
    {-0.17, 0.45, -0.01},   // right shoulder
    {0.43, 0.45, -0.02},    // left elbow
    {-0.43, 0.45, -0.02},   // right elbow
    {0.68, 0.45, 0.0},      // left wrist
    {-0.68, 0.45, 0.0},     // right wrist
    {0.77, 0.45, 0.0},      // left hand
    {-0.77, 0.45, 0.0},     // right hand
}};

// Keypoint priority: pelvis first (the root keypoint), then a 14-joint set.
constexpr std::array<std::size_t, kNumJoints> kKeypointJoints = {
    0, 1, 2, 4, 5, 7, 8, 15, 16, 17, 18, 19, 20, 21, 3, 6, 9, 10, 11, 12, 13, 14, 22, 23};

}  // namespace

BodyModel make_toy_model(std::uint64_t seed, std::size_t n_vertices, std::size_t k_keypoints) {
  if (n_vertices < kNumJoints) {
    throw ModelError("make_toy_model: n_vertices " + std::to_string(n_vertices) +
                     " is below the joint count 24");
  }
  if (k_keypoints < 6) {
    throw ModelError("make_toy_model: k_keypoints " + std::to_string(k_keypoints) +
                     " is below the minimum of 6");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Jitter bone lengths so different seeds give different bodies.
  std::array<std::array<double, 3>, kNumJoints> joints{};
  joints[0] = kRestJoints[0];
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    const auto p = static_cast<std::size_t>(kParents[j]);
    const double f = 0.95 + 0.1 * uni(rng);
    for (int a = 0; a < 3; ++a) joints[j][a] = joints[p][a] + f * (kRestJoints[j][a] - kRestJoints[p][a]);
  }
  std::vector<bool> has_child(kNumJoints, false);
  for (std::size_t j = 1; j < kNumJoints; ++j) has_child[kParents[j]] = true;

  // One ring of vertices around every joint, in the plane normal to the bone.
  std::vector<std::size_t> ring_size(kNumJoints, n_vertices / kNumJoints);
  for (std::size_t j = 0; j < n_vertices % kNumJoints; ++j) ++ring_size[j];

  BodyModelData d;
  d.parents.assign(kParents.begin(), kParents.end());
  d.template_vertices.reserve(3 * n_vertices);
  d.skin_weights.assign(n_vertices * kNumJoints, 0.0);
  d.rest_joint_regressor.assign(kNumJoints * n_vertices, 0.0);
  std::vector<std::vector<std::size_t>> ring(kNumJoints);
  std::size_t vid = 0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    Eigen::Vector3d axis(0, 1, 0);
    if (kParents[j] >= 0) {
      const auto& p = joints[kParents[j]];
      axis = Eigen::Vector3d(joints[j][0] - p[0], joints[j][1] - p[1], joints[j][2] - p[2]).normalized();
    }
    Eigen::Vector3d helper = std::abs(axis.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1) : Eigen::Vector3d(1, 0, 0);
    const Eigen::Vector3d u = axis.cross(helper).normalized();
    const Eigen::Vector3d w = axis.cross(u);
    const double radius = 0.03 + 0.04 * uni(rng);
    const double phase = 2.0 * std::numbers::pi * uni(rng);
    const std::size_t m = ring_size[j];
    for (std::size_t q = 0; q < m; ++q) {
      Eigen::Vector3d off = Eigen::Vector3d::Zero();
      if (m > 1) {
        const double ang = phase + 2.0 * std::numbers::pi * static_cast<double>(q) / static_cast<double>(m);
        off = radius * (std::cos(ang) * u + std::sin(ang) * w);
      }
      for (int a = 0; a < 3; ++a) d.template_vertices.push_back(joints[j][a] + off[a]);
      if (kParents[j] < 0 || !has_child[j]) {
        d.skin_weights[vid * kNumJoints + j] = 1.0;
      } else {
        d.skin_weights[vid * kNumJoints + j] = 0.5;
        d.skin_weights[vid * kNumJoints + kParents[j]] = 0.5;
      }
      d.rest_joint_regressor[j * n_vertices + vid] = 1.0 / static_cast<double>(m);
      ring[j].push_back(vid);
      ++vid;
    }
  }

  // Keypoints: uniform over a joint ring, then random convex mixes past 24.
  d.joint_regressor.assign(k_keypoints * n_vertices, 0.0);
  for (std::size_t q = 0; q < k_keypoints; ++q) {
    if (q < kNumJoints) {
      const auto& r = ring[kKeypointJoints[q]];
      for (auto v : r) d.joint_regressor[q * n_vertices + v] = 1.0 / static_cast<double>(r.size());
    } else {
      double total = 0.0;
      std::vector<double> wts(n_vertices);
      for (auto& x : wts) total += (x = uni(rng) < 0.1 ? uni(rng) : 0.0);
      if (total == 0.0) wts[q % n_vertices] = total = 1.0;
      for (std::size_t v = 0; v < n_vertices; ++v) d.joint_regressor[q * n_vertices + v] = wts[v] / total;
    }
  }
  d.root_keypoint = 0;

  // Shape basis: per-joint displacements plus ring dilation, orthonormalized.
  const std::size_t n3 = 3 * n_vertices;
  Eigen::MatrixXd basis(n3, kNumBetas);
  for (std::size_t b = 0; b < kNumBetas; ++b) {
    std::vector<std::array<double, 3>> shift(kNumJoints);
    std::vector<double> dilate(kNumJoints);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      for (auto& s : shift[j]) s = gauss(rng);
      dilate[j] = gauss(rng);
    }
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      for (auto v : ring[j]) {
        for (int a = 0; a < 3; ++a) {
          const double off = d.template_vertices[3 * v + a] - joints[j][a];
          basis(3 * v + a, b) = shift[j][a] + 0.5 * dilate[j] * off / 0.05;
        }
      }
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n3, kNumBetas);
  for (std::size_t b = 0; b < kNumBetas; ++b) {
    // fix sign so the column agrees with the generating direction
    if (Q.col(b).dot(basis.col(b)) < 0) Q.col(b) *= -1.0;
  }
  d.shape_dirs.resize(n3 * kNumBetas);
  for (std::size_t i = 0; i < n3; ++i)
    for (std::size_t b = 0; b < kNumBetas; ++b) d.shape_dirs[i * kNumBetas + b] = Q(i, b);

  return BodyModel(std::move(d));
}

// File format ----------------------------------------------------------------

namespace {
constexpr std::string_view kModelMagic = "HMMRMDL1";
}

std::string serialize_model(const BodyModel& model) {
  const auto& d = model.data();
  io::SectionWriter w(kModelMagic);
  w.f64("template", d.template_vertices);
  w.f64("shape_dirs", d.shape_dirs);
  w.f64("W", d.joint_regressor);
  w.i64("parents", d.parents);
  w.f64("skin_weights", d.skin_weights);
  w.f64("rest_joints_regressor", d.rest_joint_regressor);
  const std::int64_t root[1] = {d.root_keypoint};
  w.i64("root_keypoint", root);
  return w.finish();
}

BodyModel deserialize_model(std::string image, const std::string& source) {
  io::SectionReader r(std::move(image), kModelMagic, source);
  BodyModelData d;
  d.template_vertices = r.f64("template");
  if (d.template_vertices.empty() || d.template_vertices.size() % 3 != 0) {
    throw io::FormatError(source + ": section 'template' has " +
                          std::to_string(d.template_vertices.size()) +
                          " elements, expected a positive multiple of 3");
  }
  const std::size_t N = d.template_vertices.size() / 3;
  d.shape_dirs = r.f64("shape_dirs", N * 3 * kNumBetas);
  d.joint_regressor = r.f64("W");
  d.parents = r.i64("parents");
  d.skin_weights = r.f64("skin_weights", N * kNumJoints);
  d.rest_joint_regressor = r.f64("rest_joints_regressor", kNumJoints * N);
  if (r.has("root_keypoint")) {
    const auto& rk = r.i64("root_keypoint");
    if (rk.size() != 1) throw io::FormatError(source + ": section 'root_keypoint' must hold 1 value");
    d.root_keypoint = rk[0];
  }
  if (r.truncated()) throw io::FormatError(source + ": missing section 'end' (file truncated)");
  try {
    return BodyModel(std::move(d));
  } catch (const ModelError& e) {
    throw ModelError(source + ": " + e.what());
  }
}

void save_model(const BodyModel& model, const std::filesystem::path& path) {
  io::write_image(path, serialize_model(model));
}

BodyModel load_model(const std::filesystem::path& path) {
  return deserialize_model(io::read_image(path), path.string());
}

// Plain evaluation -------------------------------------------------------------

namespace {

struct Inputs {
  ad::Var beta, theta;
};

Inputs bind(ad::Graph& g, const ShapeParams& beta, const PoseParams& theta) {
  return {g.constant(ad::Tensor({1, kNumBetas}, std::vector<double>(beta.beta.begin(), beta.beta.end()))),
          g.constant(ad::Tensor({1, kPoseDim}, std::vector<double>(theta.theta.begin(), theta.theta.end())))};
}

}  // namespace

Mat3 rodrigues(const Vec3& v) {
  ad::Graph g;
  // the batched op wants full 72-wide rows
  std::vector<double> row(kPoseDim, 0.0);
  std::copy(v.begin(), v.end(), row.begin());
  ad::Var R = body::rodrigues(g.constant(ad::Tensor({1, kPoseDim}, std::move(row))));
  Mat3 out;
  std::copy(R.value().ptr(), R.value().ptr() + 9, out.begin());
  return out;
}

Kinematics forward_kinematics(const BodyModel& model, const ShapeParams& beta,
                              const PoseParams& theta) {
  ad::Graph g;
  auto in = bind(g, beta, theta);
  ad::Var rot = body::rodrigues(in.theta);
  ad::Var rest = body::rest_joints(model, in.beta);
  ad::Var world = kinematic_chain(model, rot, rest);
  Kinematics k;
  const double* G = world.value().ptr();
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const double* Gj = G + 12 * j;
    const double* Jr = rest.value().ptr() + 3 * j;
    const double p[3] = {Jr[0] + Gj[9], Jr[1] + Gj[10], Jr[2] + Gj[11]};
    std::array<double, 16> T{Gj[0], Gj[1], Gj[2], p[0], Gj[3], Gj[4], Gj[5], p[1],
                             Gj[6], Gj[7], Gj[8], p[2], 0, 0, 0, 1};
    k.transforms.push_back(T);
    k.joints.insert(k.joints.end(), p, p + 3);
  }
  k.rest_joints = rest.value().to_vector();
  return k;
}

std::vector<double> skin(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta) {
  ad::Graph g;
  auto in = bind(g, beta, theta);
  return run_body(model, in.beta, in.theta).vertices.value().to_vector();
}

std::vector<double> shaped_template(const BodyModel& model, const ShapeParams& beta) {
  ad::Graph g;
  auto in = bind(g, beta, PoseParams{});
  return shape_blend(model, in.beta).value().to_vector();
}

std::vector<double> regress_joints(const BodyModel& model, std::span<const double> vertices) {
  const std::size_t N = model.n_vertices();
  if (vertices.size() != 3 * N) {
    throw ad::ShapeError("regress_joints: " + std::to_string(vertices.size()) +
                         " vertex coordinates, model has N=" + std::to_string(N));
  }
  ad::Graph g;
  ad::Var v = g.constant(ad::Tensor({1, 3 * N}, std::vector<double>(vertices.begin(), vertices.end())));
  return regress_keypoints(model, v).value().to_vector();
}

}  // namespace hmmr::body
