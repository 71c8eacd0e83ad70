#include "hmmr/eval/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "hmmr/camera/camera.hpp"

namespace hmmr::eval {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
  else comp_ += (x - t) + sum_;
  sum_ = t;
}

namespace {

void check_pair(const char* fn, std::span<const double> a, std::span<const double> b, std::size_t stride) {
  if (a.size() != b.size() || a.empty() || a.size() % stride != 0) {
    throw std::invalid_argument(std::string(fn) + ": sizes " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " are not matching nonempty multiples of " +
                                std::to_string(stride));
  }
}

double dist3(const double* a, const double* b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

double frame_mpjpe(std::span<const double> pred, std::span<const double> gt, std::size_t root) {
  check_pair("mpjpe", pred, gt, 3);
  const std::size_t k = pred.size() / 3;
  if (root >= k) throw std::invalid_argument("mpjpe: root joint " + std::to_string(root) + " out of range");
  const double* pr = pred.data() + 3 * root;
  const double* gr = gt.data() + 3 * root;
  CompensatedSum s;
  for (std::size_t q = 0; q < k; ++q) {
    double d[3];
    for (int a = 0; a < 3; ++a) d[a] = (pred[3 * q + a] - pr[a]) - (gt[3 * q + a] - gr[a]);
    s.add(std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]));
  }
  return s.value() / static_cast<double>(k);
}

double mpjpe(std::span<const double> pred, std::span<const double> gt, std::size_t k, std::size_t root) {
  check_pair("mpjpe", pred, gt, 3 * k);
  const std::size_t F = pred.size() / (3 * k);
  CompensatedSum s;
  for (std::size_t f = 0; f < F; ++f) s.add(frame_mpjpe(pred.subspan(f * 3 * k, 3 * k), gt.subspan(f * 3 * k, 3 * k), root));
  return kMillimeters * s.value() / static_cast<double>(F);
}

Procrustes procrustes_align(std::span<const double> pred, std::span<const double> gt) {
  check_pair("procrustes_align", pred, gt, 3);
  const std::size_t k = pred.size() / 3;
  if (k < 3) throw std::invalid_argument("procrustes_align: needs at least 3 points, got " + std::to_string(k));
  using M = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
  const Eigen::Map<const M> P(pred.data(), static_cast<Eigen::Index>(k), 3);
  const Eigen::Map<const M> G(gt.data(), static_cast<Eigen::Index>(k), 3);
  const Eigen::RowVector3d mp = P.colwise().mean(), mg = G.colwise().mean();
  const M Pc = P.rowwise() - mp, Gc = G.rowwise() - mg;
  const double n = static_cast<double>(k);
  const double var_p = Pc.squaredNorm() / n;
  if (!(var_p > 0.0)) throw MetricError("procrustes_align: predicted points coincide");
  const Eigen::Matrix3d cov = Gc.transpose() * Pc / n;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  const Eigen::Vector3d d = svd.singularValues();
  Eigen::Vector3d S(1.0, 1.0, 1.0);
  if (U.determinant() * V.determinant() < 0.0) S(2) = -1.0;
  const Eigen::Matrix3d R = U * S.asDiagonal() * V.transpose();
  const double c = d.dot(S) / var_p;
  const Eigen::Vector3d t = mg.transpose() - c * R * mp.transpose();

  Procrustes out;
  out.degenerate = !(d(1) > 1e-12 * std::max(d(0), 1e-300));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.transform.R[3 * i + j] = R(i, j);
    out.transform.t[i] = t(i);
  }
  out.transform.scale = c;
  out.aligned.resize(3 * k);
  CompensatedSum res;
  for (std::size_t q = 0; q < k; ++q) {
    const Eigen::Vector3d a = c * R * P.row(static_cast<Eigen::Index>(q)).transpose() + t;
    for (int i = 0; i < 3; ++i) {
      out.aligned[3 * q + i] = a(i);
      const double e = a(i) - gt[3 * q + i];
      res.add(e * e);
    }
  }
  out.residual = res.value();
  return out;
}

double frame_pa_mpjpe(std::span<const double> pred, std::span<const double> gt) {
  const auto pa = procrustes_align(pred, gt);
  const std::size_t k = pred.size() / 3;
  CompensatedSum s;
  for (std::size_t q = 0; q < k; ++q) s.add(dist3(pa.aligned.data() + 3 * q, gt.data() + 3 * q));
  return s.value() / static_cast<double>(k);
}

double pa_mpjpe(std::span<const double> pred, std::span<const double> gt, std::size_t k) {
  check_pair("pa_mpjpe", pred, gt, 3 * k);
  const std::size_t F = pred.size() / (3 * k);
  CompensatedSum s;
  for (std::size_t f = 0; f < F; ++f) s.add(frame_pa_mpjpe(pred.subspan(f * 3 * k, 3 * k), gt.subspan(f * 3 * k, 3 * k)));
  return kMillimeters * s.value() / static_cast<double>(F);
}

PckCount pck(std::span<const double> pred, std::span<const double> gt, std::span<const std::uint8_t> vis,
             std::size_t k, double alpha) {
  check_pair("pck", pred, gt, 2 * k);
  if (vis.size() * 2 != gt.size()) throw std::invalid_argument("pck: visibility size mismatch");
  if (!(alpha > 0.0)) throw std::invalid_argument("pck: alpha must be positive");
  const std::size_t F = gt.size() / (2 * k);
  PckCount c;
  for (std::size_t f = 0; f < F; ++f) {
    double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
    std::size_t n = 0;
    for (std::size_t q = 0; q < k; ++q) {
      if (!vis[f * k + q]) continue;
      ++n;
      for (int a = 0; a < 2; ++a) {
        lo[a] = std::min(lo[a], gt[f * 2 * k + 2 * q + a]);
        hi[a] = std::max(hi[a], gt[f * 2 * k + 2 * q + a]);
      }
    }
    if (n == 0) continue;
    const double thr = alpha * std::max(hi[0] - lo[0], hi[1] - lo[1]);
    for (std::size_t q = 0; q < k; ++q) {
      if (!vis[f * k + q]) continue;
      const std::size_t i = f * 2 * k + 2 * q;
      ++c.total;
      if (std::hypot(pred[i] - gt[i], pred[i + 1] - gt[i + 1]) <= thr) ++c.correct;
    }
  }
  return c;
}

AccelResult accel_error(std::span<const double> pred, std::span<const double> gt, std::size_t k, double fps,
                        std::span<const std::uint8_t> excluded) {
  if (pred.empty() || pred.size() % (3 * k) != 0 || (!gt.empty() && gt.size() != pred.size())) {
    throw std::invalid_argument("accel_error: trajectory sizes " + std::to_string(pred.size()) + " and " +
                                std::to_string(gt.size()) + " do not match T x " + std::to_string(k) + " x 3");
  }
  if (!(fps > 0.0)) throw std::invalid_argument("accel_error: fps must be positive");
  const std::size_t T = pred.size() / (3 * k);
  if (!excluded.empty() && excluded.size() != T) throw std::invalid_argument("accel_error: mask size mismatch");
  AccelResult r;
  if (T < 3) return r;
  const double f2 = fps * fps;
  CompensatedSum s;
  for (std::size_t t = 1; t + 1 < T; ++t) {
    if (!excluded.empty() && (excluded[t - 1] || excluded[t] || excluded[t + 1])) continue;
    ++r.terms;
    for (std::size_t q = 0; q < k; ++q) {
      double e2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        auto acc = [&](std::span<const double> x) {
          return (x[(t + 1) * 3 * k + 3 * q + a] - 2.0 * x[t * 3 * k + 3 * q + a] + x[(t - 1) * 3 * k + 3 * q + a]) * f2;
        };
        const double e = acc(pred) - (gt.empty() ? 0.0 : acc(gt));
        e2 += e * e;
      }
      s.add(std::sqrt(e2));
    }
  }
  if (r.terms) r.value = kMillimeters * s.value() / static_cast<double>(r.terms * k);
  return r;
}

std::vector<double> keypoints_3d(const body::BodyModel& model, std::span<const double> theta_raw) {
  const std::size_t F = theta_raw.size() / body::kThetaDim;
  std::vector<double> out;
  out.reserve(F * 3 * model.n_keypoints());
  for (std::size_t f = 0; f < F; ++f) {
    const auto th = body::ThetaFull::from_raw(theta_raw.subspan(f * body::kThetaDim, body::kThetaDim));
    const auto X = body::regress_joints(model, body::skin(model, th.shape, th.pose));
    out.insert(out.end(), X.begin(), X.end());
  }
  return out;
}

MeshErrors mesh_errors(const body::BodyModel& model, std::span<const double> pred_theta,
                       std::span<const double> gt_theta) {
  check_pair("mesh_errors", pred_theta, gt_theta, body::kThetaDim);
  const std::size_t F = pred_theta.size() / body::kThetaDim, N = model.n_vertices(), root = model.root_keypoint();
  CompensatedSum posed, unposed;
  for (std::size_t f = 0; f < F; ++f) {
    const auto p = body::ThetaFull::from_raw(pred_theta.subspan(f * body::kThetaDim, body::kThetaDim));
    const auto g = body::ThetaFull::from_raw(gt_theta.subspan(f * body::kThetaDim, body::kThetaDim));
    const auto vp = body::skin(model, p.shape, p.pose), vg = body::skin(model, g.shape, g.pose);
    const auto jp = body::regress_joints(model, vp), jg = body::regress_joints(model, vg);
    CompensatedSum fs;
    for (std::size_t i = 0; i < N; ++i) {
      double d[3];
      for (int a = 0; a < 3; ++a) d[a] = (vp[3 * i + a] - jp[3 * root + a]) - (vg[3 * i + a] - jg[3 * root + a]);
      fs.add(std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]));
    }
    posed.add(fs.value() / static_cast<double>(N));
    const auto up = body::shaped_template(model, p.shape), ug = body::shaped_template(model, g.shape);
    CompensatedSum fu;
    for (std::size_t i = 0; i < N; ++i) fu.add(dist3(up.data() + 3 * i, ug.data() + 3 * i));
    unposed.add(fu.value() / static_cast<double>(N));
  }
  return {kMillimeters * posed.value() / static_cast<double>(F), kMillimeters * unposed.value() / static_cast<double>(F)};
}

}  // namespace hmmr::eval
