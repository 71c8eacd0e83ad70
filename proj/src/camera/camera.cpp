#include "hmmr/camera/camera.hpp"

#include <cmath>
#include <string>

namespace hmmr::camera {

std::vector<double> project(std::span<const double> joints, const CameraParams& cam) {
  if (joints.size() % 3 != 0) {
    throw std::invalid_argument("project: joint array length " + std::to_string(joints.size()) +
                                " is not a multiple of 3");
  }
  const std::size_t k = joints.size() / 3;
  std::vector<double> out(2 * k);
  for (std::size_t q = 0; q < k; ++q) {
    out[2 * q] = cam.s * joints[3 * q] + cam.tx;
    out[2 * q + 1] = cam.s * joints[3 * q + 1] + cam.ty;
  }
  return out;
}

namespace {

void check_sizes(const char* fn, std::span<const double> x, std::span<const double> y,
                 VisMask vis) {
  if (x.size() != y.size() || x.size() != 2 * vis.size()) {
    throw std::invalid_argument(std::string(fn) + ": sizes " + std::to_string(x.size()) + ", " +
                                std::to_string(y.size()) + ", " + std::to_string(vis.size()) +
                                " are inconsistent (expected 2k, 2k, k)");
  }
}

// Solved camera plus the centered statistics the gradient needs.
struct Solve {
  CameraParams cam;
  double n = 0.0;
  double xbar[2] = {0, 0};
  double denom = 0.0;
};

Solve solve(const double* x, const double* y, const std::uint8_t* vis, std::size_t k) {
  Solve s;
  double ybar[2] = {0, 0};
  for (std::size_t q = 0; q < k; ++q) {
    if (!vis[q]) continue;
    s.n += 1.0;
    for (int a = 0; a < 2; ++a) {
      s.xbar[a] += x[2 * q + a];
      ybar[a] += y[2 * q + a];
    }
  }
  if (s.n < 2.0) {
    throw CameraUnobservable("optimal camera needs at least 2 visible keypoints, got " +
                             std::to_string(static_cast<int>(s.n)));
  }
  for (int a = 0; a < 2; ++a) {
    s.xbar[a] /= s.n;
    ybar[a] /= s.n;
  }
  double num = 0.0;
  for (std::size_t q = 0; q < k; ++q) {
    if (!vis[q]) continue;
    for (int a = 0; a < 2; ++a) {
      const double xc = x[2 * q + a] - s.xbar[a];
      num += xc * (y[2 * q + a] - ybar[a]);
      s.denom += xc * xc;
    }
  }
  if (!(s.denom > 0.0)) {
    throw CameraUnobservable("optimal camera is unobservable: visible projections coincide");
  }
  s.cam.s = num / s.denom;
  s.cam.tx = ybar[0] - s.cam.s * s.xbar[0];
  s.cam.ty = ybar[1] - s.cam.s * s.xbar[1];
  return s;
}

double objective(const double* x, const double* y, const std::uint8_t* vis, std::size_t k,
                 const CameraParams& c) {
  double r = 0.0;
  for (std::size_t q = 0; q < k; ++q) {
    if (!vis[q]) continue;
    const double ex = c.s * x[2 * q] + c.tx - y[2 * q];
    const double ey = c.s * x[2 * q + 1] + c.ty - y[2 * q + 1];
    r += ex * ex + ey * ey;
  }
  return r;
}

}  // namespace

CameraFit optimal_camera(std::span<const double> x_orth, std::span<const double> x_gt,
                         VisMask vis) {
  check_sizes("optimal_camera", x_orth, x_gt, vis);
  const Solve s = solve(x_orth.data(), x_gt.data(), vis.data(), vis.size());
  CameraFit fit;
  fit.cam = s.cam;
  fit.residual = objective(x_orth.data(), x_gt.data(), vis.data(), vis.size(), s.cam);
  fit.nonpositive_scale = s.cam.s <= 0.0;
  return fit;
}

double camera_objective(std::span<const double> x_orth, std::span<const double> x_gt,
                        VisMask vis, const CameraParams& cam) {
  check_sizes("camera_objective", x_orth, x_gt, vis);
  return objective(x_orth.data(), x_gt.data(), vis.data(), vis.size(), cam);
}

ad::Var project(ad::Var joints, ad::Var scale, ad::Var trans) {
  const auto& js = joints.shape();
  if (js.size() != 2 || js[1] % 3 != 0 || scale.shape() != ad::Shape{js[0], 1} ||
      trans.shape() != ad::Shape{js[0], 2}) {
    throw ad::ShapeError("project: joints " + ad::shape_str(js) + ", scale " +
                         ad::shape_str(scale.shape()) + ", trans " + ad::shape_str(trans.shape()) +
                         " (expected [F,3k], [F,1], [F,2])");
  }
  const std::size_t F = js[0], k = js[1] / 3;
  const ad::Tensor X = joints.value(), S = scale.value(), T = trans.value();
  std::vector<double> out(F * 2 * k);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t q = 0; q < k; ++q) {
      for (std::size_t a = 0; a < 2; ++a)
        out[f * 2 * k + 2 * q + a] = S[f] * X[f * 3 * k + 3 * q + a] + T[2 * f + a];
    }
  }
  return joints.graph()->record(
      "project", ad::Tensor({F, 2 * k}, std::move(out)), {joints, scale, trans},
      [F, k, X, S](const ad::BackwardArgs& g) {
        const double* go = g.grad_out.data();
        double* gx = g.grad_in[0];
        double* gs = g.grad_in[1];
        double* gt = g.grad_in[2];
        for (std::size_t f = 0; f < F; ++f) {
          for (std::size_t q = 0; q < k; ++q) {
            for (std::size_t a = 0; a < 2; ++a) {
              const double d = go[f * 2 * k + 2 * q + a];
              if (gx) gx[f * 3 * k + 3 * q + a] += d * S[f];
              if (gs) gs[f] += d * X[f * 3 * k + 3 * q + a];
              if (gt) gt[2 * f + a] += d;
            }
          }
        }
      });
}

ad::Var optimal_camera_residual(ad::Var x_orth, std::span<const double> gt,
                                VisMask vis, CameraGradient mode,
                                std::vector<bool>* observable) {
  const auto& xs = x_orth.shape();
  if (xs.size() != 2 || xs[1] % 2 != 0) {
    throw ad::ShapeError("optimal_camera_residual: x_orth " + ad::shape_str(xs) +
                         " (expected [F,2k])");
  }
  const std::size_t F = xs[0], k = xs[1] / 2;
  if (gt.size() != F * 2 * k || vis.size() != F * k) {
    throw ad::ShapeError("optimal_camera_residual: gt has " + std::to_string(gt.size()) +
                         " values and vis " + std::to_string(vis.size()) + ", expected " +
                         std::to_string(F * 2 * k) + " and " + std::to_string(F * k));
  }
  const ad::Tensor X = x_orth.value();
  std::vector<double> y(gt.begin(), gt.end());
  std::vector<std::uint8_t> v(vis.begin(), vis.end());
  std::vector<Solve> solves(F);
  std::vector<bool> ok(F, false);
  std::vector<double> out(F, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double* xf = X.ptr() + f * 2 * k;
    const std::uint8_t* vf = vis.data() + f * k;
    try {
      solves[f] = solve(xf, y.data() + f * 2 * k, vf, k);
      ok[f] = true;
      out[f] = objective(xf, y.data() + f * 2 * k, vf, k, solves[f].cam) / solves[f].n;
    } catch (const CameraUnobservable&) {
      ok[f] = false;
    }
  }
  if (observable) *observable = ok;

  return x_orth.graph()->record(
      mode == CameraGradient::Full ? "optimal_camera_residual" : "optimal_camera_residual_fixed",
      ad::Tensor({F}, std::move(out)), {x_orth},
      [F, k, X, y = std::move(y), v = std::move(v), solves = std::move(solves), ok,
       mode](const ad::BackwardArgs& g) {
        double* gx = g.grad_in[0];
        if (!gx) return;
        std::vector<double> r(2 * k);
        for (std::size_t f = 0; f < F; ++f) {
          if (!ok[f]) continue;
          const Solve& sv = solves[f];
          const double* xf = X.ptr() + f * 2 * k;
          const double* yf = y.data() + f * 2 * k;
          const std::uint8_t* vf = v.data() + f * k;
          const double w = g.grad_out[f] / sv.n;
          const double s = sv.cam.s, t[2] = {sv.cam.tx, sv.cam.ty};
          // residuals and the partials of the objective in s and t
          double dR_ds = 0.0, dR_dt[2] = {0, 0};
          for (std::size_t q = 0; q < k; ++q) {
            for (int a = 0; a < 2; ++a) {
              r[2 * q + a] = vf[q] ? s * xf[2 * q + a] + t[a] - yf[2 * q + a] : 0.0;
              dR_ds += 2.0 * r[2 * q + a] * xf[2 * q + a];
              dR_dt[a] += 2.0 * r[2 * q + a];
            }
          }
          double ybar[2] = {0, 0};
          for (std::size_t q = 0; q < k; ++q) {
            if (!vf[q]) continue;
            ybar[0] += yf[2 * q];
            ybar[1] += yf[2 * q + 1];
          }
          ybar[0] /= sv.n;
          ybar[1] /= sv.n;
          double* gf = gx + f * 2 * k;
          for (std::size_t q = 0; q < k; ++q) {
            if (!vf[q]) continue;
            for (int b = 0; b < 2; ++b) {
              double d = 2.0 * s * r[2 * q + b];
              if (mode == CameraGradient::Full) {
                const double xc = xf[2 * q + b] - sv.xbar[b];
                const double yc = yf[2 * q + b] - ybar[b];
                const double ds = (yc - 2.0 * s * xc) / sv.denom;
                d += dR_ds * ds;
                for (int a = 0; a < 2; ++a) {
                  const double dt = (a == b ? -s / sv.n : 0.0) - sv.xbar[a] * ds;
                  d += dR_dt[a] * dt;
                }
              }
              gf[2 * q + b] += w * d;
            }
          }
        }
      });
}

}  // namespace hmmr::camera
