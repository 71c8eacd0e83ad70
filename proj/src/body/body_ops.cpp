#include "hmmr/body/body_ops.hpp"

#include <cmath>

#include "hmmr/ad/ops.hpp"

namespace hmmr::body {
namespace {

using ad::BackwardArgs;
using ad::Tensor;
using ad::Var;

void require_cols(const char* op, Var v, std::size_t cols) {
  if (v.shape().size() != 2 || v.shape()[1] != cols) {
    throw ad::ShapeError(std::string(op) + ": expected [F," + std::to_string(cols) + "], got " +
                         ad::shape_str(v.shape()));
  }
}

void require_rows(const char* op, Var a, Var b) {
  if (a.shape()[0] != b.shape()[0]) {
    throw ad::ShapeError(std::string(op) + ": row count mismatch " + ad::shape_str(a.shape()) +
                         " vs " + ad::shape_str(b.shape()));
  }
}

// sin(t)/t, (1-cos t)/t^2 and their derivatives divided by t.
struct RodCoeffs {
  double a, b, c, d;
};

RodCoeffs rod_coeffs(double t2) {
  const double t = std::sqrt(t2);
  if (t < 1e-3) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0, -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0};
  }
  const double s = std::sin(t), c = std::cos(t);
  const double half = std::sin(0.5 * t);
  const double omc = 2.0 * half * half;  // 1 - cos t without cancellation
  return {s / t, omc / t2, (t * c - s) / (t2 * t), (t * s - 2.0 * omc) / (t2 * t2)};
}

// K = [v]x ; R = I + a K + b K^2
void rod_forward(const double* v, double* R) {
  const double x = v[0], y = v[1], z = v[2];
  const RodCoeffs k = rod_coeffs(x * x + y * y + z * z);
  const double K[9] = {0, -z, y, z, 0, -x, -y, x, 0};
  double K2[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int p = 0; p < 3; ++p) s += K[i * 3 + p] * K[p * 3 + j];
      K2[i * 3 + j] = s;
    }
  for (int i = 0; i < 9; ++i) R[i] = k.a * K[i] + k.b * K2[i];
  R[0] += 1.0;
  R[4] += 1.0;
  R[8] += 1.0;
}

void rod_backward(const double* v, const double* gR, double* gv) {
  const double x = v[0], y = v[1], z = v[2];
  const RodCoeffs k = rod_coeffs(x * x + y * y + z * z);
  const double K[9] = {0, -z, y, z, 0, -x, -y, x, 0};
  double K2[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int p = 0; p < 3; ++p) s += K[i * 3 + p] * K[p * 3 + j];
      K2[i * 3 + j] = s;
    }
  // <gR, K> and <gR, K^2> are shared across the three coordinates.
  double gK = 0, gK2 = 0;
  for (int i = 0; i < 9; ++i) {
    gK += gR[i] * K[i];
    gK2 += gR[i] * K2[i];
  }
  for (int c = 0; c < 3; ++c) {
    double E[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    if (c == 0) { E[5] = -1; E[7] = 1; }
    if (c == 1) { E[2] = 1; E[6] = -1; }
    if (c == 2) { E[1] = -1; E[3] = 1; }
    double gE = 0, gSym = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double ek = 0;
        for (int p = 0; p < 3; ++p) ek += E[i * 3 + p] * K[p * 3 + j] + K[i * 3 + p] * E[p * 3 + j];
        gE += gR[i * 3 + j] * E[i * 3 + j];
        gSym += gR[i * 3 + j] * ek;
      }
    gv[c] += k.c * v[c] * gK + k.a * gE + k.d * v[c] * gK2 + k.b * gSym;
  }
}

// 3x3 helpers, row-major.
inline void matmul3(const double* A, const double* B, double* C) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      C[i * 3 + j] = A[i * 3] * B[j] + A[i * 3 + 1] * B[3 + j] + A[i * 3 + 2] * B[6 + j];
}
inline void matvec3(const double* A, const double* x, double* y) {
  for (int i = 0; i < 3; ++i) y[i] = A[i * 3] * x[0] + A[i * 3 + 1] * x[1] + A[i * 3 + 2] * x[2];
}
inline void matTvec3(const double* A, const double* x, double* y) {
  for (int i = 0; i < 3; ++i) y[i] = A[i] * x[0] + A[3 + i] * x[1] + A[6 + i] * x[2];
}

}  // namespace

Var rodrigues(Var theta) {
  require_cols("rodrigues", theta, kPoseDim);
  const std::size_t F = theta.shape()[0];
  std::vector<double> out(F * kNumJoints * 9);
  const Tensor tv = theta.value();
  for (std::size_t r = 0; r < F * kNumJoints; ++r) rod_forward(tv.ptr() + 3 * r, out.data() + 9 * r);
  return theta.graph()->record("rodrigues", Tensor({F, kNumJoints * 9}, std::move(out)), {theta},
                               [F, tv](const BackwardArgs& g) {
                                 for (std::size_t r = 0; r < F * kNumJoints; ++r)
                                   rod_backward(tv.ptr() + 3 * r, g.grad_out.data() + 9 * r,
                                                g.grad_in[0] + 3 * r);
                               });
}

Var shape_blend(const BodyModel& model, Var beta) {
  require_cols("shape_blend", beta, kNumBetas);
  const std::size_t n3 = 3 * model.n_vertices();
  const auto& sd = model.data().shape_dirs;
  std::vector<double> dirs_t(kNumBetas * n3);
  for (std::size_t i = 0; i < n3; ++i)
    for (std::size_t b = 0; b < kNumBetas; ++b) dirs_t[b * n3 + i] = sd[i * kNumBetas + b];
  ad::Graph& g = *beta.graph();
  Var dirs = g.constant(Tensor({kNumBetas, n3}, std::move(dirs_t)));
  Var tmpl = g.constant(Tensor({n3}, model.data().template_vertices));
  return ad::add_row_bias(ad::matmul(beta, dirs), tmpl);
}

Var rest_joints(const BodyModel& model, Var beta) {
  require_cols("rest_joints", beta, kNumBetas);
  const auto jd = model.rest_joint_dirs();
  std::vector<double> dirs_t(kNumBetas * kPoseDim);
  for (std::size_t i = 0; i < kPoseDim; ++i)
    for (std::size_t b = 0; b < kNumBetas; ++b) dirs_t[b * kPoseDim + i] = jd[i * kNumBetas + b];
  ad::Graph& g = *beta.graph();
  Var dirs = g.constant(Tensor({kNumBetas, kPoseDim}, std::move(dirs_t)));
  const auto jt = model.rest_joints_template();
  Var base = g.constant(Tensor({kPoseDim}, std::vector<double>(jt.begin(), jt.end())));
  return ad::add_row_bias(ad::matmul(beta, dirs), base);
}

// Translations are carried as displacements u_j = Gt_j - J_j of each joint
// from its rest position: u_j = u_p + (Gr_p - I)(J_j - J_p). Mathematically
// the same chain, but identity rotations give u = 0 exactly, so the rest pose
// reproduces the rest joints and template without rounding.
Var kinematic_chain(const BodyModel& model, Var rotations, Var joints) {
  require_cols("kinematic_chain", rotations, kNumJoints * 9);
  require_cols("kinematic_chain", joints, kPoseDim);
  require_rows("kinematic_chain", rotations, joints);
  const std::size_t F = rotations.shape()[0];
  const std::vector<std::size_t> order(model.topo_order().begin(), model.topo_order().end());
  const std::vector<std::int64_t> parents(model.parents().begin(), model.parents().end());
  const Tensor Rv = rotations.value(), Jv = joints.value();

  constexpr std::size_t W = 12;
  std::vector<double> out(F * kNumJoints * W, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double* R = Rv.ptr() + f * kNumJoints * 9;
    const double* J = Jv.ptr() + f * kPoseDim;
    double* G = out.data() + f * kNumJoints * W;
    for (std::size_t j : order) {
      double* Gj = G + j * W;
      const std::int64_t p = parents[j];
      if (p < 0) {
        std::copy(R + 9 * j, R + 9 * j + 9, Gj);
        continue;
      }
      const double* Gp = G + p * W;
      matmul3(Gp, R + 9 * j, Gj);
      const double d[3] = {J[3 * j] - J[3 * p], J[3 * j + 1] - J[3 * p + 1], J[3 * j + 2] - J[3 * p + 2]};
      for (int a = 0; a < 3; ++a) {
        double acc = 0.0;
        for (int b = 0; b < 3; ++b) acc += (Gp[a * 3 + b] - (a == b ? 1.0 : 0.0)) * d[b];
        Gj[9 + a] = Gp[9 + a] + acc;
      }
    }
  }
  Tensor Gv({F, kNumJoints * W}, std::move(out));
  return rotations.graph()->record(
      "kinematic_chain", Gv, {rotations, joints},
      [F, order, parents, Rv, Jv, Gv](const BackwardArgs& g) {
        std::vector<double> dG(kNumJoints * W);
        for (std::size_t f = 0; f < F; ++f) {
          const double* R = Rv.ptr() + f * kNumJoints * 9;
          const double* J = Jv.ptr() + f * kPoseDim;
          const double* G = Gv.ptr() + f * kNumJoints * W;
          std::copy(g.grad_out.data() + f * kNumJoints * W, g.grad_out.data() + (f + 1) * kNumJoints * W,
                    dG.begin());
          double* dR = g.grad_in[0] ? g.grad_in[0] + f * kNumJoints * 9 : nullptr;
          double* dJ = g.grad_in[1] ? g.grad_in[1] + f * kPoseDim : nullptr;
          for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const std::size_t j = *it;
            double* dGj = dG.data() + j * W;
            const std::int64_t p = parents[j];
            if (p < 0) {
              if (dR) for (int i = 0; i < 9; ++i) dR[9 * j + i] += dGj[i];
              continue;
            }
            const double* Gp = G + p * W;
            double* dGp = dG.data() + p * W;
            const double* Rj = R + 9 * j;
            // Gr_j = Gr_p R_j
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) {
                double sR = 0, sP = 0;
                for (int c = 0; c < 3; ++c) {
                  sR += Gp[c * 3 + a] * dGj[c * 3 + b];  // (Gr_p^T dGr_j)_ab
                  sP += dGj[a * 3 + c] * Rj[b * 3 + c];  // (dGr_j R_j^T)_ab
                }
                if (dR) dR[9 * j + a * 3 + b] += sR;
                dGp[a * 3 + b] += sP;
              }
            // u_j = u_p + (Gr_p - I)(J_j - J_p)
            const double* du = dGj + 9;
            const double d[3] = {J[3 * j] - J[3 * p], J[3 * j + 1] - J[3 * p + 1], J[3 * j + 2] - J[3 * p + 2]};
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) dGp[a * 3 + b] += du[a] * d[b];
            if (dJ) {
              double q[3];
              matTvec3(Gp, du, q);
              for (int a = 0; a < 3; ++a) {
                const double dd = q[a] - du[a];
                dJ[3 * j + a] += dd;
                dJ[3 * p + a] -= dd;
              }
            }
            for (int a = 0; a < 3; ++a) dGp[9 + a] += du[a];
          }
        }
      });
}

// v' = v + sum_j w_j [(Gr_j - I)(v - J_j) + u_j], which equals the usual
// sum_j w_j (Gr_j (v - J_j) + Gt_j) for rows of weights summing to one.
Var blend_skin(const BodyModel& model, Var shaped, Var joints, Var world) {
  const std::size_t N = model.n_vertices();
  require_cols("blend_skin", shaped, 3 * N);
  require_cols("blend_skin", joints, kPoseDim);
  require_cols("blend_skin", world, kNumJoints * 12);
  require_rows("blend_skin", shaped, joints);
  require_rows("blend_skin", shaped, world);
  const std::size_t F = shaped.shape()[0];
  const Tensor Vv = shaped.value(), Jv = joints.value(), Gv = world.value();
  std::vector<double> out(F * 3 * N, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double* V = Vv.ptr() + f * 3 * N;
    const double* J = Jv.ptr() + f * kPoseDim;
    const double* G = Gv.ptr() + f * kNumJoints * 12;
    double* O = out.data() + f * 3 * N;
    for (std::size_t i = 0; i < N; ++i) {
      double disp[3] = {0, 0, 0};
      for (const auto& inf : model.influences(i)) {
        const double* Gj = G + inf.joint * 12;
        const double d[3] = {V[3 * i] - J[3 * inf.joint], V[3 * i + 1] - J[3 * inf.joint + 1],
                             V[3 * i + 2] - J[3 * inf.joint + 2]};
        for (int a = 0; a < 3; ++a) {
          double acc = Gj[9 + a];
          for (int b = 0; b < 3; ++b) acc += (Gj[a * 3 + b] - (a == b ? 1.0 : 0.0)) * d[b];
          disp[a] += inf.weight * acc;
        }
      }
      for (int a = 0; a < 3; ++a) O[3 * i + a] = V[3 * i + a] + disp[a];
    }
  }
  const BodyModel* mp = &model;
  return shaped.graph()->record(
      "blend_skin", Tensor({F, 3 * N}, std::move(out)), {shaped, joints, world},
      [F, N, mp, Vv, Jv, Gv](const BackwardArgs& g) {
        for (std::size_t f = 0; f < F; ++f) {
          const double* V = Vv.ptr() + f * 3 * N;
          const double* J = Jv.ptr() + f * kPoseDim;
          const double* G = Gv.ptr() + f * kNumJoints * 12;
          const double* go = g.grad_out.data() + f * 3 * N;
          double* dV = g.grad_in[0] ? g.grad_in[0] + f * 3 * N : nullptr;
          double* dJ = g.grad_in[1] ? g.grad_in[1] + f * kPoseDim : nullptr;
          double* dG = g.grad_in[2] ? g.grad_in[2] + f * kNumJoints * 12 : nullptr;
          for (std::size_t i = 0; i < N; ++i) {
            if (dV) for (int a = 0; a < 3; ++a) dV[3 * i + a] += go[3 * i + a];
            for (const auto& inf : mp->influences(i)) {
              const std::size_t j = inf.joint;
              const double w = inf.weight;
              const double* Gj = G + j * 12;
              const double gw[3] = {w * go[3 * i], w * go[3 * i + 1], w * go[3 * i + 2]};
              if (dG) {
                const double d[3] = {V[3 * i] - J[3 * j], V[3 * i + 1] - J[3 * j + 1], V[3 * i + 2] - J[3 * j + 2]};
                for (int a = 0; a < 3; ++a) {
                  for (int b = 0; b < 3; ++b) dG[j * 12 + a * 3 + b] += gw[a] * d[b];
                  dG[j * 12 + 9 + a] += gw[a];
                }
              }
              if (dV || dJ) {
                double q[3];
                matTvec3(Gj, gw, q);
                for (int a = 0; a < 3; ++a) {
                  const double dd = q[a] - gw[a];
                  if (dV) dV[3 * i + a] += dd;
                  if (dJ) dJ[3 * j + a] -= dd;
                }
              }
            }
          }
        }
      });
}

Var regress_keypoints(const BodyModel& model, Var vertices) {
  const std::size_t N = model.n_vertices(), k = model.n_keypoints();
  require_cols("regress_keypoints", vertices, 3 * N);
  const auto& W = model.data().joint_regressor;
  // (W kron I3)^T so that rows of vertices map to rows of keypoints.
  std::vector<double> kron(3 * N * 3 * k, 0.0);
  for (std::size_t q = 0; q < k; ++q)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t a = 0; a < 3; ++a) kron[(3 * n + a) * 3 * k + 3 * q + a] = W[q * N + n];
  Var m = vertices.graph()->constant(Tensor({3 * N, 3 * k}, std::move(kron)));
  return ad::matmul(vertices, m);
}

BodyOutput run_body(const BodyModel& model, Var beta, Var theta) {
  require_rows("run_body", beta, theta);
  Var rot = rodrigues(theta);
  Var shaped = shape_blend(model, beta);
  Var rest = rest_joints(model, beta);
  Var world = kinematic_chain(model, rot, rest);
  Var verts = blend_skin(model, shaped, rest, world);
  return {rot, verts, regress_keypoints(model, verts)};
}

}  // namespace hmmr::body
