#include "hmmr/losses/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "hmmr/ad/ops.hpp"

namespace hmmr::losses {

using ad::Tensor;
using ad::Var;

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {{"w_2d", w_2d},       {"w_3d", w_3d},
                                                {"w_adv", w_adv},     {"w_beta", w_beta},
                                                {"w_const", w_const}, {"w_hal", w_hal},
                                                {"w_delta", w_delta}};
  for (const auto& [name, v] : all) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("loss weight ") + name + " must be finite and >= 0, got " +
                                  std::to_string(v));
    }
  }
}

std::size_t Keypoints2D::visible() const {
  std::size_t n = 0;
  for (auto v : vis) n += v != 0;
  return n;
}

std::vector<double> ThetaMask::columns() const {
  std::vector<double> c(body::kThetaDim, 0.0);
  for (std::size_t i = 0; i < body::kThetaDim; ++i) {
    if (i < body::kPoseOffset) c[i] = beta;
    else if (i < body::kCamOffset) c[i] = pose;
    else c[i] = cam;
  }
  return c;
}

Var loss_2d(Var pred_x, std::span<const double> gt, camera::VisMask vis, std::vector<bool>* has_signal) {
  const auto& s = pred_x.shape();
  if (s.size() != 2 || s[1] % 2 != 0) {
    throw ad::ShapeError("loss_2d: prediction " + ad::shape_str(s) + " is not [F,2k]");
  }
  const std::size_t F = s[0], k = s[1] / 2;
  if (gt.size() != F * 2 * k || vis.size() != F * k) {
    throw ad::ShapeError("loss_2d: prediction " + ad::shape_str(s) + " vs " + std::to_string(gt.size()) +
                         " target values and " + std::to_string(vis.size()) + " visibility flags");
  }
  const Tensor P = pred_x.value();
  std::vector<double> out(F, 0.0);
  // per-row weight 1/n_visible, applied to visible coordinates only
  std::vector<double> coef(F * 2 * k, 0.0);
  std::vector<bool> sig(F, false);
  for (std::size_t f = 0; f < F; ++f) {
    std::size_t n = 0;
    for (std::size_t q = 0; q < k; ++q) n += vis[f * k + q] != 0;
    if (n == 0) continue;
    sig[f] = true;
    const double inv = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      if (!vis[f * k + q]) continue;
      for (std::size_t a = 0; a < 2; ++a) {
        const std::size_t i = f * 2 * k + 2 * q + a;
        const double e = P[i] - gt[i];
        acc += e * e;
        coef[i] = inv;
      }
    }
    out[f] = acc * inv;
  }
  if (has_signal) *has_signal = sig;
  std::vector<double> target(gt.begin(), gt.end());
  return pred_x.graph()->record("loss_2d", Tensor({F}, std::move(out)), {pred_x},
                                [F, k, P, target = std::move(target), coef = std::move(coef)](
                                    const ad::BackwardArgs& g) {
                                  if (!g.grad_in[0]) return;
                                  for (std::size_t f = 0; f < F; ++f) {
                                    const double go = 2.0 * g.grad_out[f];
                                    for (std::size_t j = 0; j < 2 * k; ++j) {
                                      const std::size_t i = f * 2 * k + j;
                                      if (coef[i] != 0.0) g.grad_in[0][i] += go * coef[i] * (P[i] - target[i]);
                                    }
                                  }
                                });
}

namespace {

Var masked_mse(const char* op, Var pred, std::span<const double> gt, std::vector<double> cols) {
  const auto& s = pred.shape();
  if (s.size() != 2 || s[1] != cols.size()) {
    throw ad::ShapeError(std::string(op) + ": prediction " + ad::shape_str(s) + ", expected [F," +
                         std::to_string(cols.size()) + "]");
  }
  const std::size_t F = s[0], C = s[1];
  if (gt.size() != F * C) {
    throw ad::ShapeError(std::string(op) + ": prediction " + ad::shape_str(s) + " vs " +
                         std::to_string(gt.size()) + " target values");
  }
  double n = 0.0;
  for (double c : cols) n += c;
  const double inv = n > 0.0 ? 1.0 / n : 0.0;
  const Tensor P = pred.value();
  std::vector<double> out(F, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (cols[c] == 0.0) continue;
      const double e = P[f * C + c] - gt[f * C + c];
      acc += e * e;
    }
    out[f] = acc * inv;
  }
  std::vector<double> target(gt.begin(), gt.end());
  return pred.graph()->record(op, Tensor({F}, std::move(out)), {pred},
                              [F, C, inv, P, target = std::move(target), cols = std::move(cols)](
                                  const ad::BackwardArgs& g) {
                                if (!g.grad_in[0]) return;
                                for (std::size_t f = 0; f < F; ++f) {
                                  const double go = 2.0 * inv * g.grad_out[f];
                                  for (std::size_t c = 0; c < C; ++c) {
                                    if (cols[c] == 0.0) continue;
                                    const std::size_t i = f * C + c;
                                    g.grad_in[0][i] += go * (P[i] - target[i]);
                                  }
                                }
                              });
}

}  // namespace

Var loss_3d(Var pred, std::span<const double> gt, const ThetaMask& mask) {
  return masked_mse("loss_3d", pred, gt, mask.columns());
}

Var loss_3d_pose(Var pred_pose, std::span<const double> gt_pose) {
  return masked_mse("loss_3d_pose", pred_pose, gt_pose, std::vector<double>(body::kPoseDim, 1.0));
}

Var adv_generator_loss(Var scores) {
  Var d = ad::add_scalar(scores, -1.0);
  return ad::row_sum(ad::mul(d, d));
}

Var adv_discriminator_loss(Var real_scores, Var fake_scores) {
  if (real_scores.shape().size() != 2 || fake_scores.shape().size() != 2 ||
      real_scores.shape()[1] != fake_scores.shape()[1]) {
    throw ad::ShapeError("adv_discriminator_loss: real " + ad::shape_str(real_scores.shape()) + " vs fake " +
                         ad::shape_str(fake_scores.shape()));
  }
  Var r = ad::add_scalar(real_scores, -1.0);
  Var real_term = ad::scale(ad::sum(ad::mul(r, r)), 1.0 / static_cast<double>(real_scores.shape()[0]));
  Var fake_term = ad::scale(ad::sum(ad::mul(fake_scores, fake_scores)),
                            1.0 / static_cast<double>(fake_scores.shape()[0]));
  return ad::add(real_term, fake_term);
}

Var beta_prior(Var beta) { return ad::row_sum(ad::mul(beta, beta)); }

ConstShape const_shape_loss(Var betas) {
  const ad::Shape s = betas.shape();
  if (s.size() != 2) throw ad::ShapeError("const_shape_loss: expected [T,10], got " + ad::shape_str(s));
  if (s[0] < 2) return {};
  Var diff = ad::sub(ad::slice(betas, 0, 0, s[0] - 1), ad::slice(betas, 0, 1, s[0]));
  return {ad::sum(ad::row_norm(diff)), true};
}

Var hallucination_loss(Var phi, Var phi_tilde, bool stop_target) {
  Var target = stop_target ? ad::stop_gradient(phi) : phi;
  return ad::row_norm(ad::sub(target, phi_tilde));
}

Var weighted_sum(Var x, std::span<const double> w) {
  if (x.shape().size() != 1 || w.size() != x.shape()[0]) {
    throw ad::ShapeError("weighted_sum: values " + ad::shape_str(x.shape()) + " vs " +
                         std::to_string(w.size()) + " weights");
  }
  Var wv = x.graph()->constant(Tensor({w.size()}, std::vector<double>(w.begin(), w.end())));
  return ad::sum(ad::mul(x, wv));
}

namespace {

std::vector<double> ones_or(std::span<const double> w, std::size_t n, const char* what) {
  if (w.empty()) return std::vector<double>(n, 1.0);
  if (w.size() != n) {
    throw ad::ShapeError(std::string("frame_loss: ") + what + " has " + std::to_string(w.size()) +
                         " entries for " + std::to_string(n) + " frames");
  }
  return {w.begin(), w.end()};
}

}  // namespace

Var frame_loss(const FrameTerms& t, const LossWeights& w, std::span<const double> row_weight,
               std::span<const double> w3) {
  const std::size_t F = t.l2d.shape()[0];
  const auto rw = ones_or(row_weight, F, "row weight");
  std::vector<double> c2(F), ca(F), cb(F);
  for (std::size_t f = 0; f < F; ++f) {
    c2[f] = rw[f] * w.w_2d;
    ca[f] = rw[f] * w.w_adv;
    cb[f] = rw[f] * w.w_beta;
  }
  Var total = weighted_sum(t.l2d, c2);
  total = ad::add(total, weighted_sum(t.adv, ca));
  total = ad::add(total, weighted_sum(t.beta, cb));
  if (t.l3d.valid()) {
    const auto m3 = ones_or(w3, F, "3D weight");
    std::vector<double> c3(F);
    for (std::size_t f = 0; f < F; ++f) c3[f] = rw[f] * m3[f] * w.w_3d;
    total = ad::add(total, weighted_sum(t.l3d, c3));
  }
  return total;
}

Var temporal_objective(Var frames, std::span<const Var> deltas, const ConstShape& cs, const LossWeights& w) {
  Var total = frames;
  for (const Var& d : deltas) total = ad::add(total, ad::scale(d, w.w_delta));
  if (cs.defined) total = ad::add(total, ad::scale(cs.value, w.w_const));
  return total;
}

Var total_objective(Var temporal, Var hal, Var hal_frames, std::span<const Var> hal_deltas,
                    const LossWeights& w) {
  Var total = ad::add(temporal, ad::scale(hal, w.w_hal));
  total = ad::add(total, hal_frames);
  for (const Var& d : hal_deltas) total = ad::add(total, ad::scale(d, w.w_delta));
  return total;
}

// ---- single-frame conveniences ---------------------------------------------

ScalarLoss loss_2d(std::span<const double> pred_x, const Keypoints2D& gt) {
  if (pred_x.size() != gt.points.size() || gt.points.size() != 2 * gt.k()) {
    throw ad::ShapeError("loss_2d: " + std::to_string(pred_x.size()) + " predicted values vs " +
                         std::to_string(gt.points.size()) + " target values for k=" + std::to_string(gt.k()));
  }
  ad::Graph g;
  std::vector<bool> sig;
  Var p = g.constant(Tensor({1, pred_x.size()}, std::vector<double>(pred_x.begin(), pred_x.end())));
  Var l = loss_2d(p, gt.points, gt.vis, &sig);
  return {l.value()[0], sig[0]};
}

double loss_3d(const body::ThetaFull& pred, const body::ThetaFull& gt, const ThetaMask& mask) {
  ad::Graph g;
  const auto a = pred.to_raw(), b = gt.to_raw();
  Var p = g.constant(Tensor({1, body::kThetaDim}, std::vector<double>(a.begin(), a.end())));
  return loss_3d(p, b, mask).value()[0];
}

double beta_prior(const body::ShapeParams& beta) {
  double s = 0.0;
  for (double b : beta.beta) s += b * b;
  return s;
}

ScalarLoss const_shape_loss(std::span<const body::ShapeParams> betas) {
  if (betas.size() < 2) return {0.0, false};
  ad::Graph g;
  std::vector<double> flat;
  for (const auto& b : betas) flat.insert(flat.end(), b.beta.begin(), b.beta.end());
  auto cs = const_shape_loss(g.constant(Tensor({betas.size(), body::kNumBetas}, std::move(flat))));
  return {cs.value.value().item(), true};
}

}  // namespace hmmr::losses
