#include "hmmr/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hmmr/ad/ops.hpp"
#include "hmmr/body/body_ops.hpp"
#include "hmmr/io/sections.hpp"
#include "hmmr/train/config.hpp"

namespace hmmr::train {

using ad::Tensor;
using ad::Var;
using data::SequenceSample;

namespace {

constexpr char kMagic[] = "HMMRCKPT1";
constexpr std::size_t kB = body::kNumBetas, kP = body::kPoseDim, kTh = body::kThetaDim;

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void TrainConfig::validate(const nets::EncoderConfig& enc) const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  enc.validate();
  weights.validate();
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (seq_len < enc.receptive_field()) {
    fail("seq_len=" + std::to_string(seq_len) + " is shorter than the receptive field " +
         std::to_string(enc.receptive_field()));
  }
  for (double v : {lr, disc_lr})
    if (!(v >= 0.0) || !std::isfinite(v)) fail("learning rates must be finite and >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(jitter_scale >= 0.0 && jitter_scale < 1.0)) fail("jitter_scale must be in [0, 1)");
  if (!(jitter_translation >= 0.0) || !std::isfinite(jitter_translation)) fail("jitter_translation must be >= 0");
  double sum = 0.0;
  for (double r : tier_ratio) {
    if (!(r >= 0.0) || !std::isfinite(r)) fail("tier_ratio entries must be finite and >= 0");
    sum += r;
  }
  if (!(sum > 0.0)) fail("tier_ratio must have a positive entry");
}

// ---- Adam ------------------------------------------------------------------

Adam::Adam(const ad::ParameterSet& ps, AdamOptions opts) : options(opts) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    m.push_back(Tensor::zeros(ps.value(i).shape()));
    v.push_back(Tensor::zeros(ps.value(i).shape()));
  }
}

void Adam::step(ad::ParameterSet& ps, const std::vector<Tensor>& grads) {
  if (grads.size() != ps.size() || m.size() != ps.size()) throw std::logic_error("Adam: parameter count changed");
  ++t;
  const double b1 = options.beta1, b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& p = ps.value(i);
    if (grads[i].shape() != p.shape()) throw std::logic_error("Adam: gradient shape mismatch for " + ps.name(i));
    std::vector<double> pd = p.to_vector(), md = m[i].to_vector(), vd = v[i].to_vector();
    const auto gd = grads[i].data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      md[j] = b1 * md[j] + (1.0 - b1) * gd[j];
      vd[j] = b2 * vd[j] + (1.0 - b2) * gd[j] * gd[j];
      pd[j] -= options.lr * (md[j] / c1) / (std::sqrt(vd[j] / c2) + options.eps);
    }
    const ad::Shape shape = p.shape();
    m[i] = Tensor(shape, std::move(md));
    v[i] = Tensor(shape, std::move(vd));
    ps.set_value(i, Tensor(shape, std::move(pd)));
  }
}

// ---- sampler ---------------------------------------------------------------

BatchSampler::BatchSampler(std::span<const data::Tier> tiers, std::array<double, 3> ratio, std::uint64_t seed)
    : seed_(seed) {
  for (std::size_t i = 0; i < tiers.size(); ++i) members_[static_cast<std::size_t>(tiers[i])].push_back(i);
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    weight_[k] = members_[k].empty() ? 0.0 : ratio[k];
    total += weight_[k];
  }
  if (!(total > 0.0)) throw std::invalid_argument("batch sampler: no sequences in any tier with positive weight");
}

std::size_t BatchSampler::next() {
  double total = 0.0;
  std::size_t pick = 3;
  for (std::size_t k = 0; k < 3; ++k) {
    if (weight_[k] <= 0.0) continue;
    current_[k] += weight_[k];
    total += weight_[k];
    if (pick == 3 || current_[k] > current_[pick]) pick = k;
  }
  current_[pick] -= total;
  auto& order = order_[pick];
  if (pos_[pick] == order.size()) {
    order = members_[pick];
    std::mt19937_64 rng(derive_seed(seed_, pick, epoch_[pick]++));
    std::shuffle(order.begin(), order.end(), rng);
    pos_[pick] = 0;
  }
  ++drawn_[pick];
  return order[pos_[pick]++];
}

std::vector<std::size_t> BatchSampler::next_batch(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = next();
  return out;
}

void BatchSampler::skip(std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) next();
}

// ---- augmentation ----------------------------------------------------------

Jitter sample_jitter(const TrainConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Jitter j;
  const double a = u(rng), b = u(rng), c = u(rng);
  j.scale = 1.0 + cfg.jitter_scale * a;
  // frame size is 2 in normalized coordinates
  j.tx = 2.0 * cfg.jitter_translation * b;
  j.ty = 2.0 * cfg.jitter_translation * c;
  return j;
}

SequenceSample apply_jitter(const SequenceSample& s, const Jitter& j) {
  SequenceSample out = s;
  const double t[2] = {j.tx, j.ty};
  for (std::size_t i = 0; i < out.kp2d.size(); ++i) out.kp2d[i] = j.scale * out.kp2d[i] + t[i % 2];
  const double dlog = std::log(j.scale);
  auto move_cam = [&](double* cam) {
    cam[0] += dlog;
    cam[1] = j.scale * cam[1] + j.tx;
    cam[2] = j.scale * cam[2] + j.ty;
  };
  if (out.has_theta())
    for (std::size_t f = 0; f < out.frames; ++f) move_cam(&out.theta_gt[f * kTh + body::kCamOffset]);
  if (out.has_cam_encoding()) {
    const std::size_t D = out.feature_dim;
    for (std::size_t f = 0; f < out.frames; ++f) {
      double before[3], after[3];
      std::copy_n(&out.cam_raw[3 * f], 3, before);
      move_cam(&out.cam_raw[3 * f]);
      std::copy_n(&out.cam_raw[3 * f], 3, after);
      for (std::size_t d = 0; d < D; ++d) {
        double delta = 0.0;
        for (int a = 0; a < 3; ++a) delta += out.cam_basis[d * 3 + a] * (after[a] - before[a]);
        out.features[f * D + d] += delta;
      }
    }
  }
  return out;
}

SequenceSample crop(const SequenceSample& s, std::size_t begin, std::size_t len) {
  if (begin + len > s.frames || len == 0) {
    throw data::DataError("crop: frames [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                          ") outside sequence '" + s.id + "' of " + std::to_string(s.frames));
  }
  SequenceSample out = s;
  out.frames = len;
  auto cut = [&](auto& v, std::size_t per) {
    if (v.empty()) return;
    using V = std::remove_reference_t<decltype(v)>;
    v = V(v.begin() + static_cast<std::ptrdiff_t>(begin * per), v.begin() + static_cast<std::ptrdiff_t>((begin + len) * per));
  };
  cut(out.features, s.feature_dim);
  cut(out.kp2d, 2 * s.keypoints);
  cut(out.vis, s.keypoints);
  cut(out.theta_gt, kTh);
  cut(out.excluded, 1);
  cut(out.cam_raw, 3);
  return out;
}

// ---- objective -------------------------------------------------------------

namespace {

// Flattened per-row targets of a batch (rows = sequences stacked in order).
struct Rows {
  std::size_t F = 0, K = 0, D = 0;
  std::vector<std::size_t> offset;  // first row of each sequence
  std::vector<std::size_t> length;
  std::vector<double> features, kp, theta;  // theta zero on rows without 3D targets
  std::vector<std::uint8_t> vis;
  std::vector<double> rw, w3;
};

Rows gather(std::span<const SequenceSample> batch) {
  Rows r;
  r.K = batch.front().keypoints;
  r.D = batch.front().feature_dim;
  for (const auto& s : batch) {
    if (s.keypoints != r.K || s.feature_dim != r.D) {
      throw data::DataError("batch: sequence '" + s.id + "' has a different keypoint count or feature size");
    }
    r.offset.push_back(r.F);
    r.length.push_back(s.frames);
    r.F += s.frames;
    r.features.insert(r.features.end(), s.features.begin(), s.features.end());
    r.kp.insert(r.kp.end(), s.kp2d.begin(), s.kp2d.end());
    r.vis.insert(r.vis.end(), s.vis.begin(), s.vis.end());
    const bool sup3 = s.tier == data::Tier::Full3D && s.has_theta();
    if (sup3) r.theta.insert(r.theta.end(), s.theta_gt.begin(), s.theta_gt.end());
    else r.theta.insert(r.theta.end(), s.frames * kTh, 0.0);
    for (std::size_t t = 0; t < s.frames; ++t) {
      const bool ex = !s.excluded.empty() && s.excluded[t];
      r.rw.push_back(ex ? 0.0 : 1.0);
      r.w3.push_back(sup3 ? 1.0 : 0.0);
    }
  }
  return r;
}

double weighted_mean(const Tensor& v, std::span<const double> w) {
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    s += w[i] * v.data()[i];
    n += w[i];
  }
  return n > 0.0 ? s / n : 0.0;
}

std::vector<double> pick_rows(std::span<const double> src, std::size_t width, std::span<const std::size_t> rows,
                              std::size_t col0, std::size_t ncols) {
  std::vector<double> out;
  out.reserve(rows.size() * ncols);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < ncols; ++c) out.push_back(src[r * width + col0 + c]);
  return out;
}

struct PathOut {
  Var theta;
  Var frames;  // weighted objective of the current frames
  Tensor l2d, l3d, adv, beta;
  bool has3d = false;
};

PathOut frame_path(ad::Graph& g, const ObjectiveInputs& in, const Rows& r, Var phi, nets::DropoutSource* dropout,
                   const losses::LossWeights& w) {
  const auto& model = *in.model;
  PathOut out;
  out.theta = in.generator->regress(g, phi, dropout);
  Var beta = ad::slice(out.theta, 1, body::kBetaOffset, body::kBetaOffset + kB);
  Var pose = ad::slice(out.theta, 1, body::kPoseOffset, body::kPoseOffset + kP);
  Var s = ad::exp(ad::slice(out.theta, 1, body::kCamOffset, body::kCamOffset + 1));
  Var t = ad::slice(out.theta, 1, body::kCamOffset + 1, body::kCamOffset + 3);
  const auto b = body::run_body(model, beta, pose);
  losses::FrameTerms terms;
  terms.l2d = losses::loss_2d(camera::project(b.keypoints, s, t), r.kp, r.vis);
  out.has3d = std::any_of(r.w3.begin(), r.w3.end(), [](double x) { return x > 0.0; });
  if (out.has3d) {
    losses::ThetaMask mask;
    mask.cam = in.config->supervise_cam;
    terms.l3d = losses::loss_3d(out.theta, r.theta, mask);
  }
  terms.adv = in.adversarial ? losses::adv_generator_loss(in.discriminators->scores(g, b.rotations, beta, false))
                             : g.constant(Tensor::zeros({r.F}));
  terms.beta = losses::beta_prior(beta);
  out.frames = losses::frame_loss(terms, w, r.rw, r.w3);
  out.l2d = terms.l2d.value();
  if (out.has3d) out.l3d = terms.l3d.value();
  out.adv = terms.adv.value();
  out.beta = terms.beta.value();
  return out;
}

struct Centers {
  int step = 0;
  std::vector<std::size_t> center, target;
  std::vector<double> rw, w3;
};

struct DeltaOut {
  Var loss;
  Tensor l2d;
};

DeltaOut delta_path(ad::Graph& g, const ObjectiveInputs& in, const Rows& r, const Centers& c, Var phi, Var theta,
                    const losses::LossWeights& w) {
  const std::size_t C = c.center.size();
  Var phi_c = ad::gather_rows(phi, c.center);
  Var theta_c = ad::gather_rows(theta, c.center);
  Var beta_c = ad::slice(theta_c, 1, body::kBetaOffset, body::kBetaOffset + kB);
  Var pose_c = ad::slice(theta_c, 1, body::kPoseOffset, body::kPoseOffset + kP);
  Var pose_next = in.generator->delta(g, phi_c, pose_c, c.step);
  const auto b = body::run_body(*in.model, beta_c, pose_next);
  Var x_orth = camera::project(b.keypoints, g.constant(Tensor::full({C, 1}, 1.0)), g.constant(Tensor::zeros({C, 2})));
  const auto kp = pick_rows(r.kp, 2 * r.K, c.target, 0, 2 * r.K);
  std::vector<std::uint8_t> vis;
  for (std::size_t t : c.target) vis.insert(vis.end(), r.vis.begin() + t * r.K, r.vis.begin() + (t + 1) * r.K);
  losses::FrameTerms terms;
  terms.l2d = camera::optimal_camera_residual(x_orth, kp, vis, in.config->delta_camera);
  if (std::any_of(c.w3.begin(), c.w3.end(), [](double x) { return x > 0.0; })) {
    terms.l3d = losses::loss_3d_pose(pose_next, pick_rows(r.theta, kTh, c.target, body::kPoseOffset, kP));
  }
  terms.adv = in.adversarial ? losses::adv_generator_loss(in.discriminators->scores(g, b.rotations, beta_c, false))
                             : g.constant(Tensor::zeros({C}));
  terms.beta = losses::beta_prior(beta_c);
  return {losses::frame_loss(terms, w, c.rw, c.w3), terms.l2d.value()};
}

std::vector<Centers> sample_centers(const ObjectiveInputs& in, const Rows& r, std::mt19937_64& rng) {
  std::vector<Centers> out;
  const std::size_t ctx = (in.generator->config().receptive_field() - 1) / 2;
  for (int step : in.generator->config().delta_steps) {
    const std::size_t margin = std::max<std::size_t>(ctx, static_cast<std::size_t>(std::abs(step)));
    Centers c;
    c.step = step;
    for (std::size_t b = 0; b < r.offset.size(); ++b) {
      const std::size_t T = r.length[b];
      if (T < 2 * margin + 1) continue;
      std::uniform_int_distribution<std::size_t> u(margin, T - 1 - margin);
      for (std::size_t i = 0; i < in.config->delta_centers; ++i) {
        const std::size_t t = r.offset[b] + u(rng);
        const std::size_t target = static_cast<std::size_t>(static_cast<long long>(t) + step);
        c.center.push_back(t);
        c.target.push_back(target);
        c.rw.push_back(r.rw[t] * r.rw[target]);
        c.w3.push_back(r.w3[target]);
      }
    }
    if (!c.center.empty()) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

Objective build_objective(ad::Graph& g, const ObjectiveInputs& in, std::span<const SequenceSample> batch,
                          std::mt19937_64& rng, nets::DropoutSource* dropout) {
  if (batch.empty()) throw std::invalid_argument("build_objective: empty batch");
  const auto& cfg = *in.config;
  const auto& gen = *in.generator;
  losses::LossWeights w = cfg.weights;
  if (!in.adversarial) w.w_adv = 0.0;
  const Rows r = gather(batch);
  Objective obj;
  obj.included_rows = static_cast<std::size_t>(std::count(r.rw.begin(), r.rw.end(), 1.0));
  obj.values.skipped = obj.included_rows == 0;
  if (obj.values.skipped) return obj;

  std::vector<Var> strips;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    strips.push_back(gen.movie(g, g.constant(Tensor({r.length[b], r.D}, batch[b].features))));
  }
  Var phi = ad::concat(strips, 0);
  const PathOut cur = frame_path(g, in, r, phi, dropout, w);

  losses::ConstShape cs;
  {
    Var beta = ad::slice(cur.theta, 1, body::kBetaOffset, body::kBetaOffset + kB);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto part = losses::const_shape_loss(ad::slice(beta, 0, r.offset[b], r.offset[b] + r.length[b]));
      if (!part.defined) continue;
      cs.value = cs.defined ? ad::add(cs.value, part.value) : part.value;
      cs.defined = true;
    }
  }

  const auto centers = sample_centers(in, r, rng);
  std::vector<Var> deltas;
  double delta_sum = 0.0, delta_n = 0.0;
  for (const auto& c : centers) {
    const auto d = delta_path(g, in, r, c, phi, cur.theta, w);
    deltas.push_back(d.loss);
    for (std::size_t i = 0; i < c.rw.size(); ++i) {
      delta_sum += c.rw[i] * d.l2d.data()[i];
      delta_n += c.rw[i];
    }
  }
  Var total = losses::temporal_objective(cur.frames, deltas, cs, w);

  double hal_value = 0.0, hal_frames = 0.0;
  if (cfg.hallucinator) {
    Var feats = g.constant(Tensor({r.F, r.D}, r.features));
    Var phi_h = gen.hallucinate(g, feats);
    Var lh = losses::hallucination_loss(phi, phi_h, cfg.hal_stop_gradient);
    hal_value = weighted_mean(lh.value(), r.rw);
    const PathOut hal = frame_path(g, in, r, phi_h, dropout, w);
    hal_frames = weighted_mean(hal.l2d, r.rw);
    std::vector<Var> hal_deltas;
    for (const auto& c : centers) hal_deltas.push_back(delta_path(g, in, r, c, phi_h, hal.theta, w).loss);
    total = losses::total_objective(total, losses::weighted_sum(lh, r.rw), hal.frames, hal_deltas, w);
  }
  obj.total = ad::scale(total, 1.0 / static_cast<double>(batch.size()));

  auto& v = obj.values;
  v.total = obj.total.value().item();
  v.l2d = weighted_mean(cur.l2d, r.rw);
  if (cur.has3d) {
    std::vector<double> w3(r.F);
    for (std::size_t i = 0; i < r.F; ++i) w3[i] = r.rw[i] * r.w3[i];
    v.l3d = weighted_mean(cur.l3d, w3);
  }
  v.adv = weighted_mean(cur.adv, r.rw);
  v.beta = weighted_mean(cur.beta, r.rw);
  v.const_shape = cs.defined ? cs.value.value().item() / static_cast<double>(batch.size()) : 0.0;
  v.delta = delta_n > 0.0 ? delta_sum / delta_n : 0.0;
  v.hal = hal_value;
  v.hal_frames = hal_frames;

  const Tensor& th = cur.theta.value();
  for (std::size_t i = 0; i < r.F; ++i) {
    if (r.rw[i] == 0.0) continue;
    const double* row = th.data().data() + i * kTh;
    obj.fake_beta.insert(obj.fake_beta.end(), row + body::kBetaOffset, row + body::kBetaOffset + kB);
    obj.fake_pose.insert(obj.fake_pose.end(), row + body::kPoseOffset, row + body::kPoseOffset + kP);
  }
  return obj;
}

// ---- trainer ---------------------------------------------------------------

namespace {

std::vector<data::Tier> tiers_of(const std::vector<SequenceSample>& d) {
  std::vector<data::Tier> t;
  for (const auto& s : d) t.push_back(s.tier);
  return t;
}

AdamOptions gen_options(const TrainConfig& c) { return {c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps}; }
AdamOptions disc_options(const TrainConfig& c) { return {c.disc_lr, c.adam_beta1, c.adam_beta2, c.adam_eps}; }

const std::vector<data::Tier>& checked(const std::vector<data::Tier>& t) {
  if (t.empty()) throw data::DataError("training set is empty");
  return t;
}

}  // namespace

Trainer::Trainer(const body::BodyModel& model, std::vector<SequenceSample> train, TrainConfig cfg,
                 nets::EncoderConfig enc)
    : model_(&model),
      data_(std::move(train)),
      cfg_((cfg.validate(enc), cfg)),
      gen_(enc, derive_seed(cfg_.seed, 0x67656e)),
      disc_(enc, derive_seed(cfg_.seed, 0x646973)),
      gen_opt_(gen_.params(), gen_options(cfg_)),
      disc_opt_(disc_.params(), disc_options(cfg_)),
      sampler_(checked(tiers_of(data_)), cfg_.tier_ratio, derive_seed(cfg_.seed, 0x736d70)) {
  for (const auto& s : data_) {
    s.validate();
    if (s.frames < cfg_.seq_len) {
      throw data::DataError("sequence '" + s.id + "' has " + std::to_string(s.frames) + " frames, seq_len is " +
                            std::to_string(cfg_.seq_len));
    }
    if (s.feature_dim != enc.feature_dim) {
      throw data::DataError("sequence '" + s.id + "' has feature_dim " + std::to_string(s.feature_dim) +
                            ", the encoder expects " + std::to_string(enc.feature_dim));
    }
    if (s.keypoints != model.n_keypoints()) {
      throw data::DataError("sequence '" + s.id + "' has " + std::to_string(s.keypoints) +
                            " keypoints, the body model has " + std::to_string(model.n_keypoints()));
    }
    if (s.tier != data::Tier::Full3D || !s.has_theta()) continue;
    for (std::size_t t = 0; t < s.frames; ++t) {
      if (!s.excluded.empty() && s.excluded[t]) continue;
      const double* row = s.theta_gt.data() + t * kTh;
      real_beta_.insert(real_beta_.end(), row + body::kBetaOffset, row + body::kBetaOffset + kB);
      real_pose_.insert(real_pose_.end(), row + body::kPoseOffset, row + body::kPoseOffset + kP);
    }
  }
}

std::vector<SequenceSample> Trainer::prepare_batch(std::size_t step, std::span<const std::size_t> seqs) const {
  std::mt19937_64 rng(derive_seed(cfg_.seed, step, 1));
  std::vector<SequenceSample> out;
  out.reserve(seqs.size());
  for (std::size_t i : seqs) {
    const auto& s = data_.at(i);
    std::uniform_int_distribution<std::size_t> u(0, s.frames - cfg_.seq_len);
    const std::size_t begin = u(rng);
    const Jitter j = sample_jitter(cfg_, rng);
    out.push_back(apply_jitter(crop(s, begin, cfg_.seq_len), j));
  }
  return out;
}

LossBreakdown Trainer::step() {
  const std::size_t s = step_;
  const auto seqs = sampler_.next_batch(cfg_.batch_size);
  const auto batch = prepare_batch(s, seqs);
  std::mt19937_64 rng(derive_seed(cfg_.seed, s, 2));
  nets::DropoutSource drop(gen_.config().dropout_rate, derive_seed(cfg_.seed, s, 3));
  const bool adversarial = real_pool_rows() > 0;
  ObjectiveInputs in{model_, &gen_, &disc_, &cfg_, adversarial};

  ad::Graph g;
  Objective obj = build_objective(g, in, batch, rng, &drop);
  obj.values.step = s;
  ++step_;
  if (obj.values.skipped) return obj.values;
  const auto grads = g.backward(obj.total).for_set(gen_.params());
  gen_opt_.step(gen_.params(), grads);

  if (adversarial) {
    const std::size_t n = obj.fake_pose.size() / kP;
    std::mt19937_64 pick(derive_seed(cfg_.seed, s, 4));
    std::uniform_int_distribution<std::size_t> u(0, real_pool_rows() - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = u(pick);
    ad::Graph gd;
    Var real = disc_.scores_from_pose(gd, gd.constant(Tensor({n, kP}, pick_rows(real_pose_, kP, rows, 0, kP))),
                                      gd.constant(Tensor({n, kB}, pick_rows(real_beta_, kB, rows, 0, kB))));
    Var fake = disc_.scores_from_pose(gd, gd.constant(Tensor({n, kP}, obj.fake_pose)),
                                      gd.constant(Tensor({n, kB}, obj.fake_beta)));
    Var loss = losses::adv_discriminator_loss(real, fake);
    obj.values.disc = loss.value().item();
    disc_opt_.step(disc_.params(), gd.backward(loss).for_set(disc_.params()));
  }
  return obj.values;
}

std::vector<LossBreakdown> Trainer::run() {
  std::vector<LossBreakdown> out;
  while (step_ < cfg_.steps) out.push_back(step());
  return out;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

void write_set(io::SectionWriter& w, const std::string& prefix, const ad::ParameterSet& ps, const Adam& opt) {
  const std::int64_t t = static_cast<std::int64_t>(opt.t);
  w.i64(prefix + ".adam.t", std::span<const std::int64_t>(&t, 1));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    w.f64(prefix + ".p." + ps.name(i), ps.value(i).data());
    w.f64(prefix + ".m." + ps.name(i), opt.m[i].data());
    w.f64(prefix + ".v." + ps.name(i), opt.v[i].data());
  }
}

Tensor read_like(const io::SectionReader& r, const std::string& name, const Tensor& like) {
  return Tensor(like.shape(), r.f64(name, like.size()));
}

void read_params(const io::SectionReader& r, const std::string& prefix, ad::ParameterSet& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps.set_value(i, read_like(r, prefix + ".p." + ps.name(i), ps.value(i)));
}

void read_adam(const io::SectionReader& r, const std::string& prefix, const ad::ParameterSet& ps, Adam& opt) {
  const auto& t = r.i64(prefix + ".adam.t");
  if (t.size() != 1 || t[0] < 0) throw io::FormatError(r.source() + ": bad section " + prefix + ".adam.t");
  opt.t = static_cast<std::uint64_t>(t[0]);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    opt.m[i] = read_like(r, prefix + ".m." + ps.name(i), ps.value(i));
    opt.v[i] = read_like(r, prefix + ".v." + ps.name(i), ps.value(i));
  }
}

std::pair<TrainConfig, nets::EncoderConfig> read_config(const io::SectionReader& r) {
  TrainConfig t;
  nets::EncoderConfig e;
  apply_all(t, e, parse_key_values(r.bytes("config"), r.source() + " config"));
  return {t, e};
}

std::size_t read_step(const io::SectionReader& r) {
  const auto& s = r.i64("step");
  if (s.size() != 1 || s[0] < 0) throw io::FormatError(r.source() + ": bad section step");
  return static_cast<std::size_t>(s[0]);
}

}  // namespace

std::string Trainer::serialize() const {
  io::SectionWriter w(kMagic);
  w.bytes("config", to_text(cfg_, gen_.config()));
  const std::int64_t s = static_cast<std::int64_t>(step_);
  w.i64("step", std::span<const std::int64_t>(&s, 1));
  write_set(w, "gen", gen_.params(), gen_opt_);
  write_set(w, "disc", disc_.params(), disc_opt_);
  return w.finish();
}

void Trainer::save(const std::filesystem::path& path) const { io::write_image(path, serialize()); }

Trainer Trainer::restore(const body::BodyModel& model, std::vector<SequenceSample> train, const std::string& image,
                         const std::string& source) {
  io::SectionReader r(image, kMagic, source);
  auto [t, e] = read_config(r);
  Trainer tr(model, std::move(train), t, e);
  tr.step_ = read_step(r);
  read_params(r, "gen", tr.gen_.params());
  read_params(r, "disc", tr.disc_.params());
  read_adam(r, "gen", tr.gen_.params(), tr.gen_opt_);
  read_adam(r, "disc", tr.disc_.params(), tr.disc_opt_);
  tr.sampler_.skip(tr.step_ * tr.cfg_.batch_size);
  return tr;
}

Trainer Trainer::load(const body::BodyModel& model, std::vector<SequenceSample> train,
                      const std::filesystem::path& path) {
  return restore(model, std::move(train), io::read_image(path), path.string());
}

LoadedGenerator read_generator(const std::string& image, const std::string& source) {
  io::SectionReader r(image, kMagic, source);
  auto [t, e] = read_config(r);
  e.validate();
  LoadedGenerator out{e, t, read_step(r), nets::Generator(e, derive_seed(t.seed, 0x67656e))};
  read_params(r, "gen", out.generator.params());
  return out;
}

LoadedGenerator load_generator(const std::filesystem::path& path) {
  return read_generator(io::read_image(path), path.string());
}

std::string loss_csv_header() { return "step,total,l2d,l3d,adv,beta,const_shape,delta,hal,hal_frames,disc,skipped"; }

std::string loss_csv_row(const LossBreakdown& b) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d", b.step, b.total, b.l2d,
                b.l3d, b.adv, b.beta, b.const_shape, b.delta, b.hal, b.hal_frames, b.disc, b.skipped ? 1 : 0);
  return buf;
}

}  // namespace hmmr::train
