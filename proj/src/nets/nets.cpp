#include "hmmr/nets/nets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hmmr/ad/ops.hpp"
#include "hmmr/body/body_ops.hpp"

namespace hmmr::nets {

using ad::Shape;
using ad::Tensor;
using ad::Var;

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("encoder config: " + m); };
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (n_blocks == 0) fail("n_blocks must be positive");
  if (kernel == 0 || kernel % 2 == 0) fail("kernel must be odd, got " + std::to_string(kernel));
  if (groups == 0 || feature_dim % groups != 0) {
    fail("groups=" + std::to_string(groups) + " does not divide feature_dim=" + std::to_string(feature_dim));
  }
  if (ief_iters == 0) fail("ief_iters must be positive");
  if (ief_hidden == 0 || hal_hidden == 0 || disc_hidden == 0) fail("hidden widths must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(out_init_scale >= 0.0) || !std::isfinite(out_init_scale)) fail("out_init_scale must be finite and >= 0");
  for (std::size_t i = 0; i < delta_steps.size(); ++i) {
    if (delta_steps[i] == 0) fail("delta step 0 is not a prediction");
    for (std::size_t j = 0; j < i; ++j)
      if (delta_steps[i] == delta_steps[j]) fail("delta step " + std::to_string(delta_steps[i]) + " repeated");
  }
}

ParameterCounts expected_parameter_counts(const EncoderConfig& c) {
  const std::size_t D = c.feature_dim, K = c.kernel, H = c.ief_hidden, Th = body::kThetaDim,
                    P = body::kPoseDim, Dh = c.hal_hidden, h = c.disc_hidden;
  ParameterCounts n;
  n.movie = c.n_blocks * 2 * (D * D * K + D + 2 * D);
  n.regressor = (D + Th) * H + H + H * H + H + Th * H + Th + Th;
  n.delta_each = (D + P) * H + H + H * H + H + P * H + P;
  n.hallucinator = D * Dh + Dh + Dh * D + D;
  const std::size_t J = body::kNumJoints - 1;
  n.discriminators = J * (9 * h + h + h + 1) + (9 * J * h + h + h + 1) + (body::kNumBetas * h + h + h + 1);
  return n;
}

Tensor DropoutSource::next(const Shape& shape) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32)};
  ++counter_;
  std::mt19937_64 rng(seq);
  return ad::make_dropout_mask(shape, rate_, rng);
}

namespace {

Tensor gaussian(Shape shape, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = sd * n(rng);
  return Tensor(std::move(shape), std::move(v));
}

double he(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }
double xavier(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

void dense(ad::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, double sd,
           std::mt19937_64& rng) {
  ps.add(name + ".w", gaussian({in, out}, sd, rng));
  ps.add(name + ".b", Tensor::zeros({out}));
}

std::string delta_prefix(int step) { return "delta" + std::string(step > 0 ? "+" : "") + std::to_string(step); }

Var apply_dense(ad::Graph& g, const ad::ParameterSet& ps, Var x, const std::string& name, bool trainable = true) {
  Var w = g.parameter(ps, ps.index(name + ".w"), trainable);
  Var b = g.parameter(ps, ps.index(name + ".b"), trainable);
  return ad::add_row_bias(ad::matmul(x, w), b);
}

Var maybe_dropout(Var x, DropoutSource* d) {
  if (!d || d->rate() == 0.0) return x;
  return ad::dropout(x, d->next(x.shape()));
}

}  // namespace

Generator::Generator(EncoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t D = cfg_.feature_dim, K = cfg_.kernel, H = cfg_.ief_hidden;
  const std::size_t Th = body::kThetaDim, P = body::kPoseDim;
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    for (std::size_t c = 0; c < 2; ++c) {
      const std::string n = "movie.b" + std::to_string(b) + ".c" + std::to_string(c);
      params_.add(n + ".w", gaussian({D, D, K}, he(D * K), rng));
      params_.add(n + ".b", Tensor::zeros({D}));
      params_.add(n + ".gamma", Tensor::full({D}, 1.0));
      params_.add(n + ".beta", Tensor::zeros({D}));
    }
  }
  dense(params_, "ief.fc1", D + Th, H, he(D + Th), rng);
  dense(params_, "ief.fc2", H, H, he(H), rng);
  dense(params_, "ief.out", H, Th, cfg_.out_init_scale * xavier(H, Th), rng);
  params_.add("ief.mean", Tensor::zeros({Th}));
  for (int s : cfg_.delta_steps) {
    const std::string n = delta_prefix(s);
    dense(params_, n + ".fc1", D + P, H, he(D + P), rng);
    dense(params_, n + ".fc2", H, H, he(H), rng);
    dense(params_, n + ".out", H, P, cfg_.out_init_scale * xavier(H, P), rng);
  }
  dense(params_, "hal.fc1", D, cfg_.hal_hidden, he(D), rng);
  dense(params_, "hal.fc2", cfg_.hal_hidden, D, xavier(cfg_.hal_hidden, D), rng);
}

std::size_t Generator::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_.name(i).rfind(prefix, 0) == 0) n += params_.value(i).size();
  return n;
}

Var Generator::bind(ad::Graph& g, const std::string& name) const { return g.parameter(params_, params_.index(name)); }

Var Generator::movie(ad::Graph& g, Var features) const {
  const Shape fs = features.shape();
  if (fs.size() != 2 || fs[1] != cfg_.feature_dim || fs[0] == 0) {
    throw ad::ShapeError("f_movie: features " + ad::shape_str(fs) + ", expected [T," +
                         std::to_string(cfg_.feature_dim) + "] with T >= 1");
  }
  Var x = ad::transpose(features);  // [D,T]
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    Var h = x;
    for (std::size_t c = 0; c < 2; ++c) {
      const std::string n = "movie.b" + std::to_string(b) + ".c" + std::to_string(c);
      h = ad::conv1d(h, bind(g, n + ".w"), bind(g, n + ".b"));
      h = ad::group_norm(h, bind(g, n + ".gamma"), bind(g, n + ".beta"), cfg_.groups);
      h = ad::relu(h);
    }
    x = ad::add(x, h);
  }
  return ad::transpose(x);
}

Var Generator::regress(ad::Graph& g, Var phi, DropoutSource* dropout) const {
  return regress_iters(g, phi, cfg_.ief_iters, dropout);
}

Var Generator::regress_iters(ad::Graph& g, Var phi, std::size_t iters, DropoutSource* dropout) const {
  const Shape ps = phi.shape();
  if (ps.size() != 2 || ps[1] != cfg_.feature_dim) {
    throw ad::ShapeError("f_3D: input " + ad::shape_str(ps) + ", expected [F," + std::to_string(cfg_.feature_dim) +
                         "]");
  }
  const std::size_t F = ps[0];
  Var theta = ad::add_row_bias(g.constant(Tensor::zeros({F, body::kThetaDim})), bind(g, "ief.mean"));
  for (std::size_t it = 0; it < iters; ++it) {
    Var parts[] = {phi, theta};
    Var h = ad::relu(apply_dense(g, params_, ad::concat(parts, 1), "ief.fc1"));
    h = maybe_dropout(h, dropout);
    h = ad::relu(apply_dense(g, params_, h, "ief.fc2"));
    h = maybe_dropout(h, dropout);
    theta = ad::add(theta, apply_dense(g, params_, h, "ief.out"));
  }
  return theta;
}

bool Generator::has_delta(int step) const {
  return std::find(cfg_.delta_steps.begin(), cfg_.delta_steps.end(), step) != cfg_.delta_steps.end();
}

Var Generator::delta(ad::Graph& g, Var phi, Var pose, int step) const {
  if (!has_delta(step)) {
    throw std::invalid_argument("f_delta: step " + std::to_string(step) + " is not configured");
  }
  if (phi.shape().size() != 2 || pose.shape() != Shape{phi.shape()[0], body::kPoseDim}) {
    throw ad::ShapeError("f_delta: features " + ad::shape_str(phi.shape()) + " and pose " +
                         ad::shape_str(pose.shape()));
  }
  const std::string n = delta_prefix(step);
  Var parts[] = {phi, pose};
  Var h = ad::relu(apply_dense(g, params_, ad::concat(parts, 1), n + ".fc1"));
  h = ad::relu(apply_dense(g, params_, h, n + ".fc2"));
  return ad::add(pose, apply_dense(g, params_, h, n + ".out"));
}

Var Generator::hallucinate(ad::Graph& g, Var phi) const {
  Var h = ad::relu(apply_dense(g, params_, phi, "hal.fc1"));
  return ad::add(phi, apply_dense(g, params_, h, "hal.fc2"));
}

Discriminators::Discriminators(const EncoderConfig& cfg, std::uint64_t seed) : hidden_(cfg.disc_hidden) {
  std::mt19937_64 rng(seed);
  const std::size_t h = hidden_;
  for (std::size_t j = 1; j < body::kNumJoints; ++j) {
    const std::string n = "disc.j" + std::to_string(j);
    dense(params_, n + ".fc1", 9, h, he(9), rng);
    dense(params_, n + ".out", h, 1, xavier(h, 1), rng);
  }
  const std::size_t all = 9 * (body::kNumJoints - 1);
  dense(params_, "disc.all.fc1", all, h, he(all), rng);
  dense(params_, "disc.all.out", h, 1, xavier(h, 1), rng);
  dense(params_, "disc.shape.fc1", body::kNumBetas, h, he(body::kNumBetas), rng);
  dense(params_, "disc.shape.out", h, 1, xavier(h, 1), rng);
}

Var Discriminators::scores(ad::Graph& g, Var rotations, Var beta, bool trainable) const {
  const std::size_t F = rotations.shape()[0];
  if (rotations.shape() != Shape{F, 9 * body::kNumJoints} || beta.shape() != Shape{F, body::kNumBetas}) {
    throw ad::ShapeError("discriminators: rotations " + ad::shape_str(rotations.shape()) + ", shape " +
                         ad::shape_str(beta.shape()) + " (expected [F,216], [F,10])");
  }
  auto mlp = [&](Var x, const std::string& n) {
    return apply_dense(g, params_, ad::relu(apply_dense(g, params_, x, n + ".fc1", trainable)), n + ".out", trainable);
  };
  std::vector<Var> out;
  out.reserve(kCount);
  for (std::size_t j = 1; j < body::kNumJoints; ++j)
    out.push_back(mlp(ad::slice(rotations, 1, 9 * j, 9 * j + 9), "disc.j" + std::to_string(j)));
  out.push_back(mlp(ad::slice(rotations, 1, 9, 9 * body::kNumJoints), "disc.all"));
  out.push_back(mlp(beta, "disc.shape"));
  return ad::concat(out, 1);
}

Var Discriminators::scores_from_pose(ad::Graph& g, Var pose, Var beta, bool trainable) const {
  return scores(g, body::rodrigues(pose), beta, trainable);
}

}  // namespace hmmr::nets
