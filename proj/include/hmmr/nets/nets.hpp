#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hmmr/ad/graph.hpp"
#include "hmmr/ad/parameters.hpp"
#include "hmmr/body/body_model.hpp"

// The learnable networks. Per-sequence features are [T,D] row-major; the
// regressors accept any number of rows, so callers may stack frames from
// several sequences.

namespace hmmr::nets {

struct EncoderConfig {
  std::size_t feature_dim = 64;
  std::size_t n_blocks = 3;
  std::size_t kernel = 3;
  std::size_t groups = 8;
  std::size_t ief_iters = 3;
  std::size_t ief_hidden = 128;
  double dropout_rate = 0.1;
  std::vector<int> delta_steps = {-5, 5};
  std::size_t hal_hidden = 64;
  std::size_t disc_hidden = 32;
  // Std of the output layers of f_3D and f_delta relative to Xavier init.
  double out_init_scale = 0.01;

  std::size_t receptive_field() const { return 1 + n_blocks * 2 * (kernel - 1); }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Number of parameters each network should have under `cfg`, from the
// closed-form layer formulas. Checked against the allocated tensors in tests.
struct ParameterCounts {
  std::size_t movie = 0;
  std::size_t regressor = 0;  // includes the learned mean
  std::size_t delta_each = 0;
  std::size_t hallucinator = 0;
  std::size_t discriminators = 0;
};
ParameterCounts expected_parameter_counts(const EncoderConfig& cfg);

// Deterministic dropout masks: mask i of a source depends only on (seed, i).
class DropoutSource {
 public:
  DropoutSource(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {}
  ad::Tensor next(const ad::Shape& shape);
  double rate() const { return rate_; }

 private:
  double rate_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// f_movie, f_3D, f_delta and the hallucinator, sharing one parameter set.
class Generator {
 public:
  Generator(EncoderConfig cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }
  // Elements owned by names starting with `prefix` ("movie.", "ief.", "delta-5.", "hal.").
  std::size_t count(const std::string& prefix) const;

  // [T,D] -> [T,D] movie strips.
  ad::Var movie(ad::Graph& g, ad::Var features) const;
  // [F,D] -> [F,85] raw Theta. dropout == nullptr runs in eval mode.
  ad::Var regress(ad::Graph& g, ad::Var phi, DropoutSource* dropout = nullptr) const;
  // Same with an explicit iteration count; iters = 0 returns the mean.
  ad::Var regress_iters(ad::Graph& g, ad::Var phi, std::size_t iters, DropoutSource* dropout) const;
  // ([F,D], [F,72]) -> [F,72] pose at t + step. Throws for unconfigured steps.
  ad::Var delta(ad::Graph& g, ad::Var phi, ad::Var pose, int step) const;
  // [F,D] -> [F,D]
  ad::Var hallucinate(ad::Graph& g, ad::Var phi) const;

  bool has_delta(int step) const;

 private:
  ad::Var bind(ad::Graph& g, const std::string& name) const;

  EncoderConfig cfg_;
  ad::ParameterSet params_;
};

// 23 per-joint discriminators, one over all joints, one over shape.
class Discriminators {
 public:
  static constexpr std::size_t kCount = 25;

  Discriminators(const EncoderConfig& cfg, std::uint64_t seed);

  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  // rotations [F,216] (root included, ignored) and beta [F,10] -> scores [F,25].
  // trainable=false binds the weights as constants.
  ad::Var scores(ad::Graph& g, ad::Var rotations, ad::Var beta, bool trainable = true) const;
  // Convenience: pose [F,72] axis-angle instead of rotation matrices.
  ad::Var scores_from_pose(ad::Graph& g, ad::Var pose, ad::Var beta, bool trainable = true) const;

 private:
  std::size_t hidden_;
  ad::ParameterSet params_;
};

}  // namespace hmmr::nets
