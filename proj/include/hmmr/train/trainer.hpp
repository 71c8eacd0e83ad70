#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hmmr/ad/graph.hpp"
#include "hmmr/body/body_model.hpp"
#include "hmmr/camera/camera.hpp"
#include "hmmr/data/dataset.hpp"
#include "hmmr/losses/losses.hpp"
#include "hmmr/nets/nets.hpp"

namespace hmmr::train {

struct TrainConfig {
  std::size_t seq_len = 20;
  std::size_t batch_size = 8;
  std::size_t steps = 1000;
  double lr = 1e-4;
  double disc_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  losses::LossWeights weights;

  // Per-sequence scale drawn from [1 - jitter_scale, 1 + jitter_scale] and
  // translation from +-jitter_translation of the frame size (2 units).
  double jitter_scale = 0.1;
  double jitter_translation = 0.05;

  // Sampling weight of Full3D, GT2D, Pseudo2D sequences.
  std::array<double, 3> tier_ratio{1.0, 1.0, 1.0};

  // Delta-frame centers drawn per sequence and step.
  std::size_t delta_centers = 2;
  bool hallucinator = true;
  bool hal_stop_gradient = true;
  bool supervise_cam = false;
  camera::CameraGradient delta_camera = camera::CameraGradient::Full;

  // Throws std::invalid_argument naming the field.
  void validate(const nets::EncoderConfig& enc) const;
};

// ---- optimizer -------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ad::ParameterSet& ps, AdamOptions opts);

  void step(ad::ParameterSet& ps, const std::vector<ad::Tensor>& grads);

  AdamOptions options;
  std::uint64_t t = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
};

// ---- tier mixing -----------------------------------------------------------

// Picks tiers by smooth weighted round-robin over the non-empty tiers, then a
// sequence of that tier from a per-epoch shuffle. The draw sequence depends
// only on (tiers, ratio, seed).
class BatchSampler {
 public:
  BatchSampler(std::span<const data::Tier> tiers, std::array<double, 3> ratio, std::uint64_t seed);

  std::size_t next();
  std::vector<std::size_t> next_batch(std::size_t n);
  void skip(std::size_t n);

  const std::array<std::size_t, 3>& drawn() const { return drawn_; }

 private:
  std::array<std::vector<std::size_t>, 3> members_;
  std::array<std::vector<std::size_t>, 3> order_;
  std::array<std::size_t, 3> pos_{};
  std::array<std::uint64_t, 3> epoch_{};
  std::array<double, 3> weight_{};
  std::array<double, 3> current_{};
  std::array<std::size_t, 3> drawn_{};
  std::uint64_t seed_;
};

// ---- augmentation ----------------------------------------------------------

struct Jitter {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

Jitter sample_jitter(const TrainConfig& cfg, std::mt19937_64& rng);

// Applies x -> scale * x + t to the 2D keypoints and the matching change to
// the raw camera; synthetic features follow through cam_basis. 3D pose and
// shape are untouched and visibility is kept.
data::SequenceSample apply_jitter(const data::SequenceSample& s, const Jitter& j);

// Frames [begin, begin + len) of s.
data::SequenceSample crop(const data::SequenceSample& s, std::size_t begin, std::size_t len);

// ---- objective -------------------------------------------------------------

// Mean per-row values of each term, for logging. l3d and delta are averaged
// over the rows they apply to (0 when none).
struct LossBreakdown {
  std::size_t step = 0;
  double total = 0.0;
  double l2d = 0.0;
  double l3d = 0.0;
  double adv = 0.0;
  double beta = 0.0;
  double const_shape = 0.0;
  double delta = 0.0;
  double hal = 0.0;
  double hal_frames = 0.0;
  double disc = 0.0;
  bool skipped = false;
};

struct Objective {
  ad::Var total;
  LossBreakdown values;
  std::size_t included_rows = 0;
  // Temporal-path predictions of included rows, as constants for the
  // discriminator update.
  std::vector<double> fake_pose;  // rows x 72
  std::vector<double> fake_beta;  // rows x 10
};

struct ObjectiveInputs {
  const body::BodyModel* model = nullptr;
  const nets::Generator* generator = nullptr;
  const nets::Discriminators* discriminators = nullptr;
  const TrainConfig* config = nullptr;
  // Whether the adversarial generator term is active (needs a real pose pool).
  bool adversarial = true;
};

// Builds the full generator objective for a prepared batch, divided by the
// number of sequences. Discriminators are bound as constants.
Objective build_objective(ad::Graph& g, const ObjectiveInputs& in, std::span<const data::SequenceSample> batch,
                          std::mt19937_64& rng, nets::DropoutSource* dropout);

// ---- trainer ---------------------------------------------------------------

class Trainer {
 public:
  Trainer(const body::BodyModel& model, std::vector<data::SequenceSample> train, TrainConfig cfg,
          nets::EncoderConfig enc);

  // One generator update followed by one discriminator update.
  LossBreakdown step();
  // Runs until step_count() == cfg.steps.
  std::vector<LossBreakdown> run();

  std::size_t step_count() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  const nets::Generator& generator() const { return gen_; }
  nets::Generator& generator() { return gen_; }
  const nets::Discriminators& discriminators() const { return disc_; }
  nets::Discriminators& discriminators() { return disc_; }
  std::size_t real_pool_rows() const { return real_pose_.size() / body::kPoseDim; }

  // Prepared (cropped and jittered) batch of a given step; pure in (seed, step)
  // given the sampler position.
  std::vector<data::SequenceSample> prepare_batch(std::size_t step, std::span<const std::size_t> seqs) const;

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  // Rebuilds a trainer from a checkpoint. The configuration stored in the
  // checkpoint is used; `steps` may be raised afterwards to continue.
  static Trainer restore(const body::BodyModel& model, std::vector<data::SequenceSample> train,
                         const std::string& image, const std::string& source = "<memory>");
  static Trainer load(const body::BodyModel& model, std::vector<data::SequenceSample> train,
                      const std::filesystem::path& path);

 private:
  const body::BodyModel* model_;
  std::vector<data::SequenceSample> data_;
  TrainConfig cfg_;
  nets::Generator gen_;
  nets::Discriminators disc_;
  Adam gen_opt_;
  Adam disc_opt_;
  BatchSampler sampler_;
  std::vector<double> real_pose_;
  std::vector<double> real_beta_;
  std::size_t step_ = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Generator weights and encoder config only, for evaluation and prediction.
struct LoadedGenerator {
  nets::EncoderConfig encoder;
  TrainConfig train;
  std::size_t step = 0;
  nets::Generator generator;
};
LoadedGenerator load_generator(const std::filesystem::path& path);
LoadedGenerator read_generator(const std::string& image, const std::string& source = "<memory>");

// Loss history CSV, fixed 6 decimals.
std::string loss_csv_header();
std::string loss_csv_row(const LossBreakdown& b);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace hmmr::train
