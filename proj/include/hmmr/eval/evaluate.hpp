#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "hmmr/body/body_model.hpp"
#include "hmmr/data/dataset.hpp"
#include "hmmr/nets/nets.hpp"

namespace hmmr::eval {

// Temporal: f_movie then f_3D. SingleFrame: hallucinator on each frame's own
// feature, then f_3D. HallucinatedDynamics: SingleFrame plus past/future
// prediction from the hallucinated strip.
enum class EvalMode { Temporal, SingleFrame, HallucinatedDynamics };

const char* mode_name(EvalMode m);
EvalMode parse_mode(const std::string& s);

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

struct SequenceMetrics {
  std::string id;
  std::size_t frames = 0;     // included frames
  std::size_t frames_3d = 0;  // included frames with 3D ground truth
  double pck = kUndefined;
  double mpjpe = kUndefined;
  double pa_mpjpe = kUndefined;
  double accel = kUndefined;
  double mesh_posed = kUndefined;
  double mesh_unposed = kUndefined;
  std::size_t pck_correct = 0;
  std::size_t pck_total = 0;
  std::size_t accel_terms = 0;
};

struct DynamicsMetrics {
  std::string id;
  std::size_t centers = 0;
  double past = kUndefined, current = kUndefined, future = kUndefined;
  double const_past = kUndefined, const_future = kUndefined;
  double nn_past = kUndefined, nn_future = kUndefined;
};

struct MetricReport {
  EvalMode mode = EvalMode::Temporal;
  std::vector<SequenceMetrics> sequences;
  SequenceMetrics aggregate;
  bool has_dynamics = false;
  int delta = 0;
  std::vector<DynamicsMetrics> dynamics;
  DynamicsMetrics dynamics_aggregate;
};

struct EvalOptions {
  EvalMode mode = EvalMode::Temporal;
  double alpha = 0.05;
  // Dynamics are evaluated at -delta and +delta frames.
  int delta = 5;
  // Training sequences for the nearest-neighbour baseline; may be null.
  const std::vector<data::SequenceSample>* nn_pool = nullptr;
};

// Raw Theta rows [T,85] for every frame of a sequence (dropout off).
std::vector<double> predict_theta(const nets::Generator& gen, const data::SequenceSample& s, EvalMode mode);

struct DynamicsPrediction {
  std::vector<double> theta;                   // T x 85
  std::map<int, std::vector<double>> pose;     // step -> T x 72
};
// Current Theta and delta poses for every frame; hallucinated selects the
// single-frame strip instead of the temporal one.
DynamicsPrediction predict_dynamics(const nets::Generator& gen, const data::SequenceSample& s, bool hallucinated);

// Metrics of given predictions (theta_preds[i] is T_i x 85). Throws
// MetricError if PA-MPJPE exceeds MPJPE on any sequence.
MetricReport evaluate_predictions(const body::BodyModel& model, const std::vector<data::SequenceSample>& seqs,
                                  const std::vector<std::vector<double>>& theta_preds, double alpha = 0.05);

MetricReport evaluate(const body::BodyModel& model, const nets::Generator& gen,
                      const std::vector<data::SequenceSample>& seqs, const EvalOptions& opts);

// Per-sequence rows then an "all" row; fixed 6 decimals, "nan" where a
// metric is undefined.
std::string metrics_csv(const MetricReport& r);
std::string dynamics_csv(const MetricReport& r);
std::string report_json(const MetricReport& r);

}  // namespace hmmr::eval
