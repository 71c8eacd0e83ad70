#include "hmmr/eval/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "hmmr/ad/ops.hpp"
#include "hmmr/data/synthetic.hpp"
#include "hmmr/eval/metrics.hpp"

namespace hmmr::eval {

using ad::Tensor;
using ad::Var;
using data::SequenceSample;

namespace {
constexpr std::size_t kTh = body::kThetaDim, kP = body::kPoseDim;
}

const char* mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::Temporal: return "temporal";
    case EvalMode::SingleFrame: return "single-frame";
    case EvalMode::HallucinatedDynamics: return "hallucinated-dynamics";
  }
  return "?";
}

EvalMode parse_mode(const std::string& s) {
  for (EvalMode m : {EvalMode::Temporal, EvalMode::SingleFrame, EvalMode::HallucinatedDynamics})
    if (s == mode_name(m)) return m;
  throw std::invalid_argument("unknown eval mode '" + s + "' (temporal, single-frame, hallucinated-dynamics)");
}

namespace {

Var strip(ad::Graph& g, const nets::Generator& gen, const SequenceSample& s, bool hallucinated) {
  if (s.feature_dim != gen.config().feature_dim) {
    throw data::DataError("sequence '" + s.id + "' has feature_dim " + std::to_string(s.feature_dim) +
                          ", the network expects " + std::to_string(gen.config().feature_dim));
  }
  Var f = g.constant(Tensor({s.frames, s.feature_dim}, s.features));
  return hallucinated ? gen.hallucinate(g, f) : gen.movie(g, f);
}

bool included(const SequenceSample& s, std::size_t t) { return s.excluded.empty() || !s.excluded[t]; }

std::vector<double> frames_of(std::span<const double> x, std::size_t width, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (std::size_t r : rows) out.insert(out.end(), x.begin() + r * width, x.begin() + (r + 1) * width);
  return out;
}

double mean_or_nan(const CompensatedSum& s, double n) { return n > 0.0 ? s.value() / n : kUndefined; }

}  // namespace

std::vector<double> predict_theta(const nets::Generator& gen, const SequenceSample& s, EvalMode mode) {
  ad::Graph g;
  Var phi = strip(g, gen, s, mode != EvalMode::Temporal);
  return gen.regress(g, phi, nullptr).value().to_vector();
}

DynamicsPrediction predict_dynamics(const nets::Generator& gen, const SequenceSample& s, bool hallucinated) {
  ad::Graph g;
  Var phi = strip(g, gen, s, hallucinated);
  Var theta = gen.regress(g, phi, nullptr);
  Var pose = ad::slice(theta, 1, body::kPoseOffset, body::kPoseOffset + kP);
  DynamicsPrediction out;
  out.theta = theta.value().to_vector();
  for (int step : gen.config().delta_steps) out.pose[step] = gen.delta(g, phi, pose, step).value().to_vector();
  return out;
}

namespace {

SequenceMetrics sequence_metrics(const body::BodyModel& model, const SequenceSample& s, std::span<const double> pred,
                                 double alpha) {
  if (pred.size() != s.frames * kTh) {
    throw std::invalid_argument("evaluate: prediction for '" + s.id + "' has " + std::to_string(pred.size()) +
                                " values, expected " + std::to_string(s.frames * kTh));
  }
  const std::size_t k = model.n_keypoints(), root = model.root_keypoint();
  if (s.keypoints != k) {
    throw data::DataError("sequence '" + s.id + "' has " + std::to_string(s.keypoints) + " keypoints, the model " +
                          std::to_string(k));
  }
  SequenceMetrics m;
  m.id = s.id;
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < s.frames; ++t)
    if (included(s, t)) rows.push_back(t);
  m.frames = rows.size();

  const auto kp = data::render_keypoints(model, pred);
  std::vector<std::uint8_t> vis = s.vis;
  for (std::size_t t = 0; t < s.frames; ++t)
    if (!included(s, t)) std::fill_n(vis.begin() + t * k, k, 0);
  const auto c = pck(kp, s.kp2d, vis, k, alpha);
  m.pck_correct = c.correct;
  m.pck_total = c.total;
  if (c.total) m.pck = c.fraction();

  const auto jp = keypoints_3d(model, pred);
  std::vector<double> jg;
  if (s.has_theta()) {
    jg = keypoints_3d(model, s.theta_gt);
    m.frames_3d = rows.size();
    if (!rows.empty()) {
      const auto p = frames_of(jp, 3 * k, rows), g = frames_of(jg, 3 * k, rows);
      m.mpjpe = mpjpe(p, g, k, root);
      m.pa_mpjpe = pa_mpjpe(p, g, k);
      const auto me = mesh_errors(model, frames_of(pred, kTh, rows), frames_of(s.theta_gt, kTh, rows));
      m.mesh_posed = me.posed;
      m.mesh_unposed = me.unposed;
      if (m.pa_mpjpe > m.mpjpe * (1.0 + 1e-12) + 1e-9) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "PA-MPJPE %.6f mm exceeds MPJPE %.6f mm", m.pa_mpjpe, m.mpjpe);
        throw MetricError("sequence '" + s.id + "': " + buf);
      }
    }
  }
  const auto a = accel_error(jp, jg, k, s.fps, s.excluded);
  m.accel_terms = a.terms;
  if (a.defined()) m.accel = a.value;
  return m;
}

SequenceMetrics aggregate(const std::vector<SequenceMetrics>& seqs) {
  SequenceMetrics a;
  a.id = "all";
  CompensatedSum mp, pa, mesh_p, mesh_u, acc;
  double n_acc = 0.0;
  for (const auto& s : seqs) {
    a.frames += s.frames;
    a.pck_correct += s.pck_correct;
    a.pck_total += s.pck_total;
    if (s.frames_3d && !std::isnan(s.mpjpe)) {
      const double w = static_cast<double>(s.frames_3d);
      a.frames_3d += s.frames_3d;
      mp.add(w * s.mpjpe);
      pa.add(w * s.pa_mpjpe);
      mesh_p.add(w * s.mesh_posed);
      mesh_u.add(w * s.mesh_unposed);
    }
    if (s.accel_terms) {
      a.accel_terms += s.accel_terms;
      acc.add(static_cast<double>(s.accel_terms) * s.accel);
      n_acc += static_cast<double>(s.accel_terms);
    }
  }
  if (a.pck_total) a.pck = static_cast<double>(a.pck_correct) / static_cast<double>(a.pck_total);
  const double n3 = static_cast<double>(a.frames_3d);
  a.mpjpe = mean_or_nan(mp, n3);
  a.pa_mpjpe = mean_or_nan(pa, n3);
  a.mesh_posed = mean_or_nan(mesh_p, n3);
  a.mesh_unposed = mean_or_nan(mesh_u, n3);
  a.accel = mean_or_nan(acc, n_acc);
  return a;
}

struct PoolEntry {
  const double* pose;
  const double* past;
  const double* future;
};

std::vector<PoolEntry> nn_candidates(const std::vector<SequenceSample>* pool, int delta) {
  std::vector<PoolEntry> out;
  if (!pool) return out;
  const std::size_t d = static_cast<std::size_t>(delta);
  for (const auto& s : *pool) {
    if (!s.has_theta() || s.frames <= 2 * d) continue;
    for (std::size_t u = d; u + d < s.frames; ++u) {
      if (!included(s, u) || !included(s, u - d) || !included(s, u + d)) continue;
      const double* base = s.theta_gt.data() + body::kPoseOffset;
      out.push_back({base + u * kTh, base + (u - d) * kTh, base + (u + d) * kTh});
    }
  }
  return out;
}

const PoolEntry* nearest(const std::vector<PoolEntry>& pool, const double* pose) {
  const PoolEntry* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : pool) {
    double d = 0.0;
    for (std::size_t i = 0; i < kP; ++i) d += (e.pose[i] - pose[i]) * (e.pose[i] - pose[i]);
    if (d < best_d) {
      best_d = d;
      best = &e;
    }
  }
  return best;
}

DynamicsMetrics sequence_dynamics(const body::BodyModel& model, const nets::Generator& gen, const SequenceSample& s,
                                  int delta, const std::vector<PoolEntry>& pool) {
  DynamicsMetrics m;
  m.id = s.id;
  if (!s.has_theta()) return m;
  const auto pred = predict_dynamics(gen, s, true);
  const auto& past = pred.pose.at(-delta);
  const auto& future = pred.pose.at(delta);
  const std::size_t d = static_cast<std::size_t>(delta);
  auto pa_frame = [&](const double* theta_row, const double* pose, std::size_t gt_frame) {
    std::vector<double> row(theta_row, theta_row + kTh);
    if (pose) std::copy_n(pose, kP, row.begin() + body::kPoseOffset);
    const auto jp = keypoints_3d(model, row);
    const auto jg = keypoints_3d(model, std::span<const double>(s.theta_gt).subspan(gt_frame * kTh, kTh));
    return kMillimeters * frame_pa_mpjpe(jp, jg);
  };
  CompensatedSum sp, sc, sf, cp, cf, np, nf;
  for (std::size_t t = d; t + d < s.frames; ++t) {
    if (!included(s, t) || !included(s, t - d) || !included(s, t + d)) continue;
    ++m.centers;
    const double* th = pred.theta.data() + t * kTh;
    sp.add(pa_frame(th, past.data() + t * kP, t - d));
    sc.add(pa_frame(th, nullptr, t));
    sf.add(pa_frame(th, future.data() + t * kP, t + d));
    cp.add(pa_frame(th, nullptr, t - d));
    cf.add(pa_frame(th, nullptr, t + d));
    if (const PoolEntry* e = nearest(pool, th + body::kPoseOffset)) {
      np.add(pa_frame(th, e->past, t - d));
      nf.add(pa_frame(th, e->future, t + d));
    }
  }
  const double n = static_cast<double>(m.centers);
  m.past = mean_or_nan(sp, n);
  m.current = mean_or_nan(sc, n);
  m.future = mean_or_nan(sf, n);
  m.const_past = mean_or_nan(cp, n);
  m.const_future = mean_or_nan(cf, n);
  if (!pool.empty()) {
    m.nn_past = mean_or_nan(np, n);
    m.nn_future = mean_or_nan(nf, n);
  }
  return m;
}

DynamicsMetrics aggregate(const std::vector<DynamicsMetrics>& seqs) {
  DynamicsMetrics a;
  a.id = "all";
  CompensatedSum s[7];
  bool nn = false;
  for (const auto& m : seqs) {
    if (!m.centers) continue;
    const double w = static_cast<double>(m.centers);
    a.centers += m.centers;
    const double v[7] = {m.past, m.current, m.future, m.const_past, m.const_future, m.nn_past, m.nn_future};
    for (int i = 0; i < 7; ++i)
      if (!std::isnan(v[i])) s[i].add(w * v[i]);
    nn = nn || !std::isnan(m.nn_past);
  }
  const double n = static_cast<double>(a.centers);
  double* out[7] = {&a.past, &a.current, &a.future, &a.const_past, &a.const_future, &a.nn_past, &a.nn_future};
  for (int i = 0; i < 7; ++i) *out[i] = (i >= 5 && !nn) ? kUndefined : mean_or_nan(s[i], n);
  return a;
}

}  // namespace

MetricReport evaluate_predictions(const body::BodyModel& model, const std::vector<SequenceSample>& seqs,
                                  const std::vector<std::vector<double>>& theta_preds, double alpha) {
  if (seqs.size() != theta_preds.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(theta_preds.size()) + " predictions for " +
                                std::to_string(seqs.size()) + " sequences");
  }
  MetricReport r;
  for (std::size_t i = 0; i < seqs.size(); ++i) r.sequences.push_back(sequence_metrics(model, seqs[i], theta_preds[i], alpha));
  r.aggregate = aggregate(r.sequences);
  return r;
}

MetricReport evaluate(const body::BodyModel& model, const nets::Generator& gen, const std::vector<SequenceSample>& seqs,
                      const EvalOptions& opts) {
  std::vector<std::vector<double>> preds;
  preds.reserve(seqs.size());
  for (const auto& s : seqs) preds.push_back(predict_theta(gen, s, opts.mode));
  MetricReport r = evaluate_predictions(model, seqs, preds, opts.alpha);
  r.mode = opts.mode;
  if (opts.mode == EvalMode::HallucinatedDynamics) {
    if (opts.delta <= 0 || !gen.has_delta(opts.delta) || !gen.has_delta(-opts.delta)) {
      throw std::invalid_argument("evaluate: the network has no delta predictors for -" + std::to_string(opts.delta) +
                                  " and +" + std::to_string(opts.delta));
    }
    r.has_dynamics = true;
    r.delta = opts.delta;
    const auto pool = nn_candidates(opts.nn_pool, opts.delta);
    for (const auto& s : seqs) r.dynamics.push_back(sequence_dynamics(model, gen, s, opts.delta, pool));
    r.dynamics_aggregate = aggregate(r.dynamics);
  }
  return r;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string metrics_row(const SequenceMetrics& m) {
  return csv_field(m.id) + "," + std::to_string(m.frames) + "," + num(m.pck) + "," + num(m.mpjpe) + "," +
         num(m.pa_mpjpe) + "," + num(m.accel) + "," + num(m.mesh_posed) + "," + num(m.mesh_unposed) + "\n";
}

std::string dynamics_row(const DynamicsMetrics& m) {
  return csv_field(m.id) + "," + std::to_string(m.centers) + "," + num(m.past) + "," + num(m.current) + "," +
         num(m.future) + "," + num(m.const_past) + "," + num(m.const_future) + "," + num(m.nn_past) + "," +
         num(m.nn_future) + "\n";
}

nlohmann::ordered_json jnum(double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); }

nlohmann::ordered_json to_json(const SequenceMetrics& m) {
  return {{"id", m.id},       {"frames", m.frames},           {"pck", jnum(m.pck)},
          {"mpjpe_mm", jnum(m.mpjpe)}, {"pa_mpjpe_mm", jnum(m.pa_mpjpe)}, {"accel_err_mm_s2", jnum(m.accel)},
          {"mesh_posed_mm", jnum(m.mesh_posed)}, {"mesh_unposed_mm", jnum(m.mesh_unposed)}};
}

nlohmann::ordered_json to_json(const DynamicsMetrics& m) {
  return {{"id", m.id},
          {"centers", m.centers},
          {"past_pa_mm", jnum(m.past)},
          {"current_pa_mm", jnum(m.current)},
          {"future_pa_mm", jnum(m.future)},
          {"const_past_pa_mm", jnum(m.const_past)},
          {"const_future_pa_mm", jnum(m.const_future)},
          {"nn_past_pa_mm", jnum(m.nn_past)},
          {"nn_future_pa_mm", jnum(m.nn_future)}};
}

}  // namespace

std::string metrics_csv(const MetricReport& r) {
  std::string out = "id,frames,pck,mpjpe_mm,pa_mpjpe_mm,accel_err_mm_s2,mesh_posed_mm,mesh_unposed_mm\n";
  for (const auto& m : r.sequences) out += metrics_row(m);
  return out + metrics_row(r.aggregate);
}

std::string dynamics_csv(const MetricReport& r) {
  std::string out =
      "id,centers,past_pa_mm,current_pa_mm,future_pa_mm,const_past_pa_mm,const_future_pa_mm,nn_past_pa_mm,"
      "nn_future_pa_mm\n";
  for (const auto& m : r.dynamics) out += dynamics_row(m);
  if (r.has_dynamics) out += dynamics_row(r.dynamics_aggregate);
  return out;
}

std::string report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(r.mode);
  j["aggregate"] = to_json(r.aggregate);
  j["sequences"] = nlohmann::ordered_json::array();
  for (const auto& m : r.sequences) j["sequences"].push_back(to_json(m));
  if (r.has_dynamics) {
    j["dynamics"]["delta"] = r.delta;
    j["dynamics"]["aggregate"] = to_json(r.dynamics_aggregate);
    j["dynamics"]["sequences"] = nlohmann::ordered_json::array();
    for (const auto& m : r.dynamics) j["dynamics"]["sequences"].push_back(to_json(m));
  }
  return j.dump(2) + "\n";
}

}  // namespace hmmr::eval
