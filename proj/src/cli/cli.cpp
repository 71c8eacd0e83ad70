#include "hmmr/cli/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hmmr/ad/graph.hpp"
#include "hmmr/camera/camera.hpp"
#include "hmmr/data/synthetic.hpp"
#include "hmmr/data/tracking.hpp"
#include "hmmr/eval/evaluate.hpp"
#include "hmmr/eval/metrics.hpp"
#include "hmmr/io/sections.hpp"
#include "hmmr/train/config.hpp"
#include "hmmr/train/gradsuite.hpp"
#include "hmmr/train/trainer.hpp"

namespace hmmr::cli {

namespace fs = std::filesystem;

namespace {

// A failure of the numbers rather than of the inputs.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Validation failure detected by the command itself.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") out << text;
  else write_text(path, text);
}

std::vector<data::SequenceSample> load_all(const std::vector<std::string>& paths) {
  std::vector<data::SequenceSample> all;
  for (const auto& p : paths) {
    auto part = data::load_dataset(p);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

std::string tier_summary(const std::vector<data::SequenceSample>& seqs) {
  std::array<std::size_t, 3> n{};
  std::size_t excluded = 0;
  for (const auto& s : seqs) {
    ++n[static_cast<std::size_t>(s.tier)];
    excluded += s.frames - s.n_included();
  }
  std::ostringstream o;
  o << "full3d=" << n[0] << " gt2d=" << n[1] << " pseudo2d=" << n[2] << ", excluded frames " << excluded;
  return o.str();
}

// ---- gen-model -------------------------------------------------------------

struct GenModelArgs {
  std::uint64_t seed = 0;
  std::size_t vertices = 120;
  std::size_t keypoints = 14;
  std::string out;
};

int gen_model(const GenModelArgs& a, std::ostream& out) {
  const auto model = body::make_toy_model(a.seed, a.vertices, a.keypoints);
  body::save_model(model, a.out);
  out << "model: " << model.n_vertices() << " vertices, " << model.n_keypoints() << " keypoints, "
      << model.parents().size() << " joints -> " << a.out << "\n";
  return kOk;
}

// ---- gen-data --------------------------------------------------------------

struct GenDataArgs {
  std::string model;
  std::string out;
  std::string tier = "full3d";
  std::string motion = "mixed";
  data::SyntheticConfig cfg;
};

int gen_data(GenDataArgs a, std::ostream& out) {
  const auto model = body::load_model(a.model);
  a.cfg.tier = data::parse_tier(a.tier);
  a.cfg.motion = data::parse_motion(a.motion);
  const auto seqs = data::gen_synthetic_dataset(model, a.cfg);
  data::save_dataset(a.out, seqs);
  out << "data: " << seqs.size() << " sequences, k=" << model.n_keypoints() << ", T=" << a.cfg.frames
      << ", fps=" << a.cfg.fps << ", motion=" << data::motion_name(a.cfg.motion) << ", " << tier_summary(seqs)
      << " -> " << a.out << "\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string model;
  std::vector<std::string> data;
  std::string config;
  std::vector<std::string> set;
  std::string ckpt;
  std::string out;
  std::string loss_csv;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::string> delta_steps;
  std::size_t log_every = 100;
  bool quiet = false;
};

fs::path default_loss_path(const fs::path& ckpt) {
  return ckpt.parent_path() / (ckpt.stem().string() + "_loss.csv");
}

int train_cmd(const TrainArgs& a, std::ostream& out) {
  const auto model = body::load_model(a.model);
  auto seqs = load_all(a.data);
  const fs::path loss_path = a.loss_csv.empty() ? default_loss_path(a.out) : fs::path(a.loss_csv);

  auto overrides = [&](train::TrainConfig& t, nets::EncoderConfig& e) {
    if (a.seed) t.seed = *a.seed;
    if (a.steps) t.steps = *a.steps;
    if (a.delta_steps) train::apply_key(t, e, "delta_steps", *a.delta_steps);
    for (const auto& kv : a.set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw train::ConfigError("--set expects key=value, got '" + kv + "'");
      train::apply_all(t, e, train::parse_key_values(kv, "--set"));
    }
  };

  std::optional<train::Trainer> tr;
  bool append = false;
  if (!a.ckpt.empty()) {
    tr.emplace(train::Trainer::load(model, std::move(seqs), a.ckpt));
    // Only the step budget may change on resume; everything else is fixed
    // by the checkpoint.
    if (a.steps) tr->config().steps = *a.steps;
    if (a.seed || a.delta_steps || !a.set.empty() || !a.config.empty()) {
      throw UsageError("a resumed run takes its configuration from the checkpoint; only --steps may be given");
    }
    append = fs::exists(loss_path);
    out << "resuming " << a.ckpt << " at step " << tr->step_count() << "\n";
  } else {
    train::TrainConfig t;
    nets::EncoderConfig e;
    if (!a.config.empty()) train::apply_all(t, e, train::read_key_values(a.config));
    overrides(t, e);
    tr.emplace(model, std::move(seqs), t, e);
  }

  if (tr->step_count() > tr->config().steps) {
    throw UsageError("checkpoint is at step " + std::to_string(tr->step_count()) + ", beyond --steps " +
                     std::to_string(tr->config().steps));
  }

  std::string rows;
  if (!append) rows = train::loss_csv_header() + "\n";
  const auto t0 = std::chrono::steady_clock::now();
  while (tr->step_count() < tr->config().steps) {
    const auto b = tr->step();
    if (!std::isfinite(b.total)) {
      throw NumericalError("non-finite loss at step " + std::to_string(b.step));
    }
    rows += train::loss_csv_row(b) + "\n";
    if (!a.quiet && a.log_every > 0 && (b.step % a.log_every == 0 || b.step + 1 == tr->config().steps)) {
      out << "step " << b.step << " total " << b.total << " l2d " << b.l2d << " l3d " << b.l3d << "\n";
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  tr->save(a.out);
  if (append) {
    std::ofstream f(loss_path, std::ios::binary | std::ios::app);
    if (!f) throw std::runtime_error("cannot append to '" + loss_path.string() + "'");
    f << rows;
  } else {
    write_text(loss_path, rows);
  }
  out << "checkpoint at step " << tr->step_count() << " -> " << a.out << " (" << secs << " s); losses -> "
      << loss_path.string() << "\n";
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::vector<std::string> data;
  std::string ckpt;
  std::string mode = "temporal";
  double alpha = 0.05;
  std::optional<int> delta;
  std::vector<std::string> pool;
  bool ground_truth = false;
  std::string out;
  std::string json;
  std::string dynamics;
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  const auto model = body::load_model(a.model);
  const auto seqs = load_all(a.data);
  eval::MetricReport report;
  if (a.ground_truth) {
    std::vector<std::vector<double>> preds;
    for (const auto& s : seqs) {
      if (!s.has_theta()) throw data::DataError("--ground-truth needs theta_gt on sequence '" + s.id + "'");
      preds.push_back(s.theta_gt);
    }
    report = eval::evaluate_predictions(model, seqs, preds, a.alpha);
  } else {
    if (a.ckpt.empty()) throw UsageError("eval needs --ckpt (or --ground-truth)");
    const auto loaded = train::load_generator(a.ckpt);
    const auto pool = load_all(a.pool);
    eval::EvalOptions o;
    o.mode = eval::parse_mode(a.mode);
    o.alpha = a.alpha;
    if (a.delta) {
      o.delta = *a.delta;
    } else {
      // Largest configured future step.
      o.delta = 0;
      for (int s : loaded.encoder.delta_steps) o.delta = std::max(o.delta, s);
    }
    o.nn_pool = pool.empty() ? nullptr : &pool;
    report = eval::evaluate(model, loaded.generator, seqs, o);
  }
  emit(a.out, eval::metrics_csv(report), out);
  if (!a.json.empty()) emit(a.json, eval::report_json(report) + "\n", out);
  if (report.has_dynamics) {
    if (!a.dynamics.empty()) emit(a.dynamics, eval::dynamics_csv(report), out);
    else if (a.out.empty() || a.out == "-") out << eval::dynamics_csv(report);
  }
  return kOk;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string data;
  std::string ckpt;
  std::string seq;
  std::size_t frame = 0;
  std::optional<int> delta;
  std::string mode = "hallucinated";
  std::string out;
};

nlohmann::ordered_json body_dump(const body::BodyModel& model, std::span<const double> raw) {
  const auto th = body::ThetaFull::from_raw(raw);
  const auto verts = body::skin(model, th.shape, th.pose);
  const auto joints = body::regress_joints(model, verts);
  nlohmann::ordered_json j;
  j["theta"] = std::vector<double>(raw.begin(), raw.end());
  j["camera"] = {{"s", th.cam.s}, {"tx", th.cam.tx}, {"ty", th.cam.ty}};
  j["joints"] = joints;
  j["keypoints_2d"] = camera::project(joints, th.cam);
  j["vertices"] = verts;
  return j;
}

int predict_cmd(const PredictArgs& a, std::ostream& out) {
  const auto model = body::load_model(a.model);
  const auto seqs = data::load_dataset(a.data);
  if (seqs.empty()) throw data::DataError("dataset '" + a.data + "' is empty");
  const data::SequenceSample* s = &seqs.front();
  if (!a.seq.empty()) {
    s = nullptr;
    for (const auto& c : seqs)
      if (c.id == a.seq) s = &c;
    if (!s) throw data::DataError("no sequence '" + a.seq + "' in '" + a.data + "'");
  }
  if (a.frame >= s->frames) {
    throw data::DataError("frame " + std::to_string(a.frame) + " outside sequence '" + s->id + "' of " +
                          std::to_string(s->frames));
  }
  if (a.mode != "hallucinated" && a.mode != "temporal") {
    throw UsageError("--mode for predict is 'hallucinated' or 'temporal'");
  }
  const auto loaded = train::load_generator(a.ckpt);
  int delta = 0;
  if (a.delta) {
    delta = *a.delta;
  } else {
    for (int st : loaded.encoder.delta_steps) delta = std::max(delta, st);
  }
  if (delta <= 0 || !loaded.generator.has_delta(delta) || !loaded.generator.has_delta(-delta)) {
    throw UsageError("the checkpoint has no delta predictors for -" + std::to_string(delta) + "/+" +
                     std::to_string(delta));
  }
  const auto pred = eval::predict_dynamics(loaded.generator, *s, a.mode == "hallucinated");
  constexpr std::size_t kTh = body::kThetaDim, kP = body::kPoseDim;
  const std::span<const double> cur(pred.theta.data() + a.frame * kTh, kTh);

  nlohmann::ordered_json j;
  j["sequence"] = s->id;
  j["frame"] = a.frame;
  j["mode"] = a.mode;
  j["delta"] = delta;
  j["checkpoint_step"] = loaded.step;
  auto add = [&](const char* label, int offset, const std::vector<double>* poses) {
    std::vector<double> raw(cur.begin(), cur.end());
    if (poses) std::copy_n(poses->data() + a.frame * kP, kP, raw.begin() + body::kPoseOffset);
    auto e = body_dump(model, raw);
    e["offset"] = offset;
    j[label] = std::move(e);
  };
  add("past", -delta, &pred.pose.at(-delta));
  add("current", 0, nullptr);
  add("future", delta, &pred.pose.at(delta));
  emit(a.out, j.dump(1) + "\n", out);
  return kOk;
}

// ---- gradcheck -------------------------------------------------------------

struct GradArgs {
  train::GradSuiteOptions opts;
  std::string corrupt;
};

int gradcheck_cmd(const GradArgs& a, std::ostream& out) {
  ad::fault::corrupt_backward(a.corrupt);
  train::GradSuiteReport r;
  try {
    r = train::run_gradient_suite(a.opts);
  } catch (...) {
    ad::fault::clear();
    throw;
  }
  ad::fault::clear();
  if (!a.corrupt.empty()) out << "fault injected into the backward rule of '" << a.corrupt << "'\n";
  out << train::format_report(r);
  if (r.passed()) return kOk;
  // The op rows localize a broken rule; paths only show where it matters.
  std::vector<std::string> ops;
  for (const auto& row : r.rows)
    if (!row.passed && row.group == "op") ops.push_back(row.name);
  out << "FAILED";
  if (!ops.empty()) {
    out << " in op";
    for (const auto& o : ops) out << " " << o;
  }
  out << "\n";
  return kNumerical;
}

// ---- track -----------------------------------------------------------------

struct TrackArgs {
  std::string detections;
  std::size_t keypoints = 14;
  double min_conf = 0.0;
  data::LinkOptions link;
  std::string out;
};

int track_cmd(const TrackArgs& a, std::ostream& out) {
  const auto frames = data::load_detections(a.detections, a.keypoints, a.min_conf);
  const auto tracks = data::link_tracks(frames, a.link);
  std::string csv = "track,frame,detection,score\n";
  char buf[128];
  for (const auto& t : tracks) {
    for (const auto& e : t.entries) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f\n", t.id, e.frame, e.detection,
                    frames[e.frame].detections[e.detection].score);
      csv += buf;
    }
  }
  emit(a.out, csv, out);
  if (!a.out.empty() && a.out != "-") {
    out << tracks.size() << " tracks over " << frames.size() << " frames -> " << a.out << "\n";
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Toy-scale human mesh and motion recovery"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hmmr 0.1");

  GenModelArgs gm;
  auto* c_gm = app.add_subcommand("gen-model", "Write a deterministic toy body model");
  c_gm->add_option("--seed", gm.seed);
  c_gm->add_option("--vertices", gm.vertices)->check(CLI::PositiveNumber);
  c_gm->add_option("--keypoints", gm.keypoints)->check(CLI::PositiveNumber);
  c_gm->add_option("--out", gm.out, "Model file")->required();

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "Write a synthetic dataset rendered through a model");
  c_gd->add_option("--model", gd.model)->required()->check(CLI::ExistingFile);
  c_gd->add_option("--out", gd.out, "Dataset file")->required();
  c_gd->add_option("--seed", gd.cfg.seed);
  c_gd->add_option("--world-seed", gd.cfg.world_seed, "Pose basis and feature map; shared by train and test sets");
  c_gd->add_option("--n-seqs", gd.cfg.n_seqs);
  c_gd->add_option("--frames", gd.cfg.frames);
  c_gd->add_option("--fps", gd.cfg.fps);
  c_gd->add_option("--tier", gd.tier, "full3d, gt2d or pseudo2d");
  c_gd->add_option("--motion", gd.motion, "mixed, ballistic, sinusoid, ambiguous or constant");
  c_gd->add_option("--feature-dim", gd.cfg.feature_dim);
  c_gd->add_option("--feature-noise", gd.cfg.feature_noise);
  c_gd->add_option("--vis-dropout", gd.cfg.vis_dropout);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the networks; resumable from a checkpoint");
  c_tr->add_option("--model", tr.model)->required()->check(CLI::ExistingFile);
  c_tr->add_option("--data", tr.data, "Dataset file; repeat to mix tiers")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--config", tr.config, "key=value config file")->check(CLI::ExistingFile);
  c_tr->add_option("--set", tr.set, "Config override key=value; repeatable");
  c_tr->add_option("--seed", tr.seed);
  c_tr->add_option("--steps", tr.steps, "Total step count");
  c_tr->add_option("--delta-steps", tr.delta_steps, "Delta-frame offsets, e.g. -5,5");
  c_tr->add_option("--ckpt", tr.ckpt, "Checkpoint to resume from")->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "Checkpoint to write")->required();
  c_tr->add_option("--loss-csv", tr.loss_csv, "Loss history (default <out stem>_loss.csv)");
  c_tr->add_option("--log-every", tr.log_every);
  c_tr->add_flag("--quiet", tr.quiet);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Per-sequence and aggregate metrics");
  c_ev->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--ckpt", ev.ckpt)->check(CLI::ExistingFile);
  c_ev->add_option("--mode", ev.mode, "temporal, single-frame or hallucinated-dynamics");
  c_ev->add_option("--alpha", ev.alpha, "PCK threshold relative to the bounding box")->check(CLI::PositiveNumber);
  c_ev->add_option("--delta-steps", ev.delta, "Past/future offset for dynamics");
  c_ev->add_option("--pool", ev.pool, "Dataset for the nearest-neighbour baseline")->check(CLI::ExistingFile);
  c_ev->add_flag("--ground-truth", ev.ground_truth, "Score the ground truth itself");
  c_ev->add_option("--out", ev.out, "Metrics CSV (default stdout)");
  c_ev->add_option("--json", ev.json, "Full report as JSON");
  c_ev->add_option("--dynamics-csv", ev.dynamics, "Dynamics CSV");

  PredictArgs pr;
  auto* c_pr = app.add_subcommand("predict", "Dump past/current/future Theta, joints and vertices as JSON");
  c_pr->add_option("--model", pr.model)->required()->check(CLI::ExistingFile);
  c_pr->add_option("--data", pr.data)->required()->check(CLI::ExistingFile);
  c_pr->add_option("--ckpt", pr.ckpt)->required()->check(CLI::ExistingFile);
  c_pr->add_option("--seq", pr.seq, "Sequence id (default: first)");
  c_pr->add_option("--frame", pr.frame);
  c_pr->add_option("--delta-steps", pr.delta);
  c_pr->add_option("--mode", pr.mode, "hallucinated or temporal");
  c_pr->add_option("--out", pr.out, "JSON file (default stdout)");

  GradArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Compare every backward rule with central differences");
  c_gc->add_option("--tol", gc.opts.tol);
  c_gc->add_option("--coords", gc.opts.max_coords, "Coordinates per tensor, 0 for all");
  c_gc->add_option("--seed", gc.opts.seed);
  c_gc->add_option("--corrupt-op", gc.corrupt)->group("");

  TrackArgs tk;
  auto* c_tk = app.add_subcommand("track", "Link per-frame detections into tracks");
  c_tk->add_option("--detections", tk.detections)->required()->check(CLI::ExistingFile);
  c_tk->add_option("--keypoints", tk.keypoints)->check(CLI::PositiveNumber);
  c_tk->add_option("--min-conf", tk.min_conf);
  c_tk->add_option("--max-dist", tk.link.max_dist, "Relative to the track's bounding-box diagonal");
  c_tk->add_option("--gap", tk.link.gap, "Frames a track may stay unmatched");
  c_tk->add_option("--out", tk.out, "Tracks CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_gm->parsed()) return gen_model(gm, out);
    if (c_gd->parsed()) return gen_data(gd, out);
    if (c_tr->parsed()) return train_cmd(tr, out);
    if (c_ev->parsed()) return eval_cmd(ev, out);
    if (c_pr->parsed()) return predict_cmd(pr, out);
    if (c_gc->parsed()) return gradcheck_cmd(gc, out);
    if (c_tk->parsed()) return track_cmd(tk, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const eval::MetricError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const camera::CameraUnobservable& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}

}  // namespace hmmr::cli
