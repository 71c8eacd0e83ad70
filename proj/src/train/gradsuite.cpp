#include "hmmr/train/gradsuite.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "hmmr/ad/gradcheck.hpp"
#include "hmmr/ad/ops.hpp"
#include "hmmr/body/body_ops.hpp"
#include "hmmr/camera/camera.hpp"
#include "hmmr/data/synthetic.hpp"
#include "hmmr/losses/losses.hpp"
#include "hmmr/nets/nets.hpp"
#include "hmmr/train/trainer.hpp"

namespace hmmr::train {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

bool GradSuiteReport::passed() const {
  for (const auto& r : rows)
    if (!r.passed) return false;
  return !rows.empty();
}

std::vector<std::string> GradSuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (!r.passed) out.push_back(r.group + ":" + r.name);
  return out;
}

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Weighted sum with fixed random weights, so every output coordinate
// contributes a distinct amount to the scalar.
Var project_scalar(Graph& g, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, g.constant(randn(y.value().shape(), rng))));
}

struct Suite {
  GradSuiteOptions opts;
  ad::GradCheckOptions gc;
  GradSuiteReport report;

  void add(const std::string& group, const std::string& name, const ad::GradCheckResult& r,
           const std::string& worst = {}) {
    report.rows.push_back({group, name, r.max_rel_error, r.checked, r.non_finite.size(), worst,
                           r.passed(opts.tol)});
  }

  void add_params(const std::string& name, const std::vector<ad::ParamCheck>& checks) {
    GradSuiteRow row;
    row.group = "path";
    row.name = name;
    for (const auto& c : checks) {
      row.checked += c.result.checked;
      row.non_finite += c.result.non_finite.size();
      if (c.result.max_rel_error >= row.max_rel_error) {
        row.max_rel_error = c.result.max_rel_error;
        row.worst = c.name;
      }
    }
    row.passed = row.checked > 0 && row.non_finite == 0 && row.max_rel_error < opts.tol;
    report.rows.push_back(row);
  }

  // Leaf check of f at input p.
  void leaf(const std::string& group, const std::string& name, const Tensor& p, const ad::ScalarFn& f) {
    add(group, name, ad::finite_diff_check(f, p, gc));
  }
};

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

void op_rows(Suite& st, std::mt19937_64& rng) {
  auto cst = [&](Graph& g, Shape s, std::uint64_t salt) {
    std::mt19937_64 r(salt);
    return g.constant(randn(std::move(s), r));
  };
  std::mt19937_64 mask_rng(st.opts.seed + 17);
  const Tensor mask = ad::make_dropout_mask({3, 4}, 0.3, mask_rng);
  struct Case {
    const char* name;
    Shape shape;
    std::function<Var(Graph&, Var)> f;
  };
  const std::vector<Case> cases = {
      {"add", {3, 4}, [&](Graph& g, Var x) { return ad::add(x, cst(g, {3, 4}, 1)); }},
      {"sub", {3, 4}, [&](Graph& g, Var x) { return ad::sub(cst(g, {3, 4}, 2), x); }},
      {"mul", {3, 4}, [&](Graph&, Var x) { return ad::mul(x, x); }},
      {"scale", {5}, [&](Graph&, Var x) { return ad::scale(x, -1.3); }},
      {"add_scalar", {5}, [&](Graph&, Var x) { return ad::add_scalar(x, 0.7); }},
      {"matmul", {3, 4}, [&](Graph& g, Var x) { return ad::matmul(x, cst(g, {4, 2}, 3)); }},
      {"add_row_bias", {4}, [&](Graph& g, Var x) { return ad::add_row_bias(cst(g, {3, 4}, 4), x); }},
      {"mul_cols", {4}, [&](Graph& g, Var x) { return ad::mul_cols(cst(g, {3, 4}, 5), x); }},
      {"transpose", {3, 4}, [&](Graph&, Var x) { return ad::transpose(x); }},
      {"reshape", {3, 4}, [&](Graph&, Var x) { return ad::reshape(x, {2, 6}); }},
      {"concat", {2, 3},
       [&](Graph& g, Var x) {
         const Var parts[] = {x, cst(g, {2, 2}, 6)};
         return ad::concat(parts, 1);
       }},
      {"slice", {4, 3}, [&](Graph&, Var x) { return ad::slice(x, 0, 1, 3); }},
      {"gather_rows", {4, 3},
       [&](Graph&, Var x) {
         const std::size_t rows[] = {3, 0, 3};
         return ad::gather_rows(x, rows);
       }},
      {"relu", {3, 4}, [&](Graph&, Var x) { return ad::relu(x); }},
      {"exp", {5}, [&](Graph&, Var x) { return ad::exp(x); }},
      {"dropout", {3, 4}, [&](Graph&, Var x) { return ad::dropout(x, mask); }},
      {"sum", {3, 4}, [&](Graph&, Var x) { return ad::scale(ad::sum(x), 1.7); }},
      {"mean", {3, 4}, [&](Graph&, Var x) { return ad::mean(x); }},
      {"row_sum", {3, 4}, [&](Graph&, Var x) { return ad::row_sum(x); }},
      {"row_norm", {3, 4}, [&](Graph&, Var x) { return ad::row_norm(x); }},
      {"conv1d", {4, 7},
       [&](Graph& g, Var x) { return ad::conv1d(x, cst(g, {3, 4, 3}, 8), cst(g, {3}, 9)); }},
      {"group_norm", {4, 5},
       [&](Graph& g, Var x) { return ad::group_norm(x, cst(g, {4}, 10), cst(g, {4}, 11), 2); }},
  };
  for (const auto& c : cases) {
    const Tensor p = randn(c.shape, rng);
    st.leaf("op", c.name, p, [&](Graph& g, Var x) {
      Var y = c.f(g, x);
      return y.value().size() == 1 ? y : project_scalar(g, y, 99);
    });
  }
}

void body_rows(Suite& st, const body::BodyModel& model, std::mt19937_64& rng) {
  constexpr std::size_t F = 2;
  const Tensor pose = randn({F, body::kPoseDim}, rng, 0.4);
  const Tensor beta = randn({F, body::kNumBetas}, rng, 0.5);
  st.leaf("op", "rodrigues", pose, [&](Graph& g, Var x) { return project_scalar(g, body::rodrigues(x), 1); });
  st.leaf("op", "blend_skin(pose)", pose, [&](Graph& g, Var x) {
    return project_scalar(g, body::run_body(model, g.constant(beta), x).vertices, 2);
  });
  st.leaf("op", "blend_skin(beta)", beta, [&](Graph& g, Var x) {
    return project_scalar(g, body::run_body(model, x, g.constant(pose)).vertices, 3);
  });
  st.leaf("op", "regress_keypoints", pose, [&](Graph& g, Var x) {
    return project_scalar(g, body::run_body(model, g.constant(beta), x).keypoints, 4);
  });
}

void loss_rows(Suite& st, const body::BodyModel& model, const nets::Discriminators& disc, std::mt19937_64& rng) {
  constexpr std::size_t F = 3;
  const std::size_t k = model.n_keypoints();
  std::bernoulli_distribution seen(0.8);
  std::vector<std::uint8_t> vis(F * k);
  for (auto& v : vis) v = seen(rng) ? 1 : 0;
  const auto gt2 = randn({F * 2 * k}, rng).to_vector();
  const auto gt_theta = randn({F * body::kThetaDim}, rng, 0.3).to_vector();
  const auto gt_pose = randn({F * body::kPoseDim}, rng, 0.3).to_vector();
  losses::ThetaMask all{true, true, true};

  st.leaf("loss", "loss_2d", randn({F, 2 * k}, rng),
          [&](Graph& g, Var x) { return project_scalar(g, losses::loss_2d(x, gt2, vis), 5); });
  st.leaf("loss", "loss_3d", randn({F, body::kThetaDim}, rng, 0.3),
          [&](Graph& g, Var x) { return project_scalar(g, losses::loss_3d(x, gt_theta, all), 6); });
  st.leaf("loss", "loss_3d_pose", randn({F, body::kPoseDim}, rng, 0.3),
          [&](Graph& g, Var x) { return project_scalar(g, losses::loss_3d_pose(x, gt_pose), 7); });
  st.leaf("loss", "adv_generator", randn({F, nets::Discriminators::kCount}, rng),
          [&](Graph& g, Var x) { return project_scalar(g, losses::adv_generator_loss(x), 8); });
  const Tensor real = randn({F, nets::Discriminators::kCount}, rng);
  st.leaf("loss", "adv_discriminator", randn({F, nets::Discriminators::kCount}, rng),
          [&](Graph& g, Var x) { return losses::adv_discriminator_loss(g.constant(real), x); });
  st.leaf("loss", "beta_prior", randn({F, body::kNumBetas}, rng),
          [&](Graph& g, Var x) { return project_scalar(g, losses::beta_prior(x), 9); });
  st.leaf("loss", "const_shape", randn({F, body::kNumBetas}, rng),
          [&](Graph&, Var x) { return losses::const_shape_loss(x).value; });
  const Tensor phi = randn({F, 8}, rng);
  st.leaf("loss", "hallucination", randn({F, 8}, rng), [&](Graph& g, Var x) {
    return project_scalar(g, losses::hallucination_loss(g.leaf(phi), x, false), 10);
  });
  const Tensor x_orth = randn({F, 2 * k}, rng);
  for (auto mode : {camera::CameraGradient::Full, camera::CameraGradient::Fixed}) {
    st.leaf("loss", mode == camera::CameraGradient::Full ? "optimal_camera(full)" : "optimal_camera(fixed)", x_orth,
            [&, mode](Graph& g, Var x) {
              return project_scalar(g, camera::optimal_camera_residual(x, gt2, vis, mode), 11);
            });
  }
  const Tensor joints = randn({F, 3 * k}, rng);
  const Tensor cam_s = Tensor({F, 1}, {0.8, 1.1, 1.4});
  const Tensor cam_t = randn({F, 2}, rng, 0.1);
  st.leaf("loss", "project", joints, [&](Graph& g, Var x) {
    return project_scalar(g, camera::project(x, g.constant(cam_s), g.constant(cam_t)), 12);
  });
  const Tensor beta = randn({F, body::kNumBetas}, rng, 0.5);
  st.leaf("loss", "disc_scores(pose)", randn({F, body::kPoseDim}, rng, 0.4), [&](Graph& g, Var x) {
    return losses::weighted_sum(losses::adv_generator_loss(disc.scores_from_pose(g, x, g.constant(beta), false)),
                                std::vector<double>(F, 1.0));
  });
}

}  // namespace

GradSuiteReport run_gradient_suite(const GradSuiteOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Suite st;
  st.opts = opts;
  st.gc.max_coords = opts.max_coords;
  st.gc.seed = derive_seed(opts.seed, 0x6763);
  st.report.tol = opts.tol;

  const body::BodyModel model = body::make_toy_model(opts.seed);

  nets::EncoderConfig enc;
  enc.feature_dim = 40;
  enc.n_blocks = 1;
  enc.groups = 4;
  enc.ief_iters = 2;
  enc.ief_hidden = 16;
  enc.delta_steps = {-2, 2};
  enc.hal_hidden = 16;
  enc.disc_hidden = 8;
  enc.out_init_scale = 0.5;
  nets::Generator gen(enc, derive_seed(opts.seed, 1));
  nets::Discriminators disc(enc, derive_seed(opts.seed, 2));

  // One sequence with 3D ground truth; one 2D-only with missing keypoints
  // and a filtered frame.
  data::SyntheticConfig sc;
  sc.n_seqs = 1;
  sc.frames = 10;
  sc.feature_dim = enc.feature_dim;
  sc.seed = derive_seed(opts.seed, 3);
  std::vector<data::SequenceSample> batch = data::gen_synthetic_dataset(model, sc);
  sc.seed = derive_seed(opts.seed, 4);
  sc.tier = data::Tier::GT2D;
  sc.vis_dropout = 0.2;
  auto more = data::gen_synthetic_dataset(model, sc);
  more[0].excluded.assign(more[0].frames, 0);
  more[0].excluded[6] = 1;
  batch.push_back(std::move(more[0]));

  std::mt19937_64 rng(derive_seed(opts.seed, 5));
  op_rows(st, rng);
  body_rows(st, model, rng);
  loss_rows(st, model, disc, rng);

  auto path = [&](const std::string& name, TrainConfig cfg, std::function<bool(const std::string&)> include) {
    // Fresh rng and dropout source per build keep every evaluation on the
    // same centers and masks.
    auto build = [&](Graph& g) {
      std::mt19937_64 centers(derive_seed(opts.seed, 6));
      nets::DropoutSource drop(enc.dropout_rate, derive_seed(opts.seed, 7));
      ObjectiveInputs in{&model, &gen, &disc, &cfg, true};
      return build_objective(g, in, batch, centers, &drop).total;
    };
    st.add_params(name, ad::check_parameters(gen.params(), build, st.gc, include));
  };

  TrainConfig base;
  base.seq_len = sc.frames;
  base.delta_centers = 2;

  TrainConfig temporal = base;
  temporal.hallucinator = false;
  temporal.weights.w_delta = 0.0;
  path("f_movie->f_3D->losses", temporal, [](const std::string& n) {
    return starts_with(n, "movie.") || starts_with(n, "ief.");
  });

  TrainConfig delta = base;
  delta.hallucinator = false;
  // Delta frames reuse the per-frame weights, so only the terms without a
  // delta counterpart are switched off.
  delta.weights.w_const = 0.0;
  for (auto mode : {camera::CameraGradient::Full, camera::CameraGradient::Fixed}) {
    delta.delta_camera = mode;
    path(mode == camera::CameraGradient::Full ? "f_delta+optimal_camera" : "f_delta+fixed_camera", delta,
         [](const std::string& n) { return !starts_with(n, "hal."); });
  }

  TrainConfig hal = base;
  path("hallucinator", hal, [](const std::string& n) { return starts_with(n, "hal."); });
  hal.hal_stop_gradient = false;
  path("hallucinator(no stop)", hal, {});

  // Discriminator loss against fixed real and fake rows.
  {
    const std::size_t n = 4;
    const Tensor real_pose = randn({n, body::kPoseDim}, rng, 0.3);
    const Tensor fake_pose = randn({n, body::kPoseDim}, rng, 0.3);
    const Tensor real_beta = randn({n, body::kNumBetas}, rng, 0.5);
    const Tensor fake_beta = randn({n, body::kNumBetas}, rng, 0.5);
    auto build = [&](Graph& g) {
      Var real = disc.scores_from_pose(g, g.constant(real_pose), g.constant(real_beta));
      Var fake = disc.scores_from_pose(g, g.constant(fake_pose), g.constant(fake_beta));
      return losses::adv_discriminator_loss(real, fake);
    };
    st.add_params("discriminators", ad::check_parameters(disc.params(), build, st.gc));
  }

  st.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st.report;
}

std::string format_report(const GradSuiteReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-26s %12s %8s  %-4s  %s\n", "group", "name", "max_rel_err", "coords", "ok",
                "worst");
  out += buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-6s %-26s %12.3e %8zu  %-4s  %s\n", row.group.c_str(), row.name.c_str(),
                  row.max_rel_error, row.checked, row.passed ? "PASS" : "FAIL", row.worst.c_str());
    out += buf;
  }
  const auto failed = r.failures();
  std::snprintf(buf, sizeof buf, "%zu/%zu checks passed (tol %.0e, %.1f s)\n", r.rows.size() - failed.size(),
                r.rows.size(), r.tol, r.seconds);
  out += buf;
  return out;
}

}  // namespace hmmr::train
