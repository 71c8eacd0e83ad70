#include <doctest.h>

#include <cmath>
#include <random>

#include "hmmr/ad/gradcheck.hpp"
#include "hmmr/ad/ops.hpp"
#include "hmmr/losses/losses.hpp"
#include "test_util.hpp"

using namespace hmmr;
using namespace hmmr::losses;
using ad::Tensor;
using ad::Var;

namespace {

using Vis = std::vector<std::uint8_t>;

double eval(const std::function<Var(ad::Graph&)>& f) {
  ad::Graph g;
  return f(g).value().item();
}

}  // namespace

TEST_CASE("2D loss examples") {
  Keypoints2D gt{{1, 2, 3, 4}, {1, 1}};
  CHECK(loss_2d(std::vector<double>{1, 2, 3, 4}, gt).value == 0.0);

  Keypoints2D one{{0, 0, 5, 5}, {1, 0}};
  const auto l = loss_2d(std::vector<double>{3, 4, -7, 9}, one);
  CHECK(l.value == 25.0);
  CHECK(l.has_signal);

  // moving the invisible point changes nothing
  CHECK(loss_2d(std::vector<double>{3, 4, 100, -100}, one).value == 25.0);

  Keypoints2D none{{0, 0, 0, 0}, {0, 0}};
  const auto z = loss_2d(std::vector<double>{1, 1, 1, 1}, none);
  CHECK(z.value == 0.0);
  CHECK_FALSE(z.has_signal);

  CHECK_THROWS_AS(loss_2d(std::vector<double>{1, 2}, gt), ad::ShapeError);
}

TEST_CASE("2D loss is the visible mean") {
  std::mt19937_64 rng(1);
  const std::size_t F = 4, k = 7;
  const auto pred = testutil::rand_tensor({F, 2 * k}, rng);
  const auto gt = testutil::randn(F * 2 * k, rng);
  Vis vis(F * k, 1);
  vis[3] = vis[8] = vis[9] = 0;
  for (std::size_t q = 0; q < k; ++q) vis[3 * k + q] = 0;
  ad::Graph g;
  std::vector<bool> sig;
  Var l = loss_2d(g.constant(pred), gt, vis, &sig);
  CHECK(sig == std::vector<bool>{true, true, true, false});
  for (std::size_t f = 0; f < F; ++f) {
    double acc = 0.0, n = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      if (!vis[f * k + q]) continue;
      n += 1.0;
      for (int a = 0; a < 2; ++a) {
        const double e = pred[f * 2 * k + 2 * q + a] - gt[f * 2 * k + 2 * q + a];
        acc += e * e;
      }
    }
    const double want = n > 0 ? acc / n : 0.0;
    CHECK(std::abs(l.value()[f] - want) < 1e-14);
  }

  auto f = [&](ad::Graph&, Var x) { return ad::sum(loss_2d(x, gt, vis)); };
  auto res = ad::finite_diff_check(f, pred);
  CHECK(res.passed(1e-4));

  // gradients at invisible coordinates are exactly zero
  ad::Graph g2;
  Var x = g2.leaf(pred);
  const auto gr = g2.backward(ad::sum(loss_2d(x, gt, vis))).wrt(x);
  CHECK(gr[6] == 0.0);
  CHECK(gr[7] == 0.0);
  for (std::size_t j = 0; j < 2 * k; ++j) CHECK(gr[3 * 2 * k + j] == 0.0);
}

TEST_CASE("3D loss examples") {
  body::ThetaFull a, b;
  CHECK(loss_3d(a, b) == 0.0);
  b.shape.beta[4] = 1.0;
  ThetaMask beta_only{true, false, false};
  CHECK(std::abs(loss_3d(a, b, beta_only) - 0.1) < 1e-15);
  // perturbing unsupervised parts leaves it unchanged
  b.pose.theta[7] = 3.0;
  b.cam = {2.0, 1.0, -1.0};
  CHECK(std::abs(loss_3d(a, b, beta_only) - 0.1) < 1e-15);
  // default mask: shape + pose, 82 components
  CHECK(std::abs(loss_3d(a, b) - 10.0 / 82.0) < 1e-15);
  const ThetaMask all{true, true, true};
  const double lcam = std::log(2.0);
  CHECK(std::abs(loss_3d(a, b, all) - (10.0 + lcam * lcam + 2.0) / 85.0) < 1e-15);

  std::mt19937_64 rng(2);
  const auto pred = testutil::rand_tensor({3, body::kThetaDim}, rng);
  const auto gt = testutil::randn(3 * body::kThetaDim, rng);
  CHECK(ad::finite_diff_check([&](ad::Graph&, Var x) { return ad::sum(loss_3d(x, gt)); }, pred).passed(1e-4));
  const auto pp = testutil::rand_tensor({2, body::kPoseDim}, rng);
  const auto pg = testutil::randn(2 * body::kPoseDim, rng);
  CHECK(ad::finite_diff_check([&](ad::Graph&, Var x) { return ad::sum(loss_3d_pose(x, pg)); }, pp).passed(1e-4));
}

TEST_CASE("adversarial losses") {
  auto gen = [](Tensor s) { return eval([&](ad::Graph& g) { return ad::sum(adv_generator_loss(g.constant(s))); }); };
  CHECK(gen(Tensor::full({1, 25}, 1.0)) == 0.0);
  CHECK(gen(Tensor::zeros({1, 25})) == 25.0);

  auto disc = [](Tensor r, Tensor f) {
    return eval([&](ad::Graph& g) { return adv_discriminator_loss(g.constant(r), g.constant(f)); });
  };
  CHECK(disc(Tensor::full({4, 25}, 1.0), Tensor::zeros({6, 25})) == 0.0);
  CHECK(disc(Tensor::full({4, 1}, 0.5), Tensor::full({3, 1}, 0.5)) == 0.5);
  CHECK(disc(Tensor::full({4, 25}, 0.5), Tensor::full({3, 25}, 0.5)) == 25 * 0.5);
  CHECK_THROWS_AS(disc(Tensor::zeros({2, 25}), Tensor::zeros({2, 24})), ad::ShapeError);

  std::mt19937_64 rng(3);
  const auto s = testutil::rand_tensor({3, 25}, rng);
  const auto fk = testutil::rand_tensor({5, 25}, rng);
  CHECK(ad::finite_diff_check([](ad::Graph&, Var x) { return ad::sum(adv_generator_loss(x)); }, s).passed(1e-4));
  CHECK(ad::finite_diff_check([&](ad::Graph& g, Var x) { return adv_discriminator_loss(x, g.constant(fk)); }, s)
            .passed(1e-4));
  CHECK(ad::finite_diff_check([&](ad::Graph& g, Var x) { return adv_discriminator_loss(g.constant(s), x); }, fk)
            .passed(1e-4));
}

TEST_CASE("shape prior") {
  body::ShapeParams b;
  CHECK(beta_prior(b) == 0.0);
  b.beta[0] = 1.0;
  CHECK(beta_prior(b) == 1.0);

  std::mt19937_64 rng(4);
  const auto beta = testutil::rand_tensor({2, 10}, rng);
  ad::Graph g;
  Var x = g.leaf(beta);
  const auto gr = g.backward(ad::sum(beta_prior(x))).wrt(x);
  for (std::size_t i = 0; i < 20; ++i) CHECK(gr[i] == 2.0 * beta[i]);
}

TEST_CASE("constant shape loss") {
  std::mt19937_64 rng(5);
  body::ShapeParams b;
  for (auto& v : b.beta) v = std::normal_distribution<double>()(rng);
  std::vector<body::ShapeParams> same(20, b);
  const auto c = const_shape_loss(same);
  CHECK(c.has_signal);
  CHECK(c.value == 0.0);

  body::ShapeParams b1 = b;
  b1.beta[0] += 1.0;
  std::vector<body::ShapeParams> alt = {b, b1, b};
  CHECK(std::abs(const_shape_loss(alt).value - 2.0) < 1e-12);

  std::vector<body::ShapeParams> single = {b};
  CHECK_FALSE(const_shape_loss(single).has_signal);
  CHECK(const_shape_loss(single).value == 0.0);

  // translation invariance
  const auto betas = testutil::rand_tensor({6, 10}, rng);
  const auto shift = testutil::randn(10, rng);
  std::vector<double> moved = betas.to_vector();
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += shift[i % 10];
  const double l0 = eval([&](ad::Graph& g) { return const_shape_loss(g.constant(betas)).value; });
  const double l1 = eval([&](ad::Graph& g) { return const_shape_loss(g.constant(Tensor({6, 10}, moved))).value; });
  CHECK(std::abs(l0 - l1) < 1e-12);

  CHECK(ad::finite_diff_check([](ad::Graph&, Var x) { return const_shape_loss(x).value; }, betas).passed(1e-4));

  // equal neighbours: gradient from the zero difference is exactly zero
  ad::Graph g;
  Var x = g.leaf(Tensor::full({3, 10}, 0.3));
  const auto gr = g.backward(const_shape_loss(x).value).wrt(x);
  for (double v : gr.data()) CHECK(v == 0.0);
}

TEST_CASE("hallucination loss target and stop-gradient") {
  std::mt19937_64 rng(6);
  const auto phi = testutil::rand_tensor({4, 8}, rng);
  const auto tilde = testutil::rand_tensor({4, 8}, rng);
  ad::Graph g;
  Var a = g.leaf(phi), b = g.leaf(tilde);
  Var l = hallucination_loss(a, b);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 8; ++c) s += std::pow(phi.at(r, c) - tilde.at(r, c), 2);
    CHECK(std::abs(l.value()[r] - std::sqrt(s)) < 1e-12);
  }
  const auto grads = g.backward(ad::sum(l));
  const Tensor ga0 = grads.wrt(a);
  for (double v : ga0.data()) CHECK(v == 0.0);

  ad::Graph g2;
  Var a2 = g2.leaf(phi), b2 = g2.leaf(tilde);
  const auto gr2 = g2.backward(ad::sum(hallucination_loss(a2, b2, false)));
  const Tensor ga = gr2.wrt(a2), gb = gr2.wrt(b2);
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(ga[i] + gb[i]) < 1e-15);
  CHECK(ad::finite_diff_check([&](ad::Graph& gg, Var x) { return ad::sum(hallucination_loss(gg.constant(phi), x)); },
                              tilde)
            .passed(1e-4));
}

TEST_CASE("losses are nonnegative and invariant to invisible points") {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t F = 3, k = 6;
    const auto pred = testutil::rand_tensor({F, 2 * k}, rng);
    auto gt = testutil::randn(F * 2 * k, rng);
    Vis vis(F * k);
    for (auto& v : vis) v = coin(rng);
    ad::Graph g;
    const Tensor l0 = loss_2d(g.constant(pred), gt, vis).value();
    auto p2 = pred.to_vector();
    for (std::size_t i = 0; i < F * k; ++i) {
      if (vis[i]) continue;
      gt[2 * i] = 1e6 * (trial + 1);
      p2[2 * i + 1] = -42.0;
    }
    const Tensor l1 = loss_2d(g.constant(Tensor({F, 2 * k}, p2)), gt, vis).value();
    CHECK(l0.identical(l1));
    for (double v : l0.data()) CHECK(v >= 0.0);
  }
}

TEST_CASE("composite objectives") {
  std::mt19937_64 rng(8);
  const std::size_t F = 5;
  LossWeights w;
  const auto t2 = testutil::rand_tensor({F}, rng), t3 = testutil::rand_tensor({F}, rng),
             ta = testutil::rand_tensor({F}, rng), tb = testutil::rand_tensor({F}, rng);
  const std::vector<double> rw = {1, 1, 0, 1, 1}, w3 = {1, 0, 1, 1, 0};

  ad::Graph g;
  FrameTerms terms{g.constant(t2), g.constant(t3), g.constant(ta), g.constant(tb)};
  const double fl = frame_loss(terms, w, rw, w3).value().item();
  double want = 0.0;
  for (std::size_t f = 0; f < F; ++f)
    want += rw[f] * (w.w_2d * t2[f] + w.w_3d * w3[f] * t3[f] + w.w_adv * ta[f] + w.w_beta * tb[f]);
  CHECK(std::abs(fl - want) < 1e-12);

  // no 3D term when nothing is supervised
  FrameTerms no3d{terms.l2d, {}, terms.adv, terms.beta};
  double want2 = 0.0;
  for (std::size_t f = 0; f < F; ++f) want2 += w.w_2d * t2[f] + w.w_adv * ta[f] + w.w_beta * tb[f];
  CHECK(std::abs(frame_loss(no3d, w).value().item() - want2) < 1e-12);

  // all-zero terms
  FrameTerms zero{g.constant(Tensor::zeros({F})), g.constant(Tensor::zeros({F})), g.constant(Tensor::zeros({F})),
                  g.constant(Tensor::zeros({F}))};
  CHECK(frame_loss(zero, w).value().item() == 0.0);

  // single frame, no deltas, no const term: equals the frame loss
  Var frames = frame_loss(terms, w, rw, w3);
  CHECK(temporal_objective(frames, {}, {}, w).value().item() == fl);
  Var zd[] = {g.constant(Tensor::scalar(0.0)), g.constant(Tensor::scalar(0.0))};
  CHECK(temporal_objective(frames, zd, {}, w).value().item() == fl);

  // hand-summed 5-frame case
  Var deltas[] = {g.constant(Tensor::scalar(1.5)), g.constant(Tensor::scalar(2.25))};
  ConstShape cs{g.constant(Tensor::scalar(0.75)), true};
  LossWeights w2 = w;
  w2.w_delta = 0.5;
  w2.w_const = 2.0;
  const double tmp = temporal_objective(frames, deltas, cs, w2).value().item();
  CHECK(std::abs(tmp - (fl + 0.5 * 3.75 + 2.0 * 0.75)) < 1e-12);

  Var hd[] = {g.constant(Tensor::scalar(4.0))};
  const double tot = total_objective(g.constant(Tensor::scalar(tmp)), g.constant(Tensor::scalar(3.0)),
                                     g.constant(Tensor::scalar(7.0)), hd, w2)
                         .value()
                         .item();
  CHECK(std::abs(tot - (tmp + w2.w_hal * 3.0 + 7.0 + 0.5 * 4.0)) < 1e-12);
  CHECK(total_objective(g.constant(Tensor::scalar(1.0)), g.constant(Tensor::scalar(0.0)),
                        g.constant(Tensor::scalar(0.0)), {}, w)
            .value()
            .item() == 1.0);
}

TEST_CASE("zero weight removes its gradient") {
  std::mt19937_64 rng(9);
  const auto x = testutil::rand_tensor({4}, rng);
  LossWeights w;
  w.w_adv = 0.0;
  ad::Graph g;
  Var adv = g.leaf(x);
  FrameTerms t{g.constant(x), {}, adv, g.constant(x)};
  const auto gr = g.backward(frame_loss(t, w)).wrt(adv);
  for (double v : gr.data()) CHECK(v == 0.0);
}

TEST_CASE("full frame composite gradient") {
  std::mt19937_64 rng(10);
  const std::size_t F = 3, k = 5;
  const auto gt2 = testutil::randn(F * 2 * k, rng);
  const auto gt3 = testutil::randn(F * body::kThetaDim, rng);
  Vis vis(F * k, 1);
  vis[4] = 0;
  const auto theta = testutil::rand_tensor({F, body::kThetaDim}, rng);
  auto f = [&](ad::Graph&, Var th) {
    Var x = ad::slice(th, 1, 0, 2 * k);
    Var beta = ad::slice(th, 1, 0, body::kNumBetas);
    Var sc = ad::slice(th, 1, 0, 25);
    FrameTerms t{loss_2d(x, gt2, vis), loss_3d(th, gt3), adv_generator_loss(sc), beta_prior(beta)};
    return ad::add(frame_loss(t, {}, {}, std::vector<double>{1, 0, 1}), const_shape_loss(beta).value);
  };
  CHECK(ad::finite_diff_check(f, theta).passed(1e-4));
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.w_const = -1.0;
  CHECK_THROWS_WITH_AS(w.validate(), doctest::Contains("w_const"), std::invalid_argument);
  w.w_const = 1.0;
  w.w_hal = std::nan("");
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
