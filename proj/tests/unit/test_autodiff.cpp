#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "hmmr/ad/gradcheck.hpp"
#include "hmmr/ad/ops.hpp"
#include "test_util.hpp"

using namespace hmmr;
using namespace hmmr::ad;

namespace {

// sum(y * R) for a fixed random R, so every output coordinate matters.
Var probe(Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Graph& g = *y.graph();
  return sum(mul(y, g.constant(testutil::rand_tensor(y.shape(), rng))));
}

struct OpCase {
  const char* name;
  Shape input;
  std::function<Var(Graph&, Var, std::mt19937_64&)> build;
};

std::vector<OpCase> op_cases() {
  auto cst = [](Graph& g, Shape s, std::mt19937_64& r) { return g.constant(testutil::rand_tensor(s, r)); };
  return {
      {"add_lhs", {3, 4}, [=](Graph& g, Var x, auto& r) { return add(x, cst(g, {3, 4}, r)); }},
      {"add_rhs", {3, 4}, [=](Graph& g, Var x, auto& r) { return add(cst(g, {3, 4}, r), x); }},
      {"sub", {3, 4}, [=](Graph& g, Var x, auto& r) { return sub(cst(g, {3, 4}, r), x); }},
      {"mul", {3, 4}, [=](Graph& g, Var x, auto& r) { return mul(x, cst(g, {3, 4}, r)); }},
      {"mul_self", {5}, [](Graph&, Var x, auto&) { return mul(x, x); }},
      {"scale", {2, 3}, [](Graph&, Var x, auto&) { return scale(x, -1.7); }},
      {"add_scalar", {2, 3}, [](Graph&, Var x, auto&) { return add_scalar(x, 0.3); }},
      {"matmul_lhs", {3, 4}, [=](Graph& g, Var x, auto& r) { return matmul(x, cst(g, {4, 5}, r)); }},
      {"matmul_rhs", {4, 5}, [=](Graph& g, Var x, auto& r) { return matmul(cst(g, {3, 4}, r), x); }},
      {"matmul_vec", {4}, [=](Graph& g, Var x, auto& r) { return matmul(cst(g, {3, 4}, r), x); }},
      {"add_row_bias_x", {3, 4}, [=](Graph& g, Var x, auto& r) { return add_row_bias(x, cst(g, {4}, r)); }},
      {"add_row_bias_b", {4}, [=](Graph& g, Var x, auto& r) { return add_row_bias(cst(g, {3, 4}, r), x); }},
      {"mul_cols_x", {3, 4}, [=](Graph& g, Var x, auto& r) { return mul_cols(x, cst(g, {4}, r)); }},
      {"mul_cols_w", {4}, [=](Graph& g, Var x, auto& r) { return mul_cols(cst(g, {3, 4}, r), x); }},
      {"transpose", {3, 5}, [](Graph&, Var x, auto&) { return transpose(x); }},
      {"reshape", {3, 4}, [](Graph&, Var x, auto&) { return reshape(x, {2, 6}); }},
      {"concat_rows", {2, 3},
       [=](Graph& g, Var x, auto& r) {
         Var parts[] = {x, cst(g, {1, 3}, r), x};
         return concat(parts, 0);
       }},
      {"concat_cols", {2, 3},
       [=](Graph& g, Var x, auto& r) {
         Var parts[] = {cst(g, {2, 2}, r), x};
         return concat(parts, 1);
       }},
      {"concat_vec", {3},
       [=](Graph& g, Var x, auto& r) {
         Var parts[] = {x, cst(g, {2}, r)};
         return concat(parts, 0);
       }},
      {"slice_rows", {5, 3}, [](Graph&, Var x, auto&) { return slice(x, 0, 1, 4); }},
      {"slice_cols", {3, 6}, [](Graph&, Var x, auto&) { return slice(x, 1, 2, 5); }},
      {"gather_rows", {4, 3},
       [](Graph&, Var x, auto&) {
         const std::size_t idx[] = {2, 0, 2, 3};
         return gather_rows(x, idx);
       }},
      {"relu", {4, 5}, [](Graph&, Var x, auto&) { return relu(x); }},
      {"exp", {4}, [](Graph&, Var x, auto&) { return exp(x); }},
      {"dropout", {3, 4},
       [](Graph&, Var x, auto& r) { return dropout(x, make_dropout_mask({3, 4}, 0.3, r)); }},
      {"sum", {3, 2}, [](Graph&, Var x, auto&) { return sum(x); }},
      {"mean", {3, 2}, [](Graph&, Var x, auto&) { return mean(x); }},
      {"row_sum", {3, 4}, [](Graph&, Var x, auto&) { return row_sum(x); }},
      {"row_norm", {3, 4}, [](Graph&, Var x, auto&) { return row_norm(x); }},
      {"conv1d_x", {3, 9},
       [=](Graph& g, Var x, auto& r) { return conv1d(x, cst(g, {2, 3, 3}, r), cst(g, {2}, r)); }},
      {"conv1d_w", {2, 3, 3},
       [=](Graph& g, Var w, auto& r) { return conv1d(cst(g, {3, 9}, r), w, cst(g, {2}, r)); }},
      {"conv1d_b", {2},
       [=](Graph& g, Var b, auto& r) { return conv1d(cst(g, {3, 9}, r), cst(g, {2, 3, 5}, r), b); }},
      {"group_norm_x", {8, 5},
       [=](Graph& g, Var x, auto& r) { return group_norm(x, cst(g, {8}, r), cst(g, {8}, r), 2); }},
      {"group_norm_gamma", {8},
       [=](Graph& g, Var w, auto& r) { return group_norm(cst(g, {8, 5}, r), w, cst(g, {8}, r), 4); }},
      {"group_norm_beta", {8},
       [=](Graph& g, Var b, auto& r) { return group_norm(cst(g, {8, 5}, r), cst(g, {8}, r), b, 4); }},
  };
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at(1, 2) == 6);
  Tensor r = t.reshaped({3, 2});
  CHECK(r.ptr() == t.ptr());
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
}

TEST_CASE("forward identities") {
  Graph g;
  std::mt19937_64 rng(1);
  SUBCASE("matmul with identity") {
    Var I = g.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    Var v = g.constant(Tensor::vector({0.3, -2.0, 7.5}));
    CHECK(matmul(I, v).value().to_vector() == v.value().to_vector());
  }
  SUBCASE("conv1d with a unit kernel") {
    Tensor s = testutil::rand_tensor({1, 11}, rng);
    Var y = conv1d(g.constant(s), g.constant(Tensor({1, 1, 1}, {1.0})), g.constant(Tensor::vector({0.0})));
    CHECK(y.value().identical(s));
  }
  SUBCASE("group norm of a constant group is zero") {
    Var x = g.constant(Tensor::full({4, 6}, 3.25));
    Var y = group_norm(x, g.constant(Tensor::full({4}, 1.0)), g.constant(Tensor::zeros({4})), 1);
    for (double v : y.value().data()) CHECK(std::abs(v) < 1e-6);
  }
}

TEST_CASE("shape mismatches report both shapes") {
  Graph g;
  Var a = g.constant(Tensor::zeros({2, 3}));
  Var b = g.constant(Tensor::zeros({3, 2}));
  try {
    add(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(conv1d(a, g.constant(Tensor::zeros({1, 3, 2})), g.constant(Tensor::zeros({1}))),
                  ShapeError);
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(2);
  ParameterSet ps;
  const Tensor p0 = testutil::rand_tensor({2, 3}, rng);
  ps.add("p", p0);
  SUBCASE("sum gives ones") {
    Graph g;
    Var p = g.parameter(ps, 0);
    const Tensor gp = g.backward(sum(p)).param(ps, 0);
    for (double v : gp.data()) CHECK(v == 1.0);
  }
  SUBCASE("sum of squares gives 2p") {
    Graph g;
    Var p = g.parameter(ps, 0);
    auto grads = g.backward(sum(mul(p, p)));
    auto gp = grads.param(ps, 0);
    for (std::size_t i = 0; i < p0.size(); ++i) CHECK(gp[i] == 2.0 * p0[i]);
  }
  SUBCASE("non-scalar loss rejected") {
    Graph g;
    Var p = g.parameter(ps, 0);
    CHECK_THROWS_AS(g.backward(p), ShapeError);
  }
  SUBCASE("untrainable binding receives no gradient") {
    Graph g;
    Var p = g.parameter(ps, 0, false);
    const Tensor gp = g.backward(sum(mul(p, p))).param(ps, 0);
    for (double v : gp.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("every op passes random finite-difference checks") {
  for (const auto& c : op_cases()) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::mt19937_64 rng(1000 + trial);
      const Tensor x = testutil::rand_tensor(c.input, rng);
      const std::uint64_t s = rng();
      auto f = [&](Graph& g, Var leaf) {
        std::mt19937_64 r(s);
        Var y = c.build(g, leaf, r);
        return y.size() == 1 && y.shape().size() == 1 ? sum(y) : probe(y, s + 1);
      };
      auto res = finite_diff_check(f, x);
      CHECK(res.non_finite.empty());
      worst = std::max(worst, res.max_rel_error);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("finite_diff_check on sum of squares is tight") {
  std::mt19937_64 rng(3);
  auto res = finite_diff_check([](Graph&, Var p) { return sum(mul(p, p)); },
                               testutil::rand_tensor({4, 4}, rng));
  CHECK(res.max_rel_error < 1e-9);
  CHECK(res.checked == 16);
}

TEST_CASE("finite_diff_check reports non-finite coordinates") {
  auto res = finite_diff_check([](Graph&, Var p) { return sum(exp(scale(p, 1000.0))); },
                               Tensor::vector({0.0, 1.0}));
  CHECK_FALSE(res.non_finite.empty());
  CHECK_FALSE(res.passed(1e-4));
}

TEST_CASE("corrupted backward rule is caught") {
  std::mt19937_64 rng(4);
  const Tensor x = testutil::rand_tensor({3, 4}, rng);
  auto f = [](Graph&, Var p) { return probe(relu(add_scalar(p, 0.5)), 9); };
  fault::corrupt_backward("add_scalar");
  auto bad = finite_diff_check(f, x);
  fault::clear();
  auto good = finite_diff_check(f, x);
  CHECK_FALSE(bad.passed(1e-4));
  CHECK(good.passed(1e-4));
}

TEST_CASE("determinism and linearity of backward") {
  std::mt19937_64 rng(5);
  ParameterSet ps;
  ps.add("w", testutil::rand_tensor({6, 5}, rng));
  ps.add("b", testutil::rand_tensor({5}, rng));
  const Tensor x = testutil::rand_tensor({4, 6}, rng);
  auto model = [&](Graph& g) {
    return relu(add_row_bias(matmul(g.constant(x), g.parameter(ps, 0)), g.parameter(ps, 1)));
  };
  auto f = [&](Graph& g) { return probe(model(g), 21); };
  auto h = [&](Graph& g) { return sum(mul(model(g), model(g))); };

  Graph g1, g2;
  auto a = g1.backward(f(g1)).for_set(ps);
  auto b = g2.backward(f(g2)).for_set(ps);
  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(a[i].identical(b[i]));

  Graph gf, gh, gc;
  auto df = gf.backward(f(gf)).for_set(ps);
  auto dh = gh.backward(h(gh)).for_set(ps);
  auto dc = gc.backward(add(scale(f(gc), 2.5), scale(h(gc), -0.75))).for_set(ps);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = 0; j < dc[i].size(); ++j) {
      CHECK(std::abs(dc[i][j] - (2.5 * df[i][j] - 0.75 * dh[i][j])) < 1e-10);
    }
  }
}

TEST_CASE("check_parameters restores values and flags each tensor") {
  std::mt19937_64 rng(6);
  ParameterSet ps;
  ps.add("w", testutil::rand_tensor({3, 2}, rng));
  ps.add("v", testutil::rand_tensor({2}, rng));
  const Tensor w0 = ps.value(0);
  auto results = check_parameters(ps, [&](Graph& g) {
    return sum(mul(matmul(g.parameter(ps, 0), g.parameter(ps, 1)), g.constant(Tensor::vector({1, -2, 3}))));
  });
  REQUIRE(results.size() == 2);
  CHECK(results[0].name == "w");
  for (const auto& r : results) CHECK(r.result.passed(1e-6));
  CHECK(ps.value(0).identical(w0));
}

TEST_CASE("dropout masks are deterministic and scaled") {
  std::mt19937_64 r1(7), r2(7);
  Tensor a = make_dropout_mask({10, 10}, 0.2, r1);
  Tensor b = make_dropout_mask({10, 10}, 0.2, r2);
  CHECK(a.identical(b));
  for (double v : a.data()) CHECK((v == 0.0 || std::abs(v - 1.25) < 1e-15));
}
