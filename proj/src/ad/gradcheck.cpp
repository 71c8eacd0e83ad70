#include "hmmr/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hmmr::ad {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, const GradCheckOptions& opts,
                                     std::uint64_t salt) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (opts.max_coords == 0 || opts.max_coords >= n) return idx;
  std::mt19937_64 rng(opts.seed ^ (salt * 0x9E3779B97F4A7C15ull));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(opts.max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Central difference along coordinate i of a flat vector.
template <typename Eval>
double central(Eval&& eval, std::vector<double>& v, std::size_t i, double h) {
  const double orig = v[i];
  v[i] = orig + h;
  const double fp = eval(v);
  v[i] = orig - h;
  const double fm = eval(v);
  v[i] = orig;
  return (fp - fm) / (2.0 * h);
}

template <typename Eval>
void compare(Eval&& eval, std::vector<double> v, const Tensor& analytic,
             const std::vector<std::size_t>& coords, const GradCheckOptions& opts,
             GradCheckResult& res) {
  for (std::size_t i : coords) {
    const double a = analytic[i];
    double num = central(eval, v, i, opts.h);
    if (!std::isfinite(a) || !std::isfinite(num)) {
      res.non_finite.push_back(i);
      continue;
    }
    double err = relative_error(a, num);
    for (double h = opts.h / 10.0; err > opts.retry_above && h >= opts.h / 100.0; h /= 10.0) {
      num = central(eval, v, i, h);
      if (std::isfinite(num)) err = std::min(err, relative_error(a, num));
    }
    ++res.checked;
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = i;
    }
  }
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& p,
                                  const GradCheckOptions& opts) {
  if (!(opts.h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  Tensor analytic;
  {
    Graph g;
    Var leaf = g.leaf(p);
    Var loss = f(g, leaf);
    analytic = g.backward(loss).wrt(leaf);
  }
  auto eval = [&](const std::vector<double>& v) {
    Graph g;
    Var leaf = g.leaf(Tensor(p.shape(), v));
    return f(g, leaf).value().item();
  };
  GradCheckResult res;
  compare(eval, p.to_vector(), analytic, pick_coords(p.size(), opts, 0), opts, res);
  return res;
}

std::vector<ParamCheck> check_parameters(ParameterSet& set,
                                         const std::function<Var(Graph&)>& build,
                                         const GradCheckOptions& opts,
                                         const std::function<bool(const std::string&)>& include) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    Var loss = build(g);
    analytic = g.backward(loss).for_set(set);
  }
  std::vector<ParamCheck> out;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (include && !include(set.name(k))) continue;
    const Tensor original = set.value(k);
    auto eval = [&](const std::vector<double>& v) {
      set.set_value(k, Tensor(original.shape(), v));
      Graph g;
      return build(g).value().item();
    };
    GradCheckResult res;
    compare(eval, original.to_vector(), analytic[k], pick_coords(original.size(), opts, k + 1),
            opts, res);
    set.set_value(k, original);
    out.push_back({set.name(k), res});
  }
  return out;
}

}  // namespace hmmr::ad
