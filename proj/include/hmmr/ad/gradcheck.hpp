#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hmmr/ad/graph.hpp"

namespace hmmr::ad {

struct GradCheckOptions {
  double h = 1e-5;
  // Coordinates whose error exceeds this are re-probed with h/10 and h/100;
  // the smallest error is kept. A central difference whose stencil straddles
  // a ReLU kink is the usual cause and shrinks with h; a wrong rule does not.
  double retry_above = 1e-4;
  // 0 checks every coordinate; otherwise a seeded subset of this size.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0x5eed;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Coordinates where either gradient was not finite.
  std::vector<std::size_t> non_finite;

  bool passed(double tol) const { return non_finite.empty() && max_rel_error < tol; }
};

// |analytic - numeric| / max(1, |numeric|)
double relative_error(double analytic, double numeric);

using ScalarFn = std::function<Var(Graph&, Var)>;

// Builds f around a leaf holding p, compares backward() against central
// differences of the forward value.
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& p,
                                  const GradCheckOptions& opts = {});

struct ParamCheck {
  std::string name;
  GradCheckResult result;
};

// Same comparison for every tensor of a parameter set; `build` binds the
// parameters it uses itself. Values are restored afterwards. A non-empty
// `include` restricts the check to the tensors it accepts by name.
std::vector<ParamCheck> check_parameters(ParameterSet& set,
                                         const std::function<Var(Graph&)>& build,
                                         const GradCheckOptions& opts = {},
                                         const std::function<bool(const std::string&)>& include = {});

}  // namespace hmmr::ad
