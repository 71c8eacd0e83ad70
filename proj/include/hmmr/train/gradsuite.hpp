#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Finite-difference verification of every backward rule the training
// objective depends on: whole network paths, the individual losses and the
// primitive ops, each on a small deterministic instance.

namespace hmmr::train {

struct GradSuiteOptions {
  double tol = 1e-4;
  // Coordinates probed per parameter tensor or leaf; 0 checks all.
  std::size_t max_coords = 6;
  std::uint64_t seed = 0;
};

struct GradSuiteRow {
  std::string group;  // "path", "loss" or "op"
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t non_finite = 0;
  std::string worst;  // tensor holding the worst coordinate
  bool passed = false;
};

struct GradSuiteReport {
  std::vector<GradSuiteRow> rows;
  double tol = 1e-4;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
};

GradSuiteReport run_gradient_suite(const GradSuiteOptions& opts = {});

// Fixed-width table, one line per row, then a summary line.
std::string format_report(const GradSuiteReport& r);

}  // namespace hmmr::train
