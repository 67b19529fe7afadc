#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsv2v/nn/params.hpp"

namespace fsv2v::nn {

struct GradCheckOptions {
  double step = 1e-5;  // central-difference half width
  // Elements checked per tensor; 0 checks all. Subsets are drawn
  // deterministically from `seed`.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_param;
  // Set when an analytic or numeric gradient is non-finite.
  std::string failure;

  bool passed(double tolerance) const { return failure.empty() && max_rel_error < tolerance; }
};

// Builds a scalar loss from bound parameters. Must be deterministic.
using LossBuilder = std::function<Var<double>(ParamBinder<double>&)>;

// Compares reverse-mode gradients against central differences. Relative error
// is |a - n| / max(1, |a|, |n|).
GradCheckReport finite_diff_grad_check(const LossBuilder& loss, ParamSet<double> params,
                                       const GradCheckOptions& options = {});

}  // namespace fsv2v::nn
