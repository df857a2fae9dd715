#pragma once

#include <functional>
#include <vector>

#include "alignreid/tape.hpp"

namespace areid {

// Builds a scalar graph on `tape` from the leaf `x`.
using GraphBuilder = std::function<NodeId(Tape& tape, NodeId x)>;

struct GradCheckOptions {
  double step_scale = 1e-6;   // h = step_scale * (1 + |x_i|)
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // rounding noise on vanishing gradients from reading as a failure.
  double floor = 1e-4;
};

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> relative_error;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

GradCheckReport grad_check(const GraphBuilder& f, const Array& x0,
                           const GradCheckOptions& options = {});

}  // namespace areid
