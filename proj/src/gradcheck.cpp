#include "alignreid/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace areid {

namespace {

double evaluate(const GraphBuilder& f, const Array& x) {
  Tape tape;
  const NodeId leaf = tape.parameter(x);
  return tape.value(f(tape, leaf)).item();
}

}  // namespace

GradCheckReport grad_check(const GraphBuilder& f, const Array& x0,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  Tape tape;
  const NodeId leaf = tape.parameter(x0);
  const NodeId loss = f(tape, leaf);
  const Array analytic = tape.backprop(loss).of(leaf);

  report.analytic.assign(analytic.values().begin(), analytic.values().end());
  report.numeric.resize(x0.size());
  report.relative_error.resize(x0.size());

  Array probe = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double h = options.step_scale * (1.0 + std::abs(x0[i]));
    probe[i] = x0[i] + h;
    const double up = evaluate(f, probe);
    probe[i] = x0[i] - h;
    const double down = evaluate(f, probe);
    probe[i] = x0[i];
    const double numeric = (up - down) / (2.0 * h);
    const double a = report.analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double err = std::abs(a - numeric) / denom;
    report.numeric[i] = numeric;
    report.relative_error[i] = err;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace areid
