#include "trajloom/gradcheck.hpp"

#include <cmath>

namespace trajloom {

namespace {

double evaluate(const ScalarFunction& f, std::span<const Mat> inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Mat& m : inputs) vars.push_back(tape.constant(m));
  return f(tape, vars).scalar();
}

}  // namespace

Gradient grad(const ScalarFunction& f, std::span<const Mat> inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Mat& m : inputs) vars.push_back(tape.variable(m));
  ad::Var out = f(tape, vars);
  Gradient g;
  g.value = out.scalar();
  g.gradients = tape.gradient(out, vars);
  return g;
}

GradCheckReport grad_check_report(const ScalarFunction& f, std::span<const Mat> inputs, double step) {
  if (!(step > 0)) throw Error("grad_check: step must be positive");
  const Gradient analytic = grad(f, inputs);
  std::vector<Mat> probe(inputs.begin(), inputs.end());
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (Index c = 0; c < probe[i].size(); ++c) {
      double& x = probe[i].data()[c];
      const double saved = x;
      x = saved + step;
      const double up = evaluate(f, probe);
      x = saved - step;
      const double down = evaluate(f, probe);
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericalError("grad_check: non-finite value probing input " + std::to_string(i) + " coordinate " +
                             std::to_string(c));
      const double central = (up - down) / (2.0 * step);
      const double err = std::abs(analytic.gradients[i].data()[c] - central) / std::max(1.0, std::abs(central));
      if (err > report.max_relative_error) report = {err, i, c};
    }
  }
  return report;
}

}  // namespace trajloom
