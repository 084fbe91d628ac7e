#include "morphogen/nn/gradient_check.hpp"

#include <algorithm>
#include <cmath>

namespace morphogen::nn {

GradientCheckResult gradient_check(std::span<Parameter* const> params, const LossBuilder& build_loss,
                                   double h) {
  Tape tape;
  const Gradients analytic = tape.backward(build_loss(tape));

  Tape probe(false);
  auto loss_at = [&]() {
    probe.clear();
    return probe.scalar(build_loss(probe));
  };

  GradientCheckResult result;
  for (Parameter* p : params) {
    const Tensor grad = analytic.get(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = loss_at();
      p->value[i] = saved - h;
      const double down = loss_at();
      p->value[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = grad[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace morphogen::nn
