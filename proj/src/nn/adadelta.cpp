#include "morphogen/nn/adadelta.hpp"

#include <cmath>
#include <string>

#include "morphogen/error.hpp"

namespace morphogen::nn {

void adadelta_step(Tensor& value, const Tensor& grad, AdaDeltaState& state,
                   const AdaDeltaConfig& config, std::string_view name) {
  if (!(config.rho > 0.0 && config.rho < 1.0)) throw ModelError("AdaDelta rho must lie in (0, 1)");
  if (!(config.epsilon > 0.0)) throw ModelError("AdaDelta epsilon must be positive");
  if (grad.shape() != value.shape()) {
    throw DimensionError("gradient " + grad.shape_string() + " does not match parameter " +
                         std::string(name) + value.shape_string());
  }
  if (!grad.all_finite()) throw ModelError("non-finite gradient for parameter " + std::string(name));
  if (state.mean_sq_grad.shape() != value.shape()) {
    state.mean_sq_grad = Tensor(value.shape());
    state.mean_sq_delta = Tensor(value.shape());
  }
  const double rho = config.rho;
  const double eps = config.epsilon;
  double* x = value.raw();
  const double* g = grad.raw();
  double* eg = state.mean_sq_grad.raw();
  double* ed = state.mean_sq_delta.raw();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double gi = g[i] + config.l2 * x[i];
    eg[i] = rho * eg[i] + (1.0 - rho) * gi * gi;
    const double delta = -std::sqrt((ed[i] + eps) / (eg[i] + eps)) * gi;
    ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
    x[i] += delta;
  }
}

AdaDelta::AdaDelta(AdaDeltaConfig config) : config_(config) {
  if (!(config_.rho > 0.0 && config_.rho < 1.0)) throw ModelError("AdaDelta rho must lie in (0, 1)");
  if (!(config_.epsilon > 0.0)) throw ModelError("AdaDelta epsilon must be positive");
  if (config_.l2 < 0.0) throw ModelError("l2 coefficient must be non-negative");
}

void AdaDelta::step(std::span<Parameter* const> params, const Gradients& grads) {
  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    if (g) {
      adadelta_step(p->value, *g, states_[p], config_, p->name);
    } else {
      adadelta_step(p->value, Tensor(p->value.shape()), states_[p], config_, p->name);
    }
  }
}

const AdaDeltaState* AdaDelta::state(const Parameter& p) const {
  auto it = states_.find(&p);
  return it == states_.end() ? nullptr : &it->second;
}

}  // namespace morphogen::nn
