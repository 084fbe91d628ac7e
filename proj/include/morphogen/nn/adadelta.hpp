#pragma once

#include <span>
#include <string_view>
#include <unordered_map>

#include "morphogen/nn/tape.hpp"
#include "morphogen/nn/tensor.hpp"

namespace morphogen::nn {

struct AdaDeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  /// Coefficient of the l2 term added to the gradient before each update.
  double l2 = 0.0;
};

/// Running averages E[g^2] and E[dx^2] for one parameter tensor.
struct AdaDeltaState {
  Tensor mean_sq_grad;
  Tensor mean_sq_delta;
};

/// One AdaDelta update of `value` in place. The state is lazily sized on the
/// first call. Throws ModelError naming `name` on a non-finite gradient.
void adadelta_step(Tensor& value, const Tensor& grad, AdaDeltaState& state,
                   const AdaDeltaConfig& config, std::string_view name);

/// AdaDelta over a set of parameters, keeping one state per parameter.
class AdaDelta {
 public:
  explicit AdaDelta(AdaDeltaConfig config = {});

  const AdaDeltaConfig& config() const { return config_; }

  /// Updates every parameter in `params`; parameters missing from `grads`
  /// are treated as having a zero data gradient.
  void step(std::span<Parameter* const> params, const Gradients& grads);

  const AdaDeltaState* state(const Parameter& p) const;

 private:
  AdaDeltaConfig config_;
  std::unordered_map<const Parameter*, AdaDeltaState> states_;
};

}  // namespace morphogen::nn
