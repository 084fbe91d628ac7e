#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "morphogen/nn/tape.hpp"

namespace morphogen::nn {

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central differences with step h for every
/// entry of every parameter in `params`. The relative error of one entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Parameter values are restored before returning.
GradientCheckResult gradient_check(std::span<Parameter* const> params, const LossBuilder& build_loss,
                                   double h);

}  // namespace morphogen::nn
