#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "part/autodiff.hpp"

namespace part {

/// Builds a scalar loss on `tape` from parameter leaves, in the order given.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients against central differences over every
/// coordinate of every parameter. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor* const> params, double h);

}  // namespace part
