#pragma once

#include <functional>
#include <span>
#include <string>

#include "densedyn/tensor.hpp"

namespace densedyn {

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Scalar loss as a function of the current parameter values. When
/// `with_grad` is true the callee must also overwrite every parameter's grad.
using LossFunction = std::function<double(bool with_grad)>;

/// Central-difference check of d loss / d parameter for every entry of every
/// parameter. Relative error is |a - n| / max(|a|, |n|, grad_floor); the floor
/// keeps near-zero gradients from reporting round-off as error.
GradcheckReport gradcheck(std::span<Parameter* const> params, const LossFunction& loss, double epsilon = 1e-5,
                          double grad_floor = 1e-6);

}  // namespace densedyn
