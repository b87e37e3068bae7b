#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "densedyn/tensor.hpp"

namespace densedyn {

enum class OptimizerKind { kAdam, kSgd };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerHyper {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam (bias-corrected, PyTorch update form) or plain SGD over a fixed
/// parameter list. The moment buffers are laid out in parameter order.
class Optimizer {
 public:
  explicit Optimizer(OptimizerHyper hyper = {}) : hyper_(hyper) {}

  const OptimizerHyper& hyper() const noexcept { return hyper_; }
  std::uint64_t steps() const noexcept { return step_; }

  /// Applies one update using each parameter's current grad.
  void step(std::span<Parameter* const> params);

 private:
  OptimizerHyper hyper_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace densedyn
