#pragma once

#include <vector>

#include "densedyn/tensor.hpp"

namespace densedyn {

/// Everything recorded for one epoch. Activation blocks hold values already
/// rounded to float32 (the on-disk precision) so a store round trip is exact.
struct EpochTrace {
  int epoch = 0;
  double train_loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_class_recall;
  double heldout_loss = 0.0;
  double heldout_accuracy = 0.0;

  Tensor hidden_probe;              // [P, fc_width]
  std::vector<Tensor> conv_probe;   // per conv layer [P, C, h/4, w/4]
  Tensor logits_probe;              // [P, K]
  Tensor conv_weights;              // [L, C*C*9 + C]: weights then bias, per layer
  std::vector<int> probe_labels;    // [P]

  std::size_t probe_count() const noexcept { return probe_labels.size(); }
};

/// Rounds every element to the nearest float32.
void round_to_float(Tensor& t);

/// Receives one EpochTrace per completed training epoch.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void record(const EpochTrace& trace) = 0;
};

}  // namespace densedyn
