#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "densedyn/dataset.hpp"
#include "densedyn/optim.hpp"
#include "densedyn/prng.hpp"
#include "densedyn/tensor.hpp"
#include "densedyn/trace.hpp"

namespace densedyn {

/// Network, optimizer and schedule settings. Defaults reproduce the
/// reference architecture: 5 x (conv 3x3, 3 ch, ReLU) -> adaptive avg pool
/// 20x20 -> 1200 -> 1024 -> 1024 -> 5, 2,284,969 trainable parameters.
struct DscConfig {
  std::size_t num_classes = 5;
  std::size_t image_size = 128;
  std::size_t conv_layers = 5;
  std::size_t conv_channels = 3;  // also the number of input channels
  std::size_t pool_out = 20;
  std::size_t fc_width = 1024;
  double dropout_p = 0.5;
  OptimizerHyper optimizer;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;

  /// Throws std::invalid_argument describing the first invalid field.
  void validate() const;
  std::size_t flatten_width() const noexcept { return conv_channels * pool_out * pool_out; }
  /// Spatial side of the stored conv probe blocks (4x average downsampling).
  std::size_t probe_side() const noexcept { return image_size >= 4 ? image_size / 4 : 1; }
};

enum class Mode { kTrain, kEval };

struct ActivationSnapshot {
  std::vector<Tensor> conv;  // post-ReLU conv outputs, downsampled: [N, C, side, side]
  Tensor hidden;             // penultimate post-ReLU activations [N, fc_width]
  Tensor logits;             // [N, K]
};

struct LayerSummary {
  std::string name;
  Shape output_shape;  // batch dimension included
  std::size_t params = 0;
};

class DscNetwork {
 public:
  DscNetwork(const DscConfig& config, Prng& prng);

  const DscConfig& config() const noexcept { return config_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

  Parameter& conv_weight(std::size_t layer) { return params_[2 * layer]; }
  Parameter& conv_bias(std::size_t layer) { return params_[2 * layer + 1]; }
  const Parameter& conv_weight(std::size_t layer) const { return params_[2 * layer]; }
  const Parameter& conv_bias(std::size_t layer) const { return params_[2 * layer + 1]; }
  /// Fully connected layer 0 (fc1), 1 (fc2) or 2 (output).
  Parameter& fc_weight(std::size_t layer) { return params_[2 * config_.conv_layers + 2 * layer]; }
  Parameter& fc_bias(std::size_t layer) { return params_[2 * config_.conv_layers + 2 * layer + 1]; }
  const Parameter& fc_weight(std::size_t layer) const { return params_[2 * config_.conv_layers + 2 * layer]; }
  const Parameter& fc_bias(std::size_t layer) const { return params_[2 * config_.conv_layers + 2 * layer + 1]; }

  /// Batched forward on [N, C, S, S]. `prng` drives dropout in train mode and
  /// may be null in eval mode. The snapshot is filled only when requested.
  Tensor forward(const Tensor& batch, Mode mode, Prng* prng, ActivationSnapshot* snapshot = nullptr) const;

  /// Train-mode forward + backward of the mean cross-entropy. Overwrites every
  /// parameter's grad and returns the loss.
  double loss_and_grad(const Tensor& batch, std::span<const int> labels, Prng& prng);

  /// Layer-by-layer forward through the public tensor ops, reporting every
  /// intermediate in the order of the architecture table.
  Tensor forward_reference(const Tensor& batch, Mode mode, Prng* prng,
                           const std::function<void(const LayerSummary&, const Tensor&)>& observer) const;

  /// Architecture table for a given batch size.
  std::vector<LayerSummary> summary(std::size_t batch = 1) const;

  /// Flattened conv weights+bias per layer: [L, C*C*9 + C].
  Tensor conv_weight_matrix() const;

 private:
  void require_input(const Tensor& batch) const;

  DscConfig config_;
  std::vector<Parameter> params_;
};

/// Convenience: validates the config, then constructs.
DscNetwork build_network(const DscConfig& config, Prng& prng);

/// Assembles [N, C, S, S] from exemplar indices, replicating grayscale planes.
Tensor make_batch(const DenseDataset& dataset, std::span<const std::size_t> indices, std::size_t channels);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<double> per_class_recall;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t count = 0;
};

/// Builds an Evaluation from predicted and true labels.
Evaluation evaluation_from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                       std::size_t num_classes);

/// Eval-mode pass over the chosen exemplars (all when `indices` is empty).
Evaluation evaluate(const DscNetwork& net, const DenseDataset& dataset, std::span<const std::size_t> indices = {});

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::vector<double> per_class_recall;
};

struct TrainResult {
  std::vector<EpochStats> curve;
};

using ProgressCallback = std::function<void(const EpochStats&)>;

/// Seeded minibatch training over the train split with a full evaluation pass
/// (train split, held-out split, probe snapshot) after every epoch.
TrainResult train(DscNetwork& net, const DenseDataset& dataset, const DscConfig& config, TraceSink* sink,
                  const ProgressCallback& progress = {});

}  // namespace densedyn
