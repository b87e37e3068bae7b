#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "densedyn/dataset.hpp"
#include "densedyn/pca.hpp"
#include "densedyn/tensor.hpp"
#include "densedyn/trace.hpp"

namespace densedyn {

/// PCA of an epoch's penultimate-layer probe activations [P, fc_width].
PcaResult pca_hidden(const EpochTrace& trace, std::size_t n_components = 5);

enum class AxisAlignment {
  kSignOnly,    // keep eigenvalue order, fix signs against the same-index previous axis
  kMatch,       // reorder axes by greedy maximal |dot| with the previous epoch, then fix signs
  kFixedBasis,  // project every epoch onto the final epoch's axes
};

struct PcTrajectoryOptions {
  std::size_t n_components = 5;
  AxisAlignment alignment = AxisAlignment::kSignOnly;
};

struct PcTrajectory {
  std::vector<int> epochs;
  std::size_t n_components = 0;
  std::size_t num_classes = 0;
  /// [epoch][pc]: variance along the (aligned) axis, the "composite score".
  std::vector<std::vector<double>> eigenvalue;
  std::vector<std::vector<double>> variance_fraction;
  /// [epoch][pc]: dot product with the matched axis of the previous epoch (1 at epoch 0).
  std::vector<std::vector<double>> alignment_dot;
  /// [epoch][pc][class]: mean score of each class along the axis.
  std::vector<std::vector<std::vector<double>>> class_mean_score;
  /// [epoch][pc]: eigenvalue rank of the axis that was tracked.
  std::vector<std::vector<std::size_t>> source_rank;
};

/// `hidden[e]` is epoch e's [P, D] activation block; `labels` gives P class ids in [0, num_classes).
PcTrajectory pc_trajectory(std::span<const Tensor> hidden, std::span<const int> epochs, std::span<const int> labels,
                           std::size_t num_classes, const PcTrajectoryOptions& options = {});

struct Projection2d {
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;
  std::array<double, 2> variance_explained{};
  /// Resubstitution accuracy of a pooled-covariance linear discriminant in the plane.
  double separation = 0.0;
};

/// Scores on PCA axes 1-2 of `hidden` [P, D]; axes beyond the data rank give zero scores.
Projection2d project_2d(const Tensor& hidden, std::span<const int> labels, std::size_t num_classes);

/// Linear-discriminant resubstitution accuracy for 2-D points. Ties go to the lowest class.
double lda_accuracy_2d(std::span<const std::array<double, 2>> points, std::span<const int> labels,
                       std::size_t num_classes);

/// L x L matrix (row-major) of probe-averaged Pearson correlations between conv
/// layers. Entries with no defined exemplar correlation are empty.
using CorrMatrix = std::vector<std::optional<double>>;

/// Pearson correlation, or empty when either vector has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// `conv[l]` is layer l's probe block [P, ...]; correlations are per exemplar, then averaged.
CorrMatrix layer_pair_correlation(std::span<const Tensor> conv);

/// Correlation between the rows of a [L, W] per-layer weight matrix.
CorrMatrix weight_pair_correlation(const Tensor& weights);

/// Population variance per pixel over all exemplars of `label`: [H, W].
Tensor pixel_variance_map(const DenseDataset& dataset, int label);

struct Changepoint {
  int class_id = -1;
  std::optional<int> epoch;  // empty when the class never crystallizes
  double statistic = 0.0;    // mean recall over the detection window
};

struct Crystallization {
  std::vector<Changepoint> per_class;
  Changepoint overall;  // earliest class change-point; class_id names that class
};

/// recall[e][k] for epochs[e]. Class k crystallizes at the first e with
/// recall >= theta for `window` consecutive recorded epochs.
Crystallization detect_crystallization(std::span<const std::vector<double>> recall, std::span<const int> epochs,
                                       double theta = 0.5, int window = 3);

/// Number of classes whose change-point is strictly later than the overall
/// one (never-crystallizing classes count as later).
std::size_t classes_after_first(const Crystallization& result);

}  // namespace densedyn
