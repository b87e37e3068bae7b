#pragma once

#include <vector>

#include "densedyn/tensor.hpp"

namespace densedyn {

struct PcaResult {
  std::vector<double> eigenvalues;         // descending, covariance with divisor P-1
  Tensor axes;                             // [n_components, D], unit rows
  Tensor scores;                           // [P, n_components]
  std::vector<double> variance_explained;  // eigenvalue / total variance
  double total_variance = 0.0;             // trace of the covariance
  Tensor mean;                             // [D]
  std::size_t rank = 0;                    // numerical rank of the centered data
};

struct PcaOptions {
  /// Throw when n_components exceeds the numerical rank. Otherwise surplus
  /// components get zero eigenvalue, zero axis and zero scores.
  bool require_rank = true;
};

/// PCA of the rows of x [P, D]. Each axis is signed so that its
/// largest-magnitude coordinate (first on ties) is positive.
PcaResult pca(const Tensor& x, std::size_t n_components, const PcaOptions& options = {});

}  // namespace densedyn
