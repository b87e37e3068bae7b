#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "densedyn/prng.hpp"
#include "densedyn/tensor.hpp"

namespace densedyn {

// ---------------------------------------------------------------------------
// Convolution: 3x3 kernel, padding 1, stride 1 (shape preserving).
// ---------------------------------------------------------------------------

/// Cross-correlation of input [N,Cin,H,W] with weight [Cout,Cin,3,3] plus bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding = 1, int stride = 1);

struct Conv2dGrads {
  Tensor input;   // empty when not requested
  Tensor weight;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                            bool want_input_grad = true);

// ---------------------------------------------------------------------------
// Elementwise.
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& input);
/// Passes grad_output where input > 0. The subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// Adaptive average pooling.
// ---------------------------------------------------------------------------

/// Half-open input range [begin, end) pooled into output cell `index`:
/// begin = floor(index*in/out), end = ceil((index+1)*in/out).
/// Adjacent regions overlap by one row/column when out does not divide in.
struct PoolRegion {
  std::size_t begin;
  std::size_t end;
  std::size_t size() const noexcept { return end - begin; }
};
PoolRegion pool_region(std::size_t index, std::size_t in, std::size_t out);

Tensor adaptive_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w);
/// Gradient w.r.t. the [N,C,in_h,in_w] input given grad_output [N,C,out_h,out_w].
Tensor adaptive_avg_pool_backward(const Tensor& grad_output, std::size_t in_h, std::size_t in_w);

// ---------------------------------------------------------------------------
// Fully connected.
// ---------------------------------------------------------------------------

/// input [N,Din] . weight[Dout,Din]^T + bias[Dout].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// Inverted dropout.
// ---------------------------------------------------------------------------

struct DropoutResult {
  Tensor output;
  /// Per-element multiplier: 0 or 1/(1-p). Empty in eval mode.
  Tensor mask;
};

DropoutResult dropout(const Tensor& input, double p, Prng& prng, bool training);
Tensor dropout_backward(const Tensor& grad_output, const Tensor& mask);

// ---------------------------------------------------------------------------
// Loss.
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor grad;        // d loss / d logits, already divided by N
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax of [N,K] logits.
Tensor softmax(const Tensor& logits);

// ---------------------------------------------------------------------------
// Raw kernels used by the network's batched loops. All operate on a single
// image in [C,H,W] layout and accumulate in a fixed order.
// ---------------------------------------------------------------------------
namespace kernels {

/// out[cout,H,W] = conv3x3(in[cin,H,W]) + bias.
void conv3x3_forward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                     const double* bias, std::size_t cout, double* out);

/// Overwrites grad_weight[cout*cin*9] and grad_bias[cout] with this image's
/// contribution, and grad_in[cin,H,W] when it is non-null.
void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                      const double* grad_out, std::size_t cout, double* grad_in, double* grad_weight,
                      double* grad_bias);

void adaptive_avg_pool(const double* in, std::size_t channels, std::size_t in_h, std::size_t in_w,
                       std::size_t out_h, std::size_t out_w, double* out);
/// Adds the pooled gradient into grad_in (caller zeroes it).
void adaptive_avg_pool_backward(const double* grad_out, std::size_t channels, std::size_t in_h,
                                std::size_t in_w, std::size_t out_h, std::size_t out_w, double* grad_in);

/// Dot product with eight interleaved partial sums combined in a fixed order.
double dot(const double* a, const double* b, std::size_t n) noexcept;

}  // namespace kernels

}  // namespace densedyn
