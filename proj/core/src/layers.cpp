#include "densedyn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "densedyn/parallel.hpp"
#include "simd.hpp"

namespace densedyn {

namespace kernels {

namespace {

using simd::v4d;

// Copies `channels` planes into a zero border of width 1.
const double* pad_planes(const double* src, std::size_t channels, std::size_t h, std::size_t w) {
  thread_local std::vector<double> scratch;
  const std::size_t pw = w + 2, ph = h + 2;
  scratch.assign(channels * ph * pw, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(src + (c * h + y) * w, w, scratch.data() + (c * ph + y + 1) * pw + 1);
    }
  }
  return scratch.data();
}

// out[y][x] = sum over planes and taps of k[tap] * src[y + ky][x + kx] on padded
// planes, starting from `init`. Taps are visited plane, ky, kx in order.
void correlate3x3(const double* padded, std::size_t planes, std::size_t h, std::size_t w, const double* kernels,
                  std::size_t kernel_stride, double init, double* out) {
  const std::size_t pw = w + 2, plane = (h + 2) * pw;
  const std::size_t vec_end = w - w % 4;
  thread_local std::vector<v4d> taps;
  taps.resize(planes * 9);
  for (std::size_t c = 0; c < planes; ++c) {
    for (std::size_t t = 0; t < 9; ++t) taps[c * 9 + t] = simd::broadcast(kernels[c * kernel_stride + t]);
  }
  const std::size_t pair_end = w - w % 8;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < pair_end; x += 8) {
      v4d acc0 = simd::broadcast(init), acc1 = acc0;
      const v4d* k = taps.data();
      for (std::size_t c = 0; c < planes; ++c, k += 9) {
        const double* r0 = padded + c * plane + y * pw + x;
        for (std::size_t ky = 0; ky < 3; ++ky, r0 += pw) {
          acc0 += k[ky * 3] * simd::load(r0) + k[ky * 3 + 1] * simd::load(r0 + 1) + k[ky * 3 + 2] * simd::load(r0 + 2);
          acc1 += k[ky * 3] * simd::load(r0 + 4) + k[ky * 3 + 1] * simd::load(r0 + 5) +
                  k[ky * 3 + 2] * simd::load(r0 + 6);
        }
      }
      simd::store(out + y * w + x, acc0);
      simd::store(out + y * w + x + 4, acc1);
    }
    for (std::size_t x = pair_end; x < vec_end; x += 4) {
      v4d acc = simd::broadcast(init);
      const v4d* k = taps.data();
      for (std::size_t c = 0; c < planes; ++c, k += 9) {
        const double* r0 = padded + c * plane + y * pw + x;
        const double* r1 = r0 + pw;
        const double* r2 = r1 + pw;
        acc += k[0] * simd::load(r0) + k[1] * simd::load(r0 + 1) + k[2] * simd::load(r0 + 2);
        acc += k[3] * simd::load(r1) + k[4] * simd::load(r1 + 1) + k[5] * simd::load(r1 + 2);
        acc += k[6] * simd::load(r2) + k[7] * simd::load(r2 + 1) + k[8] * simd::load(r2 + 2);
      }
      simd::store(out + y * w + x, acc);
    }
    for (std::size_t x = vec_end; x < w; ++x) {
      double acc = init;
      for (std::size_t c = 0; c < planes; ++c) {
        const double* k = kernels + c * kernel_stride;
        const double* r0 = padded + c * plane + y * pw + x;
        const double* r1 = r0 + pw;
        const double* r2 = r1 + pw;
        acc += k[0] * r0[0] + k[1] * r0[1] + k[2] * r0[2];
        acc += k[3] * r1[0] + k[4] * r1[1] + k[5] * r1[2];
        acc += k[6] * r2[0] + k[7] * r2[1] + k[8] * r2[2];
      }
      out[y * w + x] = acc;
    }
  }
}

}  // namespace

void conv3x3_forward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                     const double* bias, std::size_t cout, double* out) {
  const double* padded = pad_planes(in, cin, h, w);
  for (std::size_t co = 0; co < cout; ++co) {
    correlate3x3(padded, cin, h, w, weight + co * cin * 9, 9, bias[co], out + co * h * w);
  }
}

void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                      const double* grad_out, std::size_t cout, double* grad_in, double* grad_weight,
                      double* grad_bias) {
  const std::size_t hw = h * w, pw = w + 2, plane = (h + 2) * pw;
  const std::size_t vec_end = w - w % 4;

  for (std::size_t co = 0; co < cout; ++co) {
    const double* g_c = grad_out + co * hw;
    v4d bacc = simd::broadcast(0.0);
    double btail = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < vec_end; x += 4) bacc += simd::load(g_c + y * w + x);
      for (std::size_t x = vec_end; x < w; ++x) btail += g_c[y * w + x];
    }
    grad_bias[co] = simd::hsum(bacc) + btail;
  }

  const double* padded = pad_planes(in, cin, h, w);
  for (std::size_t co = 0; co < cout; ++co) {
    const double* g_c = grad_out + co * hw;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* p_c = padded + ci * plane;
      v4d acc[9];
      double tail[9] = {};
      for (auto& a : acc) a = simd::broadcast(0.0);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < vec_end; x += 4) {
          const v4d gv = simd::load(g_c + y * w + x);
          const double* base = p_c + y * pw + x;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) acc[ky * 3 + kx] += gv * simd::load(base + ky * pw + kx);
          }
        }
        for (std::size_t x = vec_end; x < w; ++x) {
          const double gv = g_c[y * w + x];
          const double* base = p_c + y * pw + x;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) tail[ky * 3 + kx] += gv * base[ky * pw + kx];
          }
        }
      }
      double* gw = grad_weight + (co * cin + ci) * 9;
      for (std::size_t k = 0; k < 9; ++k) gw[k] = simd::hsum(acc[k]) + tail[k];
    }
  }

  if (grad_in == nullptr) return;
  // Input gradient: correlation of the padded output gradient with the
  // spatially flipped kernels, transposed over channels.
  const double* gpad = pad_planes(grad_out, cout, h, w);
  std::vector<double> flipped(cout * 9);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* k = weight + (co * cin + ci) * 9;
      for (std::size_t t = 0; t < 9; ++t) flipped[co * 9 + t] = k[8 - t];
    }
    correlate3x3(gpad, cout, h, w, flipped.data(), 9, 0.0, grad_in + ci * hw);
  }
}

void adaptive_avg_pool(const double* in, std::size_t channels, std::size_t in_h, std::size_t in_w,
                       std::size_t out_h, std::size_t out_w, double* out) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* in_c = in + c * in_h * in_w;
    double* out_c = out + c * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const PoolRegion rows = pool_region(i, in_h, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const PoolRegion cols = pool_region(j, in_w, out_w);
        double s = 0.0;
        for (std::size_t y = rows.begin; y < rows.end; ++y) {
          const double* row = in_c + y * in_w;
          for (std::size_t x = cols.begin; x < cols.end; ++x) s += row[x];
        }
        out_c[i * out_w + j] = s / static_cast<double>(rows.size() * cols.size());
      }
    }
  }
}

void adaptive_avg_pool_backward(const double* grad_out, std::size_t channels, std::size_t in_h,
                                std::size_t in_w, std::size_t out_h, std::size_t out_w, double* grad_in) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* gin_c = grad_in + c * in_h * in_w;
    const double* gout_c = grad_out + c * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const PoolRegion rows = pool_region(i, in_h, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const PoolRegion cols = pool_region(j, in_w, out_w);
        const double g = gout_c[i * out_w + j] / static_cast<double>(rows.size() * cols.size());
        for (std::size_t y = rows.begin; y < rows.end; ++y) {
          double* row = gin_c + y * in_w;
          for (std::size_t x = cols.begin; x < cols.end; ++x) row[x] += g;
        }
      }
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) noexcept {
  double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    p[0] += a[i] * b[i];
    p[1] += a[i + 1] * b[i + 1];
    p[2] += a[i + 2] * b[i + 2];
    p[3] += a[i + 3] * b[i + 3];
    p[4] += a[i + 4] * b[i + 4];
    p[5] += a[i + 5] * b[i + 5];
    p[6] += a[i + 6] * b[i + 6];
    p[7] += a[i + 7] * b[i + 7];
  }
  for (std::size_t k = 0; i < n; ++i, ++k) p[k] += a[i] * b[i];
  return ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
}

}  // namespace kernels

namespace {

void require_conv_operands(const Tensor& input, const Tensor& weight) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw ShapeError("conv2d: kernel must be 3x3, got weight " + shape_to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: weight " + shape_to_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " input channels but input is " +
                     shape_to_string(input.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding, int stride) {
  if (padding != 1 || stride != 1) {
    throw std::invalid_argument("conv2d: only padding=1, stride=1 is supported");
  }
  require_conv_operands(input, weight);
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  require_shape(bias, {cout}, "conv2d bias");

  Tensor out({n, cout, h, w});
  parallel_for(n, [&](std::size_t i) {
    kernels::conv3x3_forward(input.data().data() + i * cin * h * w, cin, h, w, weight.data().data(),
                             bias.data().data(), cout, out.data().data() + i * cout * h * w);
  });
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                            bool want_input_grad) {
  require_conv_operands(input, weight);
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  require_shape(grad_output, {n, cout, h, w}, "conv2d grad_output");

  Conv2dGrads grads;
  if (want_input_grad) grads.input = Tensor({n, cin, h, w});
  grads.weight = Tensor(weight.shape());
  grads.bias = Tensor({cout});

  const std::size_t wsize = cout * cin * 9;
  std::vector<double> per_sample_w(n * wsize);
  std::vector<double> per_sample_b(n * cout);
  parallel_for(n, [&](std::size_t i) {
    kernels::conv3x3_backward(input.data().data() + i * cin * h * w, cin, h, w, weight.data().data(),
                              grad_output.data().data() + i * cout * h * w, cout,
                              want_input_grad ? grads.input.data().data() + i * cin * h * w : nullptr,
                              per_sample_w.data() + i * wsize, per_sample_b.data() + i * cout);
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < wsize; ++k) grads.weight[k] += per_sample_w[i * wsize + k];
    for (std::size_t k = 0; k < cout; ++k) grads.bias[k] += per_sample_b[i * cout + k];
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& x : out.data()) x = x > 0.0 ? x : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  require_shape(grad_output, input.shape(), "relu grad_output");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  return out;
}

PoolRegion pool_region(std::size_t index, std::size_t in, std::size_t out) {
  // floor(index*in/out) and ceil((index+1)*in/out) in exact integer arithmetic.
  const std::size_t begin = (index * in) / out;
  const std::size_t end = ((index + 1) * in + out - 1) / out;
  return {begin, end};
}

Tensor adaptive_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 4, "adaptive_avg_pool input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
    throw ShapeError("adaptive_avg_pool: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " must be positive and no larger than input " + shape_to_string(input.shape()));
  }
  Tensor out({n, c, out_h, out_w});
  for (std::size_t i = 0; i < n; ++i) {
    kernels::adaptive_avg_pool(input.data().data() + i * c * h * w, c, h, w, out_h, out_w,
                               out.data().data() + i * c * out_h * out_w);
  }
  return out;
}

Tensor adaptive_avg_pool_backward(const Tensor& grad_output, std::size_t in_h, std::size_t in_w) {
  require_rank(grad_output, 4, "adaptive_avg_pool grad_output");
  const std::size_t n = grad_output.dim(0), c = grad_output.dim(1);
  const std::size_t out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  if (out_h > in_h || out_w > in_w) throw ShapeError("adaptive_avg_pool_backward: output larger than input");
  Tensor grad_in({n, c, in_h, in_w});
  for (std::size_t i = 0; i < n; ++i) {
    kernels::adaptive_avg_pool_backward(grad_output.data().data() + i * c * out_h * out_w, c, in_h, in_w, out_h,
                                        out_w, grad_in.data().data() + i * c * in_h * in_w);
  }
  return grad_in;
}

namespace {

using simd::v4d;

// Y[n][o] = bias[o] + sum_i X[n][i] W[o][i] for an R x J tile of (o, n).
// Each output is a 4-lane strided sum over i, reduced by hsum, plus the scalar
// tail, so the value does not depend on the tile shape.
template <int R, int J>
void gemm_nt_tile(const double* x, const double* w, const double* bias, double* y, std::size_t din,
                  std::size_t dout, std::size_t o0, std::size_t n0) {
  v4d acc[R][J];
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < J; ++j) acc[r][j] = simd::broadcast(0.0);
  const std::size_t vec_end = din - din % 4;
  for (std::size_t i = 0; i < vec_end; i += 4) {
    v4d xv[J];
    for (int j = 0; j < J; ++j) xv[j] = simd::load(x + (n0 + j) * din + i);
    for (int r = 0; r < R; ++r) {
      const v4d wv = simd::load(w + (o0 + r) * din + i);
      for (int j = 0; j < J; ++j) acc[r][j] += wv * xv[j];
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int j = 0; j < J; ++j) {
      double tail = 0.0;
      for (std::size_t i = vec_end; i < din; ++i) tail += w[(o0 + r) * din + i] * x[(n0 + j) * din + i];
      y[(n0 + j) * dout + o0 + r] = bias[o0 + r] + (simd::hsum(acc[r][j]) + tail);
    }
  }
}

template <int R>
void gemm_nt_row(const double* x, const double* w, const double* bias, double* y, std::size_t n, std::size_t din,
                 std::size_t dout, std::size_t o0) {
  std::size_t n0 = 0;
  for (; n0 + 4 <= n; n0 += 4) gemm_nt_tile<R, 4>(x, w, bias, y, din, dout, o0, n0);
  switch (n - n0) {
    case 3: gemm_nt_tile<R, 3>(x, w, bias, y, din, dout, o0, n0); break;
    case 2: gemm_nt_tile<R, 2>(x, w, bias, y, din, dout, o0, n0); break;
    case 1: gemm_nt_tile<R, 1>(x, w, bias, y, din, dout, o0, n0); break;
    default: break;
  }
}

// gW[o][i] = sum_n G[n][o] X[n][i], summed over n in order.
template <int R>
void gemm_tn_rows(const double* g, const double* x, double* gw, std::size_t n, std::size_t din, std::size_t dout,
                  std::size_t o0) {
  const std::size_t vec_end = din - din % 8;
  for (std::size_t i = 0; i < vec_end; i += 8) {
    v4d acc[R][2];
    for (int r = 0; r < R; ++r) acc[r][0] = acc[r][1] = simd::broadcast(0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const v4d x0 = simd::load(x + k * din + i);
      const v4d x1 = simd::load(x + k * din + i + 4);
      for (int r = 0; r < R; ++r) {
        const v4d gv = simd::broadcast(g[k * dout + o0 + r]);
        acc[r][0] += gv * x0;
        acc[r][1] += gv * x1;
      }
    }
    for (int r = 0; r < R; ++r) {
      simd::store(gw + (o0 + r) * din + i, acc[r][0]);
      simd::store(gw + (o0 + r) * din + i + 4, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (std::size_t i = vec_end; i < din; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[k * dout + o0 + r] * x[k * din + i];
      gw[(o0 + r) * din + i] = s;
    }
  }
}

// gX[n][i] = sum_o G[n][o] W[o][i], summed over o in order, for columns [i0, i0+8).
template <int J>
void gemm_nn_tile(const double* g, const double* w, double* gx, std::size_t din, std::size_t dout, std::size_t n0,
                  std::size_t i0) {
  v4d acc[J][2];
  for (int j = 0; j < J; ++j) acc[j][0] = acc[j][1] = simd::broadcast(0.0);
  for (std::size_t o = 0; o < dout; ++o) {
    const v4d w0 = simd::load(w + o * din + i0);
    const v4d w1 = simd::load(w + o * din + i0 + 4);
    for (int j = 0; j < J; ++j) {
      const v4d gv = simd::broadcast(g[(n0 + j) * dout + o]);
      acc[j][0] += gv * w0;
      acc[j][1] += gv * w1;
    }
  }
  for (int j = 0; j < J; ++j) {
    simd::store(gx + (n0 + j) * din + i0, acc[j][0]);
    simd::store(gx + (n0 + j) * din + i0 + 4, acc[j][1]);
  }
}

}  // namespace

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) {
    throw ShapeError("linear: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                     shape_to_string(input.shape()));
  }
  require_shape(bias, {dout}, "linear bias");

  Tensor out({n, dout});
  const double* x = input.data().data();
  const double* w = weight.data().data();
  const double* b = bias.data().data();
  double* y = out.data().data();
  const std::size_t blocks = (dout + 3) / 4;
  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t o0 = blk * 4;
    switch (std::min<std::size_t>(4, dout - o0)) {
      case 4: gemm_nt_row<4>(x, w, b, y, n, din, dout, o0); break;
      case 3: gemm_nt_row<3>(x, w, b, y, n, din, dout, o0); break;
      case 2: gemm_nt_row<2>(x, w, b, y, n, din, dout, o0); break;
      default: gemm_nt_row<1>(x, w, b, y, n, din, dout, o0); break;
    }
  });
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) throw ShapeError("linear_backward: weight/input mismatch");
  require_shape(grad_output, {n, dout}, "linear grad_output");

  LinearGrads grads{Tensor({n, din}), Tensor({dout, din}), Tensor({dout})};
  const double* x = input.data().data();
  const double* g = grad_output.data().data();
  const double* w = weight.data().data();
  double* gw = grads.weight.data().data();
  double* gx = grads.input.data().data();

  for (std::size_t o = 0; o < dout; ++o) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += g[k * dout + o];
    grads.bias[o] = s;
  }

  const std::size_t row_blocks = (dout + 3) / 4;
  parallel_for(row_blocks, [&](std::size_t blk) {
    const std::size_t o0 = blk * 4;
    switch (std::min<std::size_t>(4, dout - o0)) {
      case 4: gemm_tn_rows<4>(g, x, gw, n, din, dout, o0); break;
      case 3: gemm_tn_rows<3>(g, x, gw, n, din, dout, o0); break;
      case 2: gemm_tn_rows<2>(g, x, gw, n, din, dout, o0); break;
      default: gemm_tn_rows<1>(g, x, gw, n, din, dout, o0); break;
    }
  });

  const std::size_t vec_end = din - din % 8;
  const std::size_t col_blocks = vec_end / 8;
  parallel_for(col_blocks, [&](std::size_t blk) {
    const std::size_t i0 = blk * 8;
    std::size_t n0 = 0;
    for (; n0 + 4 <= n; n0 += 4) gemm_nn_tile<4>(g, w, gx, din, dout, n0, i0);
    for (; n0 < n; ++n0) gemm_nn_tile<1>(g, w, gx, din, dout, n0, i0);
  });
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = vec_end; i < din; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < dout; ++o) s += g[k * dout + o] * w[o * din + i];
      gx[k * din + i] = s;
    }
  }
  return grads;
}

DropoutResult dropout(const Tensor& input, double p, Prng& prng, bool training) {
  if (!(p >= 0.0) || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return {input, Tensor()};
  const double keep = 1.0 - p;
  const double scale = 1.0 / keep;
  DropoutResult r{Tensor(input.shape()), Tensor(input.shape())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double m = prng.uniform() < keep ? scale : 0.0;
    r.mask[i] = m;
    r.output[i] = input[i] * m;
  }
  return r;
}

Tensor dropout_backward(const Tensor& grad_output, const Tensor& mask) {
  if (mask.empty()) return grad_output;
  require_shape(mask, grad_output.shape(), "dropout mask");
  Tensor out(grad_output.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad_output[i] * mask[i];
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data().data() + i * k;
    double* o = out.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= z;
  }
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    const double* row = logits.data().data() + i * k;
    double* g = r.grad.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = std::exp(row[j] - mx);
      z += g[j];
    }
    r.loss += (std::log(z) + mx - row[label]) * inv_n;
    for (std::size_t j = 0; j < k; ++j) g[j] = (g[j] / z - (static_cast<int>(j) == label ? 1.0 : 0.0)) * inv_n;
  }
  return r;
}

}  // namespace densedyn
