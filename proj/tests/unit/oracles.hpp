#pragma once

// Brute-force reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <vector>

#include "densedyn/prng.hpp"
#include "densedyn/tensor.hpp"

namespace oracle {

using densedyn::Prng;
using densedyn::Shape;
using densedyn::Tensor;

inline Tensor random_tensor(Shape shape, Prng& prng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = prng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Six nested loops over (n, co, y, x, ci, ky, kx) with explicit zero padding.
inline Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& b) {
  const std::size_t n = in.dim(0), cin = in.dim(1), h = in.dim(2), wd = in.dim(3), cout = w.dim(0);
  Tensor out({n, cout, h, wd});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wd; ++x) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const long iy = static_cast<long>(y) + ky - 1, ix = static_cast<long>(x) + kx - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += w.at({co, ci, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)}) *
                       in.at({s, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
          out.at({s, co, y, x}) = acc;
        }
  return out;
}

inline Tensor linear(const Tensor& in, const Tensor& w, const Tensor& b) {
  const std::size_t n = in.dim(0), din = in.dim(1), dout = w.dim(0);
  Tensor out({n, dout});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += in.at({s, i}) * w.at({o, i});
      out.at({s, o}) = acc + b[o];
    }
  return out;
}

// Region bounds from integer arithmetic: floor(i*H/out), ceil((i+1)*H/out).
inline std::size_t region_begin(std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; }
inline std::size_t region_end(std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; }

inline Tensor adaptive_avg_pool(const Tensor& in, std::size_t oh, std::size_t ow) {
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  Tensor out({n, c, oh, ow});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          std::size_t count = 0;
          for (std::size_t y = region_begin(i, h, oh); y < region_end(i, h, oh); ++y)
            for (std::size_t x = region_begin(j, w, ow); x < region_end(j, w, ow); ++x) {
              acc += in.at({s, ch, y, x});
              ++count;
            }
          out.at({s, ch, i, j}) = acc / static_cast<double>(count);
        }
  return out;
}

// Cyclic Jacobi eigenvalue iteration on a symmetric matrix (row-major n x n).
// Returns eigenvalues descending with matching eigenvectors as columns.
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& values,
                         std::vector<double>& vectors) {
  vectors.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vectors[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k * n + p], vkq = vectors[k * n + q];
          vectors[k * n + p] = c * vkp - s * vkq;
          vectors[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return a[l * n + l] > a[r * n + r]; });
  values.clear();
  std::vector<double> sorted(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    values.push_back(a[order[c] * n + order[c]]);
    for (std::size_t k = 0; k < n; ++k) sorted[k * n + c] = vectors[k * n + order[c]];
  }
  vectors = sorted;
}

// D x D sample covariance (divisor P-1) built from explicit per-entry sums.
inline std::vector<double> covariance(const Tensor& x) {
  const std::size_t p = x.dim(0), d = x.dim(1);
  std::vector<double> mean(d, 0.0), cov(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t r = 0; r < p; ++r) mean[j] += x.at({r, j});
    mean[j] /= static_cast<double>(p);
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < p; ++r) s += (x.at({r, a}) - mean[a]) * (x.at({r, b}) - mean[b]);
      cov[a * d + b] = s / static_cast<double>(p - 1);
    }
  return cov;
}

// Pearson correlation via the raw-moment formula.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double cov = sxy - sx * sy / n;
  const long double vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

// Two-logistic learning curve on t = 0..79 with seeded Gaussian noise (sigma 0.005).
struct TwoLogistic {
  double y0 = 0.05;
  double a[2] = {0.55, 0.40};
  double b[2] = {0.9, 0.25};
  double t0[2] = {20.0, 35.0};
};

inline std::vector<double> two_logistic_curve(std::uint64_t seed, std::size_t length = 80, double sigma = 0.005) {
  const TwoLogistic p;
  Prng prng(seed);
  std::vector<double> y(length);
  for (std::size_t t = 0; t < length; ++t) {
    double v = p.y0;
    for (int i = 0; i < 2; ++i) v += p.a[i] / (1.0 + std::exp(-p.b[i] * (static_cast<double>(t) - p.t0[i])));
    y[t] = std::clamp(v + sigma * prng.normal(), 0.0, 1.0);
  }
  return y;
}

}  // namespace oracle
