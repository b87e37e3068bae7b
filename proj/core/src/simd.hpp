#pragma once

#include <cstring>

namespace densedyn::simd {

// Four-lane double vector via GCC/Clang vector extensions. Lowers to AVX when
// available and to SSE pairs otherwise; lane arithmetic is plain IEEE so the
// summation order is exactly what the source spells out.
typedef double v4d __attribute__((vector_size(32)));

inline v4d load(const double* p) noexcept {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store(double* p, v4d v) noexcept { std::memcpy(p, &v, sizeof v); }

inline v4d broadcast(double x) noexcept { return v4d{x, x, x, x}; }

inline double hsum(v4d v) noexcept { return (v[0] + v[1]) + (v[2] + v[3]); }

}  // namespace densedyn::simd
