// SPDX-License-Identifier: Apache-2.0
//
// AVX2 lane. Elementwise kernels keep the scalar lane's per-element
// rounding (mul followed by add, no contraction) so they stay bit-identical
// to the reference; reductions and matmul use FMA and multiple accumulators,
// which changes only the summation rounding.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "gift/kernels.hpp"

namespace gift::kern {
namespace {

void v_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_scale(const double* a, double s, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void v_axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_relu(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void v_relu_mask_acc(const double* x, const double* g, double* dx,
                     std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    __m256d dv = _mm256_loadu_pd(dx + i);
    __m256d sum = _mm256_add_pd(dv, _mm256_loadu_pd(g + i));
    __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_blendv_pd(dv, sum, mask));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += g[i];
  }
}

void v_sqrt(const double* a, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_loadu_pd(a + i)));
  }
  for (; i < n; ++i) out[i] = std::sqrt(a[i]);
}

double hsum(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double v_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double v_sum(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i];
  return acc;
}

double v_max(const double* a, std::size_t n) {
  std::size_t i = 0;
  double m = a[0];
  if (n >= 4) {
    __m256d mv = _mm256_loadu_pd(a);
    for (i = 4; i + 4 <= n; i += 4) {
      mv = _mm256_max_pd(mv, _mm256_loadu_pd(a + i));
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, mv);
    m = lane[0];
    for (int k = 1; k < 4; ++k) {
      if (lane[k] > m) m = lane[k];
    }
  } else {
    i = 1;
  }
  for (; i < n; ++i) {
    if (a[i] > m) m = a[i];
  }
  return m;
}

// c[i,:] += s * b_row[:], FMA variant used inside matmul only.
void fma_row(double s, const double* b_row, double* c_row, std::size_t cols) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t j = 0;
  for (; j + 4 <= cols; j += 4) {
    __m256d cv = _mm256_loadu_pd(c_row + j);
    _mm256_storeu_pd(c_row + j,
                     _mm256_fmadd_pd(sv, _mm256_loadu_pd(b_row + j), cv));
  }
  for (; j < cols; ++j) c_row[j] += s * b_row[j];
}

void v_matmul(const double* a, const double* b, double* c, std::size_t rows,
              std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows * cols; ++i) c[i] = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t p = 0; p < inner; ++p) {
      fma_row(a[i * inner + p], b + p * cols, c + i * cols, cols);
    }
  }
}

void v_matmul_nt_acc(const double* a, const double* b, double* c,
                     std::size_t rows, std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c[i * cols + j] += v_dot(a + i * inner, b + j * inner, inner);
    }
  }
}

void v_matmul_tn_acc(const double* a, const double* b, double* c,
                     std::size_t rows, std::size_t inner, std::size_t cols) {
  for (std::size_t p = 0; p < inner; ++p) {
    for (std::size_t i = 0; i < rows; ++i) {
      fma_row(a[p * rows + i], b + p * cols, c + i * cols, cols);
    }
  }
}

}  // namespace

const Kernels* avx2_lane_table() {
  static const Kernels k = {
      "avx2",         v_add,  v_sub, v_mul, v_scale,  v_axpy,
      v_relu,         v_relu_mask_acc,      v_sqrt,   v_dot,
      v_sum,          v_max,  v_matmul,     v_matmul_nt_acc,
      v_matmul_tn_acc,
  };
  return &k;
}

}  // namespace gift::kern
