// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops behind tensor math. Two lanes: a scalar
// reference and an AVX2 variant, selected once at runtime. Elementwise
// kernels are bit-identical across lanes; reductions and matmul may
// differ in the last bits (different summation order) and are held to a
// relative tolerance by the equivalence tests.

#pragma once

#include <cstddef>

namespace gift::kern {

// All buffers are caller-owned, non-aliasing unless noted, row-major.
struct Kernels {
  const char* name;

  // out[i] = a[i] OP b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * s
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out[i] = max(a[i], 0)
  void (*relu)(const double* a, double* out, std::size_t n);
  // dx[i] += g[i] where x[i] > 0 (backward mask of relu)
  void (*relu_mask_acc)(const double* x, const double* g, double* dx,
                        std::size_t n);
  // out[i] = sqrt(a[i])
  void (*sqrt)(const double* a, double* out, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*max)(const double* a, std::size_t n);  // requires n >= 1

  // c[rows x cols] = a[rows x inner] * b[inner x cols]
  void (*matmul)(const double* a, const double* b, double* c, std::size_t rows,
                 std::size_t inner, std::size_t cols);
  // c[rows x cols] += a[rows x inner] * b[cols x inner]^T
  void (*matmul_nt_acc)(const double* a, const double* b, double* c,
                        std::size_t rows, std::size_t inner, std::size_t cols);
  // c[rows x cols] += a[inner x rows]^T * b[inner x cols]
  void (*matmul_tn_acc)(const double* a, const double* b, double* c,
                        std::size_t rows, std::size_t inner, std::size_t cols);
};

// Scalar reference lane; always available.
const Kernels& scalar_kernels();

// AVX2 lane, or nullptr when the build or the CPU lacks it.
const Kernels* avx2_kernels();

// Lane used by the library. Picks AVX2 when available; the environment
// variable GIFT_KERNELS=scalar|avx2 forces a lane (unsupported forced lane
// falls back to scalar).
const Kernels& active_kernels();

}  // namespace gift::kern
