// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstddef>

#include "gift/kernels.hpp"

namespace gift::kern {
namespace {

void s_add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_scale(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void s_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_relu(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void s_relu_mask_acc(const double* x, const double* g, double* dx,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += g[i];
  }
}

void s_sqrt(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
}

double s_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double s_sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double s_max(const double* a, std::size_t n) {
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (a[i] > m) m = a[i];
  }
  return m;
}

void s_matmul(const double* a, const double* b, double* c, std::size_t rows,
              std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows * cols; ++i) c[i] = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t p = 0; p < inner; ++p) {
      s_axpy(a[i * inner + p], b + p * cols, c + i * cols, cols);
    }
  }
}

void s_matmul_nt_acc(const double* a, const double* b, double* c,
                     std::size_t rows, std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c[i * cols + j] += s_dot(a + i * inner, b + j * inner, inner);
    }
  }
}

void s_matmul_tn_acc(const double* a, const double* b, double* c,
                     std::size_t rows, std::size_t inner, std::size_t cols) {
  for (std::size_t p = 0; p < inner; ++p) {
    for (std::size_t i = 0; i < rows; ++i) {
      s_axpy(a[p * rows + i], b + p * cols, c + i * cols, cols);
    }
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {
      "scalar",       s_add,  s_sub, s_mul, s_scale,  s_axpy,
      s_relu,         s_relu_mask_acc,      s_sqrt,   s_dot,
      s_sum,          s_max,  s_matmul,     s_matmul_nt_acc,
      s_matmul_tn_acc,
  };
  return k;
}

}  // namespace gift::kern
