// SPDX-License-Identifier: Apache-2.0

#include "gift/theory.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "gift/kernels.hpp"

namespace gift::theory {
namespace {

constexpr double kNormFloor = 1e-12;

std::vector<double> row_norms(const Tensor& m, const char* ctx) {
  const auto& k = kern::active_kernels();
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* row = m.data() + r * m.cols();
    norms[r] = std::sqrt(k.dot(row, row, m.cols()));
    if (norms[r] <= kNormFloor) {
      throw std::invalid_argument(std::string(ctx) + ": zero-norm row " +
                                  std::to_string(r));
    }
  }
  return norms;
}

// cos(z_i, y_j) for all pairs: [K x K].
Tensor cosine_table(const Tensor& z, const Tensor& y,
                    const std::vector<double>& nz,
                    const std::vector<double>& ny) {
  const auto& k = kern::active_kernels();
  const std::size_t rows = z.rows();
  Tensor table({rows, rows});
  // Gram matrix via the nt kernel: table = z * y^T, then normalize.
  k.matmul_nt_acc(z.data(), y.data(), table.data(), rows, z.cols(), rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < rows; ++j) {
      table.at(i, j) /= nz[i] * ny[j];
    }
  }
  return table;
}

void validate_pair(const Tensor& z, const Tensor& y, double tau,
                   const char* ctx) {
  if (z.rank() != 2 || !z.same_shape(y)) {
    throw std::invalid_argument(std::string(ctx) +
                                ": z and y must be matching [K,C]");
  }
  if (z.rows() < 1) {
    throw std::invalid_argument(std::string(ctx) + ": K must be >= 1");
  }
  if (!(tau > 0.0)) {
    throw std::invalid_argument(std::string(ctx) + ": tau must be > 0");
  }
}

}  // namespace

const char* BoundReport::csv_header() {
  return "K,tau,infonce,jensen_bound,approx_bound,gap_jensen,gap_approx";
}

std::string BoundReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                k, tau, infonce, jensen_bound, approx_bound, gap_jensen,
                gap_approx);
  return buf;
}

double infonce_loss(const Tensor& z, const Tensor& y, double tau) {
  validate_pair(z, y, tau, "infonce_loss");
  const std::vector<double> nz = row_norms(z, "infonce_loss(z)");
  const std::vector<double> ny = row_norms(y, "infonce_loss(y)");
  const Tensor cos = cosine_table(z, y, nz, ny);
  const std::size_t rows = z.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
      denom += std::exp(cos.at(i, j) / tau);
    }
    total += cos.at(i, i) / tau - std::log(denom);
  }
  return -total / static_cast<double>(rows);
}

BoundReport check_bound(const Tensor& z, const Tensor& y, double tau) {
  validate_pair(z, y, tau, "check_bound");
  const std::vector<double> nz = row_norms(z, "check_bound(z)");
  const std::vector<double> ny = row_norms(y, "check_bound(y)");
  const Tensor cos = cosine_table(z, y, nz, ny);
  const std::size_t rows = z.rows();
  const double k = static_cast<double>(rows);

  double mean_pos = 0.0;       // mean_i cos(z_i, y_i)
  double mean_denom = 0.0;     // mean_i sum_j exp(cos(z_i,y_j)/tau)
  double infonce_total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
      denom += std::exp(cos.at(i, j) / tau);
    }
    mean_pos += cos.at(i, i);
    mean_denom += denom;
    infonce_total += cos.at(i, i) / tau - std::log(denom);
  }
  mean_pos /= k;
  mean_denom /= k;

  // Cross term over ordered pairs i != j: unnormalized projections of y_j
  // onto the z_i directions, divided by the mean target norm.
  double cross = 0.0;
  if (rows > 1) {
    double proj_sum = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < rows; ++j) {
        if (i == j) continue;
        proj_sum += cos.at(i, j) * ny[j];  // z_i . y_j / |z_i|
      }
    }
    const double mean_proj = proj_sum / (k * (k - 1.0));
    double mean_ny = 0.0;
    for (double v : ny) mean_ny += v;
    mean_ny /= k;
    cross = mean_proj / mean_ny;
  }

  BoundReport report;
  report.k = rows;
  report.tau = tau;
  report.infonce = -infonce_total / k;
  report.jensen_bound = -mean_pos / tau + std::log(mean_denom);
  report.approx_bound = -(mean_pos - cross) / tau + std::log(k);
  report.gap_jensen = report.jensen_bound - report.infonce;
  report.gap_approx = report.approx_bound - report.infonce;
  return report;
}

OrthogonalityStats orthogonality_stats(const labels::LabelMatrix& m) {
  if (m.rows < 2) {
    throw std::invalid_argument("orthogonality_stats: need >= 2 rows");
  }
  const auto& k = kern::active_kernels();
  std::vector<double> norms(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    norms[r] = std::sqrt(k.dot(m.row(r), m.row(r), m.cols));
    if (norms[r] <= kNormFloor) {
      throw std::invalid_argument("orthogonality_stats: zero-norm row " +
                                  std::to_string(r));
    }
  }
  OrthogonalityStats stats;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < m.rows; ++a) {
    for (std::size_t b = a + 1; b < m.rows; ++b) {
      const double cos =
          k.dot(m.row(a), m.row(b), m.cols) / (norms[a] * norms[b]);
      const double abs_cos = std::fabs(cos);
      total += abs_cos;
      if (abs_cos > stats.max_abs_cos) stats.max_abs_cos = abs_cos;
      ++pairs;
    }
  }
  stats.mean_abs_cos = total / static_cast<double>(pairs);
  return stats;
}

double gradient_norm(const std::map<std::string, Tensor>& param_grads) {
  const auto& k = kern::active_kernels();
  double total = 0.0;
  for (const auto& [name, grad] : param_grads) {
    total += k.dot(grad.data(), grad.data(), grad.size());
  }
  return std::sqrt(total);
}

}  // namespace gift::theory
