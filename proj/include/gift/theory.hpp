// SPDX-License-Identifier: Apache-2.0
//
// Numerical checks for the contrastive-bound chain behind the cosine loss,
// plus gradient-norm instrumentation. The chain splits into a provable
// Jensen step (asserted) and a distribution-matching approximation step
// (reported, sign-unconstrained).

#pragma once

#include <map>
#include <string>

#include "gift/labels.hpp"
#include "gift/tensor.hpp"

namespace gift::theory {

struct BoundReport {
  std::size_t k = 0;  // batch size (negative-sample count)
  double tau = 0.0;
  double infonce = 0.0;
  double jensen_bound = 0.0;  // strict upper bound of infonce
  double approx_bound = 0.0;  // heuristic bound with the cross-term estimate
  double gap_jensen = 0.0;    // jensen_bound - infonce, >= 0 up to float noise
  double gap_approx = 0.0;    // approx_bound - infonce, either sign

  std::string csv_row() const;  // K,tau,infonce,jensen,approx,gaps
  static const char* csv_header();
};

// -(1/K) sum_i log[ exp(cos(z_i,y_i)/tau) / sum_j exp(cos(z_i,y_j)/tau) ].
// The positive pair is included in the denominator sum.
double infonce_loss(const Tensor& z, const Tensor& y, double tau);

// jensen_bound replaces the per-row log-sum with the log of the batch-mean
// sum; approx_bound replaces the negatives sum with K times the exponential
// of the mean cross term: -(1/tau)(mean cos(z_i,y_i) - crossterm) + log K,
// crossterm = mean_{i != j}(z_i . y_j / |z_i|) / mean_j |y_j|.
BoundReport check_bound(const Tensor& z, const Tensor& y, double tau);

// Mean and max |cos| over all unordered row pairs.
struct OrthogonalityStats {
  double mean_abs_cos = 0.0;
  double max_abs_cos = 0.0;
};
OrthogonalityStats orthogonality_stats(const labels::LabelMatrix& labels);

// Global L2 norm across every named gradient tensor.
double gradient_norm(const std::map<std::string, Tensor>& param_grads);

}  // namespace gift::theory
