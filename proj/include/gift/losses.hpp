// SPDX-License-Identifier: Apache-2.0
//
// The training-loss zoo. Every loss is expressed as graph primitives so
// reverse mode differentiates it; eager wrappers build a throwaway graph
// for direct evaluation in tests and tools.
//
// Target conventions:
//   ce       hard one-hot rows
//   soft_ce  nonnegative probability rows (soft or smoothed)
//   kl       probability rows; teacher sharpened by T, T^2-scaled mean KL
//   js       probability rows
//   mse      teacher logits (probability fallback is the caller's choice)
//   cosine   any nonzero vector rows (refined, soft, or smoothed)
//   x+ce     the x target plus hard rows for the CE side

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "gift/graph.hpp"
#include "gift/labels.hpp"
#include "gift/tensor.hpp"

namespace gift::losses {

enum class Kind { kCe, kSoftCe, kKl, kJs, kMse, kCosine };

struct LossId {
  Kind primary = Kind::kCe;
  bool with_ce = false;  // pairs the primary with hard-label CE
  double weight_primary = 1.0;
  double weight_ce = 1.0;
  double temperature = 1.0;  // KL sharpening; must be > 0

  // Stable ids: ce, soft_ce, kl, js, mse, cosine, kl+ce, mse+ce, soft_ce+ce.
  static LossId parse(std::string_view text);
  std::string text() const;

  bool needs_hard_target() const {
    return primary == Kind::kCe || with_ce;
  }
  bool needs_vector_target() const { return primary != Kind::kCe; }
  // True when the vector target should be teacher logits, not probabilities.
  bool wants_logit_target() const { return primary == Kind::kMse; }
};

// softmax(log p / T) per row; identity at T=1.
labels::LabelMatrix sharpen(const labels::LabelMatrix& soft, double t);

// Appends the loss subgraph onto g and returns the scalar loss node.
// `hard`/`vec` are node ids of target matrices ([N,C], same N as logits);
// pass -1 for targets the loss does not use. For KL the vec node must hold
// the already-sharpened distribution; attach_loss scales the logits by 1/T
// internally.
struct TargetNodes {
  ad::NodeId hard = -1;
  ad::NodeId vec = -1;
};
ad::NodeId attach_loss(ad::Graph& g, const LossId& id, ad::NodeId logits,
                       const TargetNodes& targets);

// Throws std::invalid_argument when the provided targets cannot feed the
// loss (wrong role, missing side). `vec_role` is empty when no vector
// target is supplied.
void check_target_compat(const LossId& id, bool has_hard,
                         std::optional<labels::Role> vec_role);

// Eager evaluation.
double loss_ce(const Tensor& logits, const labels::LabelMatrix& hard);
double loss_soft_ce(const Tensor& logits, const labels::LabelMatrix& target);
double loss_kl(const Tensor& logits, const labels::LabelMatrix& target,
               double t = 1.0);
double loss_js(const Tensor& logits, const labels::LabelMatrix& target);
double loss_mse(const Tensor& logits, const Tensor& target_logits);
double loss_cosine(const Tensor& logits, const labels::LabelMatrix& target);
double loss_combo(const LossId& id, const Tensor& logits,
                  const labels::LabelMatrix& hard,
                  const labels::LabelMatrix& vector_target);

// Value plus dL/dlogits in one pass; the gradcheck entry point. Unused
// target pointers may be null (validated against the loss id). For MSE the
// vector target rides in `logit_target`.
std::pair<double, Tensor> loss_with_grad(
    const LossId& id, const Tensor& logits, const labels::LabelMatrix* hard,
    const labels::LabelMatrix* vec, const Tensor* logit_target);

}  // namespace gift::losses
