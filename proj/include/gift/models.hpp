// SPDX-License-Identifier: Apache-2.0
//
// Student/teacher architectures and the training loop. Two families:
// an MLP and a ConvNet of D blocks [3x3 conv (pad 1) -> optional instance
// norm -> ReLU -> 2x2 avg pool] with a single dense head. Forward output is
// always raw logits [batch, C]; losses own any softmax.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gift/data.hpp"
#include "gift/graph.hpp"
#include "gift/labels.hpp"
#include "gift/losses.hpp"
#include "gift/optim.hpp"
#include "gift/tensor.hpp"

namespace gift::models {

enum class Arch { kMlp, kConvNet };
enum class NormKind { kNone, kInstance };

struct ModelSpec {
  Arch kind = Arch::kMlp;
  std::vector<std::size_t> input_shape;  // [D] for MLP, [C,H,W] for ConvNet
  std::size_t class_count = 0;
  std::vector<std::size_t> hidden = {128};  // MLP layer widths
  std::size_t depth = 3;                    // ConvNet block count
  std::size_t channels = 32;                // ConvNet channel width
  NormKind norm = NormKind::kNone;
  std::uint64_t seed = 0;

  void validate() const;  // throws on bad shape/pooling underflow
};

struct TrainLog {
  std::vector<double> epoch_loss;       // mean per-sample train loss
  std::vector<double> epoch_grad_norm;  // mean global gradient L2 norm
  double final_accuracy = -1.0;         // -1 when no eval set was attached
  std::size_t steps = 0;
};

struct TrainedModel {
  ModelSpec spec;
  std::map<std::string, Tensor> params;
  TrainLog log;
};

// Deterministic He-style init from spec.seed (hidden layers sqrt(2/fan_in),
// head sqrt(1/fan_in), zero biases).
TrainedModel build_model(const ModelSpec& spec);

// Logits [batch, C]; throws on input-shape mismatch.
Tensor forward(const TrainedModel& model, const Tensor& batch);

// Target channels for the loss; unused sides stay null. For MSE, prefer
// logit_target; when only `vec` probabilities exist the trainer falls back
// to them with a logged warning.
struct LabelBinding {
  const labels::LabelMatrix* hard = nullptr;
  const labels::LabelMatrix* vec = nullptr;
  const Tensor* logit_target = nullptr;
};

struct TrainOptions {
  losses::LossId loss;
  optim::OptimizerConfig optimizer;
  bool use_schedule = true;  // MultiStep(2E/3, 5E/6, 0.2) on optimizer.lr
  std::size_t epochs = 100;
  std::size_t batch_size = 0;  // 0: size-keyed rule
  data::AugmentConfig augment;
  std::uint64_t seed = 0;
  const data::DatasetBundle* eval_set = nullptr;
};

// Trains in place and returns the log (also stored in model.log).
// Throws before the first step on an incompatible loss/target pairing and
// mid-run on a non-finite loss (message carries epoch/step).
TrainLog train_model(TrainedModel& model, const data::DatasetBundle& train,
                     const LabelBinding& targets, const TrainOptions& opts);

// Fraction of samples whose logits argmax matches the hard label;
// deterministic tie-break (lowest class index).
double evaluate_accuracy(const TrainedModel& model,
                         const data::DatasetBundle& data);

// CE on hard labels; the probe model whose softmax becomes the soft labels.
TrainedModel train_teacher(const data::DatasetBundle& train,
                           const ModelSpec& spec,
                           const optim::OptimizerConfig& optimizer,
                           std::size_t epochs, std::uint64_t seed);

}  // namespace gift::models
