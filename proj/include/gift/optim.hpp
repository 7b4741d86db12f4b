// SPDX-License-Identifier: Apache-2.0
//
// SGD, Adam (coupled L2: decay enters the gradient before the moments), and
// AdamW (decoupled: decay applied straight to the parameters after the
// Adam step, moments see the raw gradient). Plus the MultiStep schedule.

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gift/tensor.hpp"

namespace gift::optim {

enum class Kind { kSgd, kAdam, kAdamW };

Kind parse_kind(const std::string& text);  // "sgd" | "adam" | "adamw"
const char* kind_name(Kind kind);

struct OptimizerConfig {
  Kind kind = Kind::kAdamW;
  double lr = 0.001;
  double weight_decay = 0.01;  // conventional default: 0 for SGD
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;  // throws std::invalid_argument on bad fields
};

struct ParamState {
  Tensor m;  // first moment
  Tensor v;  // second moment
};

struct OptimizerState {
  std::uint64_t t = 0;  // completed steps
  std::map<std::string, ParamState> buffers;
};

// Single-tensor updates. `t` is the 1-based step index (state.t after
// increment). Grads with NaN abort via std::runtime_error.
void sgd_step(Tensor& param, const Tensor& grad, const OptimizerConfig& cfg,
              double lr);
void adam_step(Tensor& param, const Tensor& grad, ParamState& state,
               std::uint64_t t, const OptimizerConfig& cfg, double lr);
void adamw_step(Tensor& param, const Tensor& grad, ParamState& state,
                std::uint64_t t, const OptimizerConfig& cfg, double lr);

// Applies one optimizer step to every named parameter; increments state.t
// exactly once; allocates moment buffers on first use.
void step_all(std::map<std::string, Tensor>& params,
              const std::map<std::string, Tensor>& grads,
              OptimizerState& state, const OptimizerConfig& cfg, double lr);

// MultiStep: milestones at {2*total/3, 5*total/6} (integer division),
// factor 0.2 per passed milestone.
double lr_schedule(long epoch, long total_epochs, double base_lr);

}  // namespace gift::optim
