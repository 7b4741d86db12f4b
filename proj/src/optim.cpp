// SPDX-License-Identifier: Apache-2.0

#include "gift/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gift::optim {
namespace {

void check_grads(const Tensor& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (std::isnan(grad[i])) {
      throw std::runtime_error("optimizer: NaN gradient");
    }
  }
}

void check_shapes(const Tensor& param, const Tensor& grad) {
  if (!param.same_shape(grad)) {
    throw std::invalid_argument("optimizer: parameter/gradient shape mismatch");
  }
}

}  // namespace

Kind parse_kind(const std::string& text) {
  if (text == "sgd") return Kind::kSgd;
  if (text == "adam") return Kind::kAdam;
  if (text == "adamw") return Kind::kAdamW;
  throw std::invalid_argument("optimizer: unknown kind '" + text + "'");
}

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::kSgd:
      return "sgd";
    case Kind::kAdam:
      return "adam";
    case Kind::kAdamW:
      return "adamw";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer: lr must be > 0");
  if (weight_decay < 0.0) {
    throw std::invalid_argument("optimizer: weight_decay must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must be in [0,1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer: eps must be > 0");
}

void sgd_step(Tensor& param, const Tensor& grad, const OptimizerConfig& cfg,
              double lr) {
  check_shapes(param, grad);
  check_grads(grad);
  const double lambda = cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= lr * (grad[i] + lambda * param[i]);
  }
}

void adam_step(Tensor& param, const Tensor& grad, ParamState& state,
               std::uint64_t t, const OptimizerConfig& cfg, double lr) {
  check_shapes(param, grad);
  check_grads(grad);
  if (state.m.size() == 0) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double lambda = cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + lambda * param[i];  // coupled L2
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / corr1;
    const double v_hat = state.v[i] / corr2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void adamw_step(Tensor& param, const Tensor& grad, ParamState& state,
                std::uint64_t t, const OptimizerConfig& cfg, double lr) {
  check_shapes(param, grad);
  check_grads(grad);
  if (state.m.size() == 0) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double decay = lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];  // moments never see the decay term
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / corr1;
    const double v_hat = state.v[i] / corr2;
    const double prev = param[i];
    param[i] = prev - lr * m_hat / (std::sqrt(v_hat) + cfg.eps) - decay * prev;
  }
}

void step_all(std::map<std::string, Tensor>& params,
              const std::map<std::string, Tensor>& grads,
              OptimizerState& state, const OptimizerConfig& cfg, double lr) {
  cfg.validate();
  state.t += 1;
  for (auto& [name, param] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      throw std::invalid_argument("optimizer: missing gradient for '" + name +
                                  "'");
    }
    switch (cfg.kind) {
      case Kind::kSgd:
        sgd_step(param, it->second, cfg, lr);
        break;
      case Kind::kAdam:
        adam_step(param, it->second, state.buffers[name], state.t, cfg, lr);
        break;
      case Kind::kAdamW:
        adamw_step(param, it->second, state.buffers[name], state.t, cfg, lr);
        break;
    }
  }
}

double lr_schedule(long epoch, long total_epochs, double base_lr) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  if (total_epochs < 1) {
    throw std::invalid_argument("lr_schedule: total_epochs must be >= 1");
  }
  const long first = 2 * total_epochs / 3;
  const long second = 5 * total_epochs / 6;
  double lr = base_lr;
  if (epoch >= first) lr *= 0.2;
  if (epoch >= second) lr *= 0.2;
  return lr;
}

}  // namespace gift::optim
