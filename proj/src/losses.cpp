// SPDX-License-Identifier: Apache-2.0

#include "gift/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "gift/kernels.hpp"

namespace gift::losses {
namespace {

constexpr double kNormFloor = 1e-12;

Tensor label_tensor(const labels::LabelMatrix& m) {
  return Tensor::from({m.rows, m.cols},
                      std::vector<double>(m.values.begin(), m.values.end()));
}

ad::NodeId attach_single(ad::Graph& g, Kind kind, double temperature,
                         ad::NodeId logits, const TargetNodes& targets) {
  const auto& shape = g.shape_of(logits);
  if (shape.size() != 2) {
    throw std::invalid_argument("loss: logits must be [N,C]");
  }
  const double inv_n = 1.0 / static_cast<double>(shape[0]);
  switch (kind) {
    case Kind::kCe: {
      ad::NodeId ls = g.log_softmax_rows(logits);
      return g.scale(g.sum_all(g.mul(targets.hard, ls)), -inv_n);
    }
    case Kind::kSoftCe: {
      ad::NodeId ls = g.log_softmax_rows(logits);
      return g.scale(g.sum_all(g.mul(targets.vec, ls)), -inv_n);
    }
    case Kind::kKl: {
      ad::NodeId zs = temperature == 1.0
                          ? logits
                          : g.scale(logits, 1.0 / temperature);
      ad::NodeId ls = g.log_softmax_rows(zs);
      ad::NodeId entropy = g.sum_all(g.xlogx(targets.vec));
      ad::NodeId cross = g.sum_all(g.mul(targets.vec, ls));
      return g.scale(g.sub(entropy, cross), temperature * temperature * inv_n);
    }
    case Kind::kJs: {
      ad::NodeId p = g.softmax_rows(logits);
      ad::NodeId q = targets.vec;
      ad::NodeId mid = g.scale(g.add(p, q), 0.5);
      ad::NodeId log_mid = g.log(mid);
      ad::NodeId kl_p = g.sub(g.sum_all(g.xlogx(p)),
                              g.sum_all(g.mul(p, log_mid)));
      ad::NodeId kl_q = g.sub(g.sum_all(g.xlogx(q)),
                              g.sum_all(g.mul(q, log_mid)));
      return g.scale(g.add(kl_p, kl_q), 0.5 * inv_n);
    }
    case Kind::kMse: {
      ad::NodeId diff = g.sub(logits, targets.vec);
      return g.mean_all(g.mul(diff, diff));
    }
    case Kind::kCosine: {
      ad::NodeId cos = g.div(
          g.dot_rows(logits, targets.vec),
          g.mul(g.l2norm_rows(logits), g.l2norm_rows(targets.vec)));
      return g.add_scalar(g.scale(g.sum_all(cos), -inv_n), 1.0);
    }
  }
  throw std::logic_error("loss: unreachable kind");
}

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

LossId LossId::parse(std::string_view text) {
  LossId id;
  std::string_view head = text;
  const auto plus = text.find('+');
  if (plus != std::string_view::npos) {
    head = text.substr(0, plus);
    const std::string_view tail = text.substr(plus + 1);
    if (tail != "ce") {
      throw std::invalid_argument("loss id: unsupported combo '" +
                                  std::string(text) + "'");
    }
    id.with_ce = true;
  }
  if (head == "ce") {
    id.primary = Kind::kCe;
  } else if (head == "soft_ce") {
    id.primary = Kind::kSoftCe;
  } else if (head == "kl") {
    id.primary = Kind::kKl;
  } else if (head == "js") {
    id.primary = Kind::kJs;
  } else if (head == "mse") {
    id.primary = Kind::kMse;
  } else if (head == "cosine") {
    id.primary = Kind::kCosine;
  } else {
    throw std::invalid_argument("loss id: unknown loss '" + std::string(text) +
                                "'");
  }
  if (id.with_ce &&
      (id.primary == Kind::kCe || id.primary == Kind::kJs ||
       id.primary == Kind::kCosine)) {
    throw std::invalid_argument("loss id: unsupported combo '" +
                                std::string(text) + "'");
  }
  return id;
}

std::string LossId::text() const {
  std::string base;
  switch (primary) {
    case Kind::kCe:
      base = "ce";
      break;
    case Kind::kSoftCe:
      base = "soft_ce";
      break;
    case Kind::kKl:
      base = "kl";
      break;
    case Kind::kJs:
      base = "js";
      break;
    case Kind::kMse:
      base = "mse";
      break;
    case Kind::kCosine:
      base = "cosine";
      break;
  }
  return with_ce ? base + "+ce" : base;
}

labels::LabelMatrix sharpen(const labels::LabelMatrix& soft, double t) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("sharpen: temperature must be > 0");
  }
  if (t == 1.0) return soft;
  labels::LabelMatrix out = soft;
  // softmax(log p / T) = p^(1/T) / sum p^(1/T); zero entries stay zero.
  const double inv_t = 1.0 / t;
  for (std::size_t r = 0; r < out.rows; ++r) {
    double* row = out.row(r);
    double sum = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) {
      row[c] = row[c] > 0.0 ? std::pow(row[c], inv_t) : 0.0;
      sum += row[c];
    }
    if (sum <= 0.0) {
      throw std::invalid_argument("sharpen: zero-sum row " +
                                  std::to_string(r));
    }
    for (std::size_t c = 0; c < out.cols; ++c) row[c] /= sum;
  }
  out.source = soft.source + "+sharpen";
  return out;
}

ad::NodeId attach_loss(ad::Graph& g, const LossId& id, ad::NodeId logits,
                       const TargetNodes& targets) {
  if (!(id.temperature > 0.0)) {
    throw std::invalid_argument("loss: temperature must be > 0");
  }
  if (id.weight_primary < 0.0 || id.weight_ce < 0.0 ||
      id.weight_primary + id.weight_ce <= 0.0) {
    throw std::invalid_argument(
        "loss: combo weights must be nonnegative with positive sum");
  }
  require(!id.needs_hard_target() || targets.hard >= 0,
          "loss: hard target required but missing");
  require(!id.needs_vector_target() || targets.vec >= 0,
          "loss: vector target required but missing");
  ad::NodeId primary =
      attach_single(g, id.primary, id.temperature, logits, targets);
  if (!id.with_ce) return primary;
  ad::NodeId ce = attach_single(g, Kind::kCe, 1.0, logits, targets);
  return g.add(g.scale(primary, id.weight_primary),
               g.scale(ce, id.weight_ce));
}

void check_target_compat(const LossId& id, bool has_hard,
                         std::optional<labels::Role> vec_role) {
  if (id.needs_hard_target() && !has_hard) {
    throw std::invalid_argument("loss '" + id.text() +
                                "' requires hard labels");
  }
  if (!id.needs_vector_target()) return;
  if (!vec_role.has_value()) {
    throw std::invalid_argument("loss '" + id.text() +
                                "' requires a vector target");
  }
  const labels::Role role = *vec_role;
  switch (id.primary) {
    case Kind::kCe:
      return;
    case Kind::kCosine:
      return;  // any vector target: refined, soft, or smoothed
    case Kind::kSoftCe:
    case Kind::kKl:
    case Kind::kJs:
      if (role == labels::Role::kRefined) {
        throw std::invalid_argument(
            "loss '" + id.text() +
            "' needs probability rows; refined labels must be "
            "L1-normalized first");
      }
      return;
    case Kind::kMse:
      return;  // logits or probability fallback, caller's channel
  }
}

namespace {

struct EagerSetup {
  ad::Graph g;
  ad::NodeId loss = -1;
};

EagerSetup build_eager(const LossId& id, const Tensor& logits,
                       const labels::LabelMatrix* hard,
                       const labels::LabelMatrix* vec,
                       const Tensor* logit_target) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("loss: logits must rank 2");
  }
  check_target_compat(id, hard != nullptr,
                      vec != nullptr
                          ? std::optional<labels::Role>(vec->role)
                          : (logit_target != nullptr
                                 ? std::optional<labels::Role>(
                                       labels::Role::kSoft)
                                 : std::nullopt));
  EagerSetup s;
  ad::NodeId z = s.g.param("logits", logits);
  TargetNodes t;
  if (id.needs_hard_target()) {
    if (hard->role != labels::Role::kHard) {
      throw std::invalid_argument("loss: CE target role must be hard");
    }
    t.hard = s.g.constant(label_tensor(*hard), "hard_target");
  }
  if (id.needs_vector_target()) {
    Tensor target_values;
    if (id.wants_logit_target()) {
      if (logit_target == nullptr) {
        throw std::invalid_argument("loss: mse needs a logit target tensor");
      }
      target_values = *logit_target;
    } else {
      if (vec == nullptr) {
        throw std::invalid_argument("loss: missing vector target");
      }
      labels::LabelMatrix prepared = *vec;
      if (id.primary == Kind::kKl && id.temperature != 1.0) {
        prepared = sharpen(prepared, id.temperature);
      }
      target_values = label_tensor(prepared);
    }
    if (!(target_values.rank() == 2 &&
          target_values.shape() == logits.shape())) {
      throw std::invalid_argument("loss: target shape mismatch");
    }
    t.vec = s.g.constant(std::move(target_values), "vector_target");
  }
  if (id.primary == Kind::kCosine) {
    // A dead (all-zero) logits row means cosine has no defined direction.
    const auto& k = kern::active_kernels();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const double* row = logits.data() + r * logits.cols();
      if (std::sqrt(k.dot(row, row, logits.cols())) <= kNormFloor) {
        throw std::invalid_argument(
            "loss_cosine: zero-norm logits row at sample " +
            std::to_string(r));
      }
    }
  }
  s.loss = attach_loss(s.g, id, z, t);
  return s;
}

double eager_value(const LossId& id, const Tensor& logits,
                   const labels::LabelMatrix* hard,
                   const labels::LabelMatrix* vec,
                   const Tensor* logit_target) {
  EagerSetup s = build_eager(id, logits, hard, vec, logit_target);
  return s.g.forward_scalar(s.loss);
}

}  // namespace

double loss_ce(const Tensor& logits, const labels::LabelMatrix& hard) {
  LossId id;
  id.primary = Kind::kCe;
  return eager_value(id, logits, &hard, nullptr, nullptr);
}

double loss_soft_ce(const Tensor& logits, const labels::LabelMatrix& target) {
  for (double v : target.values) {
    if (v < 0.0) {
      throw std::invalid_argument("loss_soft_ce: negative target entry");
    }
  }
  LossId id;
  id.primary = Kind::kSoftCe;
  return eager_value(id, logits, nullptr, &target, nullptr);
}

double loss_kl(const Tensor& logits, const labels::LabelMatrix& target,
               double t) {
  LossId id;
  id.primary = Kind::kKl;
  id.temperature = t;
  return eager_value(id, logits, nullptr, &target, nullptr);
}

double loss_js(const Tensor& logits, const labels::LabelMatrix& target) {
  LossId id;
  id.primary = Kind::kJs;
  return eager_value(id, logits, nullptr, &target, nullptr);
}

double loss_mse(const Tensor& logits, const Tensor& target_logits) {
  LossId id;
  id.primary = Kind::kMse;
  return eager_value(id, logits, nullptr, nullptr, &target_logits);
}

double loss_cosine(const Tensor& logits, const labels::LabelMatrix& target) {
  LossId id;
  id.primary = Kind::kCosine;
  return eager_value(id, logits, nullptr, &target, nullptr);
}

double loss_combo(const LossId& id, const Tensor& logits,
                  const labels::LabelMatrix& hard,
                  const labels::LabelMatrix& vector_target) {
  if (!id.with_ce) {
    throw std::invalid_argument("loss_combo: id is not a combo");
  }
  if (id.wants_logit_target()) {
    // Probability fallback channel: the vector target rides as values.
    const Tensor values = label_tensor(vector_target);
    EagerSetup s = build_eager(id, logits, &hard, nullptr, &values);
    return s.g.forward_scalar(s.loss);
  }
  return eager_value(id, logits, &hard, &vector_target, nullptr);
}

std::pair<double, Tensor> loss_with_grad(
    const LossId& id, const Tensor& logits, const labels::LabelMatrix* hard,
    const labels::LabelMatrix* vec, const Tensor* logit_target) {
  EagerSetup s = build_eager(id, logits, hard, vec, logit_target);
  const double value = s.g.forward_scalar(s.loss);
  s.g.backward(s.loss);
  return {value, s.g.param_grad("logits")};
}

}  // namespace gift::losses
