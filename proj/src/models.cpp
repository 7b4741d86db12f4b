// SPDX-License-Identifier: Apache-2.0

#include "gift/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "gift/kernels.hpp"
#include "gift/rng.hpp"
#include "gift/theory.hpp"

namespace gift::models {
namespace {

struct ModelGraph {
  ad::Graph g;
  ad::NodeId input = -1;
  ad::NodeId logits = -1;
};

Tensor init_weights(std::vector<std::size_t> shape, std::size_t fan_in,
                    double gain, Rng& rng) {
  Tensor w(std::move(shape));
  const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = stddev * rng.normal();
  return w;
}

// The parameter naming fixes the creation (and init-draw) order.
std::vector<std::pair<std::string, Tensor>> make_params(const ModelSpec& spec) {
  Rng rng(spec.seed);
  std::vector<std::pair<std::string, Tensor>> params;
  char name[32];
  if (spec.kind == Arch::kMlp) {
    std::size_t fan_in = spec.input_shape[0];
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
      const std::size_t width = spec.hidden[l];
      std::snprintf(name, sizeof(name), "fc%zu.w", l);
      params.emplace_back(name, init_weights({fan_in, width}, fan_in, 2.0, rng));
      std::snprintf(name, sizeof(name), "fc%zu.b", l);
      params.emplace_back(name, Tensor({width}));
      fan_in = width;
    }
    params.emplace_back("head.w", init_weights({fan_in, spec.class_count},
                                               fan_in, 1.0, rng));
    params.emplace_back("head.b", Tensor({spec.class_count}));
  } else {
    std::size_t in_ch = spec.input_shape[0];
    std::size_t extent_h = spec.input_shape[1];
    std::size_t extent_w = spec.input_shape[2];
    for (std::size_t d = 0; d < spec.depth; ++d) {
      const std::size_t fan_in = in_ch * 9;
      std::snprintf(name, sizeof(name), "conv%zu.w", d);
      params.emplace_back(
          name, init_weights({spec.channels, in_ch, 3, 3}, fan_in, 2.0, rng));
      std::snprintf(name, sizeof(name), "conv%zu.b", d);
      params.emplace_back(name, Tensor({spec.channels}));
      in_ch = spec.channels;
      extent_h /= 2;
      extent_w /= 2;
    }
    const std::size_t features = in_ch * extent_h * extent_w;
    params.emplace_back("head.w", init_weights({features, spec.class_count},
                                               features, 1.0, rng));
    params.emplace_back("head.b", Tensor({spec.class_count}));
  }
  return params;
}

ModelGraph build_graph(const ModelSpec& spec, const TrainedModel& model,
                       std::size_t batch) {
  ModelGraph mg;
  if (spec.kind == Arch::kMlp) {
    mg.input = mg.g.input("x", {batch, spec.input_shape[0]});
    ad::NodeId h = mg.input;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
      char w_name[32], b_name[32];
      std::snprintf(w_name, sizeof(w_name), "fc%zu.w", l);
      std::snprintf(b_name, sizeof(b_name), "fc%zu.b", l);
      ad::NodeId w = mg.g.param(w_name, model.params.at(w_name));
      ad::NodeId b = mg.g.param(b_name, model.params.at(b_name));
      h = mg.g.relu(mg.g.add_bias(mg.g.matmul(h, w), b));
    }
    ad::NodeId w = mg.g.param("head.w", model.params.at("head.w"));
    ad::NodeId b = mg.g.param("head.b", model.params.at("head.b"));
    mg.logits = mg.g.add_bias(mg.g.matmul(h, w), b);
  } else {
    mg.input = mg.g.input(
        "x", {batch, spec.input_shape[0], spec.input_shape[1],
              spec.input_shape[2]});
    ad::NodeId h = mg.input;
    for (std::size_t d = 0; d < spec.depth; ++d) {
      char w_name[32], b_name[32];
      std::snprintf(w_name, sizeof(w_name), "conv%zu.w", d);
      std::snprintf(b_name, sizeof(b_name), "conv%zu.b", d);
      ad::NodeId w = mg.g.param(w_name, model.params.at(w_name));
      ad::NodeId b = mg.g.param(b_name, model.params.at(b_name));
      h = mg.g.conv2d(h, w, b, 1);
      if (spec.norm == NormKind::kInstance) h = mg.g.instance_norm(h);
      h = mg.g.relu(h);
      h = mg.g.avg_pool2(h);
    }
    const auto& shape = mg.g.shape_of(h);
    const std::size_t features = shape[1] * shape[2] * shape[3];
    h = mg.g.reshape(h, {batch, features});
    ad::NodeId w = mg.g.param("head.w", model.params.at("head.w"));
    ad::NodeId b = mg.g.param("head.b", model.params.at("head.b"));
    mg.logits = mg.g.add_bias(mg.g.matmul(h, w), b);
  }
  return mg;
}

void sync_params(ModelGraph& mg, const TrainedModel& model) {
  for (const auto& [name, value] : model.params) {
    mg.g.set_param(name, value);
  }
}

Tensor gather_rows(const Tensor& matrix, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t count) {
  Tensor out({count, matrix.cols()});
  for (std::size_t r = 0; r < count; ++r) {
    std::memcpy(out.data() + r * matrix.cols(),
                matrix.data() + order[begin + r] * matrix.cols(),
                matrix.cols() * sizeof(double));
  }
  return out;
}

Tensor gather_label_rows(const labels::LabelMatrix& m,
                         const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t count) {
  Tensor out({count, m.cols});
  for (std::size_t r = 0; r < count; ++r) {
    std::memcpy(out.data() + r * m.cols, m.row(order[begin + r]),
                m.cols * sizeof(double));
  }
  return out;
}

Tensor gather_samples(const data::DatasetBundle& data,
                      const std::vector<std::size_t>& order, std::size_t begin,
                      std::size_t count) {
  std::vector<std::size_t> shape = data.images.shape();
  shape[0] = count;
  Tensor out(std::move(shape));
  const std::size_t stride = data.sample_size();
  for (std::size_t r = 0; r < count; ++r) {
    data.copy_sample(order[begin + r], out.data() + r * stride);
  }
  return out;
}

}  // namespace

void ModelSpec::validate() const {
  if (class_count < 2) {
    throw std::invalid_argument("model: class_count must be >= 2");
  }
  if (kind == Arch::kMlp) {
    if (input_shape.size() != 1 || input_shape[0] == 0) {
      throw std::invalid_argument("model: MLP input shape must be [D]");
    }
    if (hidden.empty()) {
      throw std::invalid_argument("model: MLP needs at least one hidden layer");
    }
  } else {
    if (input_shape.size() != 3) {
      throw std::invalid_argument("model: ConvNet input shape must be [C,H,W]");
    }
    if (depth < 1) throw std::invalid_argument("model: depth must be >= 1");
    if (channels < 1) {
      throw std::invalid_argument("model: channels must be >= 1");
    }
    std::size_t h = input_shape[1];
    std::size_t w = input_shape[2];
    for (std::size_t d = 0; d < depth; ++d) {
      if (h < 2 || w < 2) {
        throw std::invalid_argument(
            "model: pooling underflow, spatial extent reaches zero at block " +
            std::to_string(d));
      }
      h /= 2;
      w /= 2;
    }
  }
}

TrainedModel build_model(const ModelSpec& spec) {
  spec.validate();
  TrainedModel model;
  model.spec = spec;
  for (auto& [name, tensor] : make_params(spec)) {
    model.params.emplace(name, std::move(tensor));
  }
  return model;
}

Tensor forward(const TrainedModel& model, const Tensor& batch) {
  const ModelSpec& spec = model.spec;
  std::vector<std::size_t> expected = spec.input_shape;
  expected.insert(expected.begin(), batch.dim(0));
  if (batch.shape() != expected) {
    throw std::invalid_argument("forward: batch shape " + batch.shape_str() +
                                " does not match model input");
  }
  ModelGraph mg = build_graph(spec, model, batch.dim(0));
  mg.g.bind("x", batch);
  mg.g.forward(mg.logits);
  return mg.g.value(mg.logits);
}

TrainLog train_model(TrainedModel& model, const data::DatasetBundle& train,
                     const LabelBinding& targets, const TrainOptions& opts) {
  const std::size_t n = train.size();
  if (n == 0) throw std::invalid_argument("train_model: empty dataset");
  opts.optimizer.validate();

  // Route the vector target; resolves the MSE fallback before any step.
  const losses::LossId& loss = opts.loss;
  const labels::LabelMatrix* vec = targets.vec;
  const Tensor* logit_target = targets.logit_target;
  if (loss.wants_logit_target() && logit_target == nullptr &&
      vec != nullptr) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr,
                   "train_model: mse target logits unavailable, falling back "
                   "to probability rows\n");
      warned = true;
    }
  }
  losses::check_target_compat(
      loss, targets.hard != nullptr,
      vec != nullptr ? std::optional<labels::Role>(vec->role)
                     : (logit_target != nullptr
                            ? std::optional<labels::Role>(labels::Role::kSoft)
                            : std::nullopt));
  if (targets.hard != nullptr && targets.hard->role != labels::Role::kHard) {
    throw std::invalid_argument("train_model: CE target role must be hard");
  }

  TrainLog log;
  if (opts.epochs == 0) {
    model.log = log;
    return log;
  }

  // Materialize the vector-target rows the graphs will consume.
  labels::LabelMatrix sharpened;
  const labels::LabelMatrix* vec_rows = nullptr;
  const Tensor* vec_tensor = nullptr;
  if (loss.needs_vector_target()) {
    if (loss.wants_logit_target() && logit_target != nullptr) {
      vec_tensor = logit_target;
    } else if (loss.primary == losses::Kind::kKl && loss.temperature != 1.0) {
      sharpened = losses::sharpen(*vec, loss.temperature);
      vec_rows = &sharpened;
    } else {
      vec_rows = vec;
    }
  }

  const std::size_t requested = opts.batch_size != 0
                                    ? opts.batch_size
                                    : data::default_batch_size(n);
  const std::size_t batch = std::min(requested, n);
  const std::size_t full_batches = n / batch;
  const std::size_t tail = n % batch;

  struct LossGraph {
    ModelGraph mg;
    ad::NodeId loss = -1;
    ad::NodeId hard_in = -1;
    ad::NodeId vec_in = -1;
  };
  auto make_loss_graph = [&](std::size_t size) {
    LossGraph lg;
    lg.mg = build_graph(model.spec, model, size);
    losses::TargetNodes nodes;
    if (loss.needs_hard_target()) {
      lg.hard_in = lg.mg.g.input("target_hard", {size, train.class_count});
      nodes.hard = lg.hard_in;
    }
    if (loss.needs_vector_target()) {
      lg.vec_in = lg.mg.g.input("target_vec", {size, train.class_count});
      nodes.vec = lg.vec_in;
    }
    lg.loss = losses::attach_loss(lg.mg.g, loss, lg.mg.logits, nodes);
    return lg;
  };
  LossGraph main_graph = make_loss_graph(batch);
  LossGraph tail_graph;
  if (tail != 0) tail_graph = make_loss_graph(tail);

  const bool augment_images =
      opts.augment.enabled() && train.is_image();
  if (opts.augment.enabled() && !train.is_image()) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr,
                   "train_model: augmentation requested on non-image data, "
                   "skipping\n");
      warned = true;
    }
  }

  Rng rng(opts.seed);
  optim::OptimizerState opt_state;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::map<std::string, Tensor> grads;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr =
        opts.use_schedule
            ? optim::lr_schedule(static_cast<long>(epoch),
                                 static_cast<long>(opts.epochs),
                                 opts.optimizer.lr)
            : opts.optimizer.lr;
    rng.shuffle(order);
    double loss_sum = 0.0;
    double norm_sum = 0.0;
    std::size_t steps_this_epoch = 0;
    const std::size_t batch_count = full_batches + (tail != 0 ? 1 : 0);
    for (std::size_t bi = 0; bi < batch_count; ++bi) {
      const std::size_t begin = bi * batch;
      const std::size_t count = bi < full_batches ? batch : tail;
      LossGraph& lg = bi < full_batches || tail == 0 ? main_graph : tail_graph;

      Tensor x = gather_samples(train, order, begin, count);
      if (augment_images) x = data::augment_batch(x, opts.augment, rng);
      sync_params(lg.mg, model);
      lg.mg.g.bind("x", x);
      if (lg.hard_in >= 0) {
        lg.mg.g.bind("target_hard",
                     gather_label_rows(*targets.hard, order, begin, count));
      }
      if (lg.vec_in >= 0) {
        lg.mg.g.bind("target_vec",
                     vec_tensor != nullptr
                         ? gather_rows(*vec_tensor, order, begin, count)
                         : gather_label_rows(*vec_rows, order, begin, count));
      }
      const double batch_loss = lg.mg.g.forward_scalar(lg.loss);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error(
            "train_model: non-finite loss at epoch " + std::to_string(epoch) +
            ", step " + std::to_string(log.steps));
      }
      lg.mg.g.backward(lg.loss);
      for (const std::string& name : lg.mg.g.param_names()) {
        grads[name] = lg.mg.g.param_grad(name);
      }
      norm_sum += theory::gradient_norm(grads);
      optim::step_all(model.params, grads, opt_state, opts.optimizer, lr);
      loss_sum += batch_loss * static_cast<double>(count);
      log.steps += 1;
      steps_this_epoch += 1;
    }
    log.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    log.epoch_grad_norm.push_back(norm_sum /
                                  static_cast<double>(steps_this_epoch));
  }

  if (opts.eval_set != nullptr) {
    log.final_accuracy = evaluate_accuracy(model, *opts.eval_set);
  }
  model.log = log;
  return log;
}

double evaluate_accuracy(const TrainedModel& model,
                         const data::DatasetBundle& data) {
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  const std::vector<std::size_t> truth = data.classes();
  constexpr std::size_t kChunk = 256;
  std::size_t hits = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    const Tensor x = gather_samples(data, order, begin, count);
    const Tensor logits = forward(model, x);
    for (std::size_t r = 0; r < count; ++r) {
      const double* row = logits.data() + r * logits.cols();
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (best == truth[begin + r]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

TrainedModel train_teacher(const data::DatasetBundle& train,
                           const ModelSpec& spec,
                           const optim::OptimizerConfig& optimizer,
                           std::size_t epochs, std::uint64_t seed) {
  TrainedModel teacher = build_model(spec);
  TrainOptions opts;
  opts.loss = losses::LossId::parse("ce");
  opts.optimizer = optimizer;
  opts.epochs = epochs;
  opts.seed = seed;
  LabelBinding binding;
  binding.hard = &train.hard;
  train_model(teacher, train, binding, opts);
  return teacher;
}

}  // namespace gift::models
