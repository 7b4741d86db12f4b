// SPDX-License-Identifier: Apache-2.0

#include "gift/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gift/rng.hpp"

namespace gift::harness {
namespace {

namespace fs = std::filesystem;

// Seed salts: distinct deterministic streams per pipeline stage.
constexpr std::uint64_t kTestSplitSalt = 0x7e57;   // synthetic test split
constexpr std::uint64_t kSubsetSalt = 0xd5;        // IPC row selection
constexpr std::uint64_t kStudentInitSalt = 0xa11ce;
constexpr std::uint64_t kTeacherShuffleSalt = 0x7eac;

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("run_experiment stage ") + name +
                             ": " + e.what());
  }
}

models::Arch parse_arch(const std::string& text, const std::string& key) {
  if (text == "mlp") return models::Arch::kMlp;
  if (text == "convnet") return models::Arch::kConvNet;
  throw std::invalid_argument(key + ": expected mlp|convnet, got \"" + text +
                              "\"");
}

const char* arch_name(models::Arch arch) {
  return arch == models::Arch::kMlp ? "mlp" : "convnet";
}

models::NormKind parse_norm(const std::string& text, const std::string& key) {
  if (text == "none") return models::NormKind::kNone;
  if (text == "instance") return models::NormKind::kInstance;
  throw std::invalid_argument(key + ": expected none|instance, got \"" + text +
                              "\"");
}

labels::Role parse_role(const std::string& text) {
  if (text == "hard") return labels::Role::kHard;
  if (text == "smoothed") return labels::Role::kSmoothed;
  if (text == "soft") return labels::Role::kSoft;
  if (text == "refined") return labels::Role::kRefined;
  throw std::invalid_argument(
      "labels.target: expected hard|smoothed|soft|refined, got \"" + text +
      "\"");
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// Input shape for an architecture over a bundle's sample layout.
std::vector<std::size_t> input_shape_for(models::Arch arch,
                                         const data::DatasetBundle& bundle,
                                         const char* who) {
  if (arch == models::Arch::kMlp) {
    if (bundle.images.rank() != 2) {
      throw std::invalid_argument(
          std::string(who) +
          ": mlp needs flat [N,D] features; use arch convnet for image data");
    }
    return {bundle.images.dim(1)};
  }
  if (bundle.images.rank() != 4) {
    throw std::invalid_argument(std::string(who) +
                                ": convnet needs [N,C,H,W] image data");
  }
  return {bundle.images.dim(1), bundle.images.dim(2), bundle.images.dim(3)};
}

models::TrainedModel fit_teacher(const ExperimentConfig& cfg,
                                 const data::DatasetBundle& bundle,
                                 std::uint64_t seed) {
  models::ModelSpec spec;
  spec.kind = cfg.teacher_arch;
  spec.input_shape = input_shape_for(cfg.teacher_arch, bundle, "teacher");
  spec.class_count = bundle.class_count;
  spec.hidden = cfg.teacher_hidden;
  spec.depth = cfg.teacher_depth;
  spec.channels = cfg.teacher_channels;
  spec.norm = cfg.teacher_norm;
  spec.seed = seed;
  return models::train_teacher(bundle, spec, cfg.teacher_optimizer,
                               cfg.teacher_epochs,
                               Rng::mix(seed, kTeacherShuffleSalt));
}

// Raw teacher logits for every sample, in chunks so the forward graphs
// stay small.
Tensor teacher_logits_for(const models::TrainedModel& teacher,
                          const Tensor& images) {
  const std::size_t n = images.dim(0);
  const std::size_t stride = images.size() / n;
  Tensor out({n, teacher.spec.class_count});
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    std::vector<std::size_t> shape = images.shape();
    shape[0] = count;
    Tensor batch(std::move(shape));
    std::memcpy(batch.data(), images.data() + begin * stride,
                count * stride * sizeof(double));
    const Tensor logits = models::forward(teacher, batch);
    std::memcpy(out.data() + begin * out.cols(), logits.data(),
                count * out.cols() * sizeof(double));
  }
  return out;
}

Prepared prepare_data(const ExperimentConfig& cfg) {
  Prepared prep;
  stage("dataset", [&] {
    if (cfg.dataset_source == "idx") {
      prep.pool = data::load_idx(cfg.idx_images, cfg.idx_labels);
      prep.test = data::load_idx(cfg.idx_test_images, cfg.idx_test_labels);
    } else {
      const auto kind = cfg.dataset_source == "blobs"
                            ? data::SyntheticKind::kBlobs
                            : data::SyntheticKind::kSpirals;
      prep.pool = data::make_synthetic(kind, cfg.classes, cfg.per_class,
                                       cfg.dim, cfg.noise, cfg.data_seed);
      prep.test = data::make_synthetic(
          kind, cfg.classes, cfg.test_per_class, cfg.dim, cfg.noise,
          Rng::mix(cfg.data_seed, kTestSplitSalt));
    }
    if (prep.pool.class_count != prep.test.class_count) {
      throw std::invalid_argument("train/test class counts disagree");
    }
    return 0;
  });
  stage("teacher", [&] {
    prep.teacher = fit_teacher(cfg, prep.pool, cfg.teacher_seed);
    prep.teacher_accuracy = models::evaluate_accuracy(prep.teacher, prep.test);
    return 0;
  });
  stage("soft-labels", [&] {
    prep.pool.soft = labels::generate_soft_labels(prep.teacher,
                                                  prep.pool.images);
    prep.pool.teacher_logits =
        teacher_logits_for(prep.teacher, prep.pool.images);
    return 0;
  });
  return prep;
}

std::string prepared_key(const ExperimentConfig& cfg) {
  std::ostringstream key;
  key << cfg.dataset_source << '|' << cfg.classes << '|' << cfg.dim << '|'
      << cfg.per_class << '|' << cfg.test_per_class << '|'
      << fmt("%.17g", cfg.noise) << '|' << cfg.data_seed << '|'
      << cfg.idx_images << '|' << cfg.idx_labels << '|' << cfg.idx_test_images
      << '|' << cfg.idx_test_labels << '|' << arch_name(cfg.teacher_arch)
      << '|' << join_sizes(cfg.teacher_hidden) << '|' << cfg.teacher_depth
      << '|' << cfg.teacher_channels << '|'
      << static_cast<int>(cfg.teacher_norm) << '|' << cfg.teacher_epochs << '|'
      << optim::kind_name(cfg.teacher_optimizer.kind) << '|'
      << fmt("%.17g", cfg.teacher_optimizer.lr) << '|'
      << fmt("%.17g", cfg.teacher_optimizer.weight_decay) << '|'
      << fmt("%.17g", cfg.teacher_optimizer.beta1) << '|'
      << fmt("%.17g", cfg.teacher_optimizer.beta2) << '|'
      << fmt("%.17g", cfg.teacher_optimizer.eps) << '|' << cfg.teacher_seed;
  return key.str();
}

// Vector-target rows for the configured role. Soft must be present for the
// soft/refined roles. Row-local, so it commutes with row subsetting.
labels::LabelMatrix build_vec_target(const ExperimentConfig& cfg,
                                     const labels::LabelMatrix& hard,
                                     const labels::LabelMatrix* soft) {
  const labels::Role role = parse_role(cfg.target_role);
  if (role == labels::Role::kHard) return hard;
  if (role == labels::Role::kSmoothed) {
    return labels::smooth_labels(hard, cfg.alpha);
  }
  if (soft == nullptr) {
    throw std::invalid_argument("labels.target " + cfg.target_role +
                                " needs teacher soft labels");
  }
  if (role == labels::Role::kSoft) return *soft;
  const labels::LabelMatrix smoothed = labels::smooth_labels(hard, cfg.alpha);
  return labels::refine_labels(smoothed, *soft, cfg.gamma);
}

// Probability-target losses cannot consume refined rows directly (their
// rows do not sum to 1); feed them the L1-normalized refined rows instead.
bool needs_l1_adapter(const losses::LossId& loss, const labels::LabelMatrix& vec) {
  if (vec.role != labels::Role::kRefined) return false;
  return loss.primary == losses::Kind::kKl ||
         loss.primary == losses::Kind::kJs ||
         loss.primary == losses::Kind::kSoftCe;
}

struct RepeatOutcome {
  double accuracy = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_grad_norm;
  double wall = 0.0;
};

// One student training run; shared by run_experiment and the incremental
// protocol so the degenerate single-step schedule reproduces run_experiment
// bit for bit.
RepeatOutcome train_student_once(const ExperimentConfig& cfg,
                                 const data::DatasetBundle& train,
                                 const labels::LabelMatrix& vec,
                                 const data::DatasetBundle& eval_set,
                                 std::uint64_t run_seed) {
  const auto t0 = std::chrono::steady_clock::now();

  models::ModelSpec spec;
  spec.kind = cfg.student_arch;
  spec.input_shape = input_shape_for(cfg.student_arch, train, "student");
  spec.class_count = train.class_count;
  spec.hidden = cfg.student_hidden;
  spec.depth = cfg.student_depth;
  spec.channels = cfg.student_channels;
  spec.norm = cfg.student_norm;
  spec.seed = Rng::mix(run_seed, kStudentInitSalt);
  models::TrainedModel student = models::build_model(spec);

  labels::LabelMatrix adapted;
  const labels::LabelMatrix* vec_ptr = &vec;
  if (needs_l1_adapter(cfg.loss, vec)) {
    adapted = labels::l1_normalized(vec);
    vec_ptr = &adapted;
  }

  models::LabelBinding binding;
  if (cfg.loss.needs_hard_target()) binding.hard = &train.hard;
  if (cfg.loss.needs_vector_target()) binding.vec = vec_ptr;
  if (cfg.loss.wants_logit_target() && train.teacher_logits.has_value()) {
    binding.logit_target = &*train.teacher_logits;
  }

  models::TrainOptions opts;
  opts.loss = cfg.loss;
  opts.optimizer = cfg.optimizer;
  opts.use_schedule = cfg.use_schedule;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.augment = cfg.augment;
  opts.seed = run_seed;
  opts.eval_set = &eval_set;
  const models::TrainLog log =
      models::train_model(student, train, binding, opts);

  RepeatOutcome out;
  out.accuracy = log.final_accuracy;
  out.epoch_loss = log.epoch_loss;
  out.epoch_grad_norm = log.epoch_grad_norm;
  out.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
                 .count();
  return out;
}

void aggregate(RunRecord& record) {
  const std::size_t n = record.accuracies.size();
  double sum = 0.0;
  for (double a : record.accuracies) sum += a;
  record.mean = n ? sum / static_cast<double>(n) : 0.0;
  double sq = 0.0;
  for (double a : record.accuracies) {
    sq += (a - record.mean) * (a - record.mean);
  }
  record.stddev = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
  record.total_wall = 0.0;
  for (double w : record.wall_seconds) record.total_wall += w;
}

RunRecord make_record_shell(const ExperimentConfig& cfg) {
  RunRecord record;
  record.fingerprint = cfg.fingerprint();
  record.dataset = cfg.dataset_source;
  record.ipc = cfg.ipc;
  record.loss = cfg.loss.text();
  record.optimizer = optim::kind_name(cfg.optimizer.kind);
  record.lr = cfg.optimizer.lr;
  record.weight_decay = cfg.optimizer.weight_decay;
  record.gamma = cfg.gamma;
  record.alpha = cfg.alpha;
  return record;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("report: cannot write " + tmp);
    }
    out << content;
    out.flush();
    if (!out) {
      throw std::runtime_error("report: short write to " + tmp);
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw std::runtime_error("report: rename " + tmp + " -> " + path +
                             " failed: " + ec.message());
  }
}

const std::vector<std::string>& ExperimentConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "dataset.source",     "dataset.classes",
      "dataset.dim",        "dataset.per_class",
      "dataset.test_per_class", "dataset.noise",
      "dataset.seed",       "dataset.ipc",
      "dataset.idx.images", "dataset.idx.labels",
      "dataset.idx.test_images", "dataset.idx.test_labels",
      "teacher.arch",       "teacher.hidden",
      "teacher.depth",      "teacher.channels",
      "teacher.norm",       "teacher.epochs",
      "teacher.optimizer",  "teacher.lr",
      "teacher.weight_decay", "teacher.seed",
      "labels.alpha",       "labels.gamma",
      "labels.target",      "loss",
      "loss.temperature",   "loss.weight_primary",
      "loss.weight_ce",     "optimizer",
      "optimizer.lr",       "optimizer.weight_decay",
      "optimizer.beta1",    "optimizer.beta2",
      "optimizer.eps",      "train.epochs",
      "train.batch_size",   "train.schedule",
      "train.augment",      "student.arch",
      "student.hidden",     "student.depth",
      "student.channels",   "student.norm",
      "repeats",            "seed",
      "output",
  };
  return keys;
}

ExperimentConfig ExperimentConfig::from_config(const config::Config& raw) {
  const auto& known = known_keys();
  for (const auto& key : raw.keys()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("config: unrecognized key \"" + key + "\"");
    }
  }

  ExperimentConfig cfg;
  cfg.raw = raw;

  cfg.dataset_source = raw.get_or("dataset.source", cfg.dataset_source);
  cfg.classes = static_cast<std::size_t>(
      raw.get_long("dataset.classes", static_cast<long>(cfg.classes)));
  cfg.dim = static_cast<std::size_t>(
      raw.get_long("dataset.dim", static_cast<long>(cfg.dim)));
  cfg.per_class = static_cast<std::size_t>(
      raw.get_long("dataset.per_class", static_cast<long>(cfg.per_class)));
  cfg.test_per_class = static_cast<std::size_t>(raw.get_long(
      "dataset.test_per_class", static_cast<long>(cfg.test_per_class)));
  cfg.noise = raw.get_double("dataset.noise", cfg.noise);
  cfg.data_seed = raw.get_u64("dataset.seed", cfg.data_seed);
  cfg.ipc = static_cast<std::size_t>(
      raw.get_long("dataset.ipc", static_cast<long>(cfg.ipc)));
  cfg.idx_images = raw.get_or("dataset.idx.images", "");
  cfg.idx_labels = raw.get_or("dataset.idx.labels", "");
  cfg.idx_test_images = raw.get_or("dataset.idx.test_images", "");
  cfg.idx_test_labels = raw.get_or("dataset.idx.test_labels", "");

  cfg.teacher_arch = parse_arch(raw.get_or("teacher.arch", "mlp"),
                                "teacher.arch");
  if (raw.has("teacher.hidden")) {
    cfg.teacher_hidden =
        config::parse_size_list(raw.get("teacher.hidden"), "teacher.hidden");
  }
  cfg.teacher_depth = static_cast<std::size_t>(
      raw.get_long("teacher.depth", static_cast<long>(cfg.teacher_depth)));
  cfg.teacher_channels = static_cast<std::size_t>(raw.get_long(
      "teacher.channels", static_cast<long>(cfg.teacher_channels)));
  cfg.teacher_norm = parse_norm(raw.get_or("teacher.norm", "none"),
                                "teacher.norm");
  cfg.teacher_epochs = static_cast<std::size_t>(
      raw.get_long("teacher.epochs", static_cast<long>(cfg.teacher_epochs)));
  cfg.teacher_optimizer.kind =
      optim::parse_kind(raw.get_or("teacher.optimizer", "adamw"));
  cfg.teacher_optimizer.lr =
      raw.get_double("teacher.lr", cfg.teacher_optimizer.lr);
  cfg.teacher_optimizer.weight_decay = raw.get_double(
      "teacher.weight_decay", cfg.teacher_optimizer.weight_decay);
  cfg.teacher_seed = raw.get_u64("teacher.seed", cfg.teacher_seed);

  cfg.alpha = raw.get_double("labels.alpha", cfg.alpha);
  cfg.gamma = raw.get_double("labels.gamma", cfg.gamma);
  cfg.target_role = raw.get_or("labels.target", cfg.target_role);

  cfg.loss = losses::LossId::parse(raw.get_or("loss", "cosine"));
  cfg.loss.temperature =
      raw.get_double("loss.temperature", cfg.loss.temperature);
  cfg.loss.weight_primary =
      raw.get_double("loss.weight_primary", cfg.loss.weight_primary);
  cfg.loss.weight_ce = raw.get_double("loss.weight_ce", cfg.loss.weight_ce);

  if (raw.has("optimizer")) {
    cfg.optimizer.kind = optim::parse_kind(raw.get("optimizer"));
  }
  cfg.optimizer.lr = raw.get_double("optimizer.lr", cfg.optimizer.lr);
  cfg.optimizer.weight_decay =
      raw.get_double("optimizer.weight_decay", cfg.optimizer.weight_decay);
  cfg.optimizer.beta1 = raw.get_double("optimizer.beta1", cfg.optimizer.beta1);
  cfg.optimizer.beta2 = raw.get_double("optimizer.beta2", cfg.optimizer.beta2);
  cfg.optimizer.eps = raw.get_double("optimizer.eps", cfg.optimizer.eps);

  cfg.epochs = static_cast<std::size_t>(
      raw.get_long("train.epochs", static_cast<long>(cfg.epochs)));
  cfg.batch_size = static_cast<std::size_t>(
      raw.get_long("train.batch_size", static_cast<long>(cfg.batch_size)));
  cfg.use_schedule = raw.get_bool("train.schedule", cfg.use_schedule);
  cfg.augment = data::AugmentConfig::parse(raw.get_or("train.augment", "none"));

  cfg.student_arch = parse_arch(raw.get_or("student.arch", "mlp"),
                                "student.arch");
  if (raw.has("student.hidden")) {
    cfg.student_hidden =
        config::parse_size_list(raw.get("student.hidden"), "student.hidden");
  }
  cfg.student_depth = static_cast<std::size_t>(
      raw.get_long("student.depth", static_cast<long>(cfg.student_depth)));
  cfg.student_channels = static_cast<std::size_t>(raw.get_long(
      "student.channels", static_cast<long>(cfg.student_channels)));
  cfg.student_norm = parse_norm(raw.get_or("student.norm", "none"),
                                "student.norm");

  cfg.repeats = static_cast<std::size_t>(
      raw.get_long("repeats", static_cast<long>(cfg.repeats)));
  cfg.base_seed = raw.get_u64("seed", cfg.base_seed);
  cfg.output_dir = raw.get_or("output", cfg.output_dir);

  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) {
    throw std::invalid_argument("repeats: must be >= 1");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("labels.alpha: must be in [0,1]");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("labels.gamma: must be in [0,1]");
  }
  parse_role(target_role);
  if (dataset_source == "idx") {
    for (const auto* p :
         {&idx_images, &idx_labels, &idx_test_images, &idx_test_labels}) {
      if (p->empty()) {
        throw std::invalid_argument(
            "dataset.idx.*: all four paths are required for source idx");
      }
      if (!fs::exists(*p)) {
        throw std::invalid_argument("dataset file does not exist: " + *p);
      }
    }
  } else if (dataset_source == "blobs" || dataset_source == "spirals") {
    if (classes < 2) {
      throw std::invalid_argument("dataset.classes: must be >= 2");
    }
    if (per_class < 1 || test_per_class < 1) {
      throw std::invalid_argument("dataset.per_class/test_per_class: >= 1");
    }
    if (dataset_source == "blobs" && dim < classes) {
      throw std::invalid_argument(
          "dataset.dim: blobs need dim >= classes (one center per axis)");
    }
    if (ipc > per_class) {
      throw std::invalid_argument(
          "dataset.ipc: cannot exceed dataset.per_class");
    }
    if (!(noise > 0.0)) {
      throw std::invalid_argument("dataset.noise: must be > 0");
    }
  } else {
    throw std::invalid_argument(
        "dataset.source: expected blobs|spirals|idx, got \"" + dataset_source +
        "\"");
  }
  if (teacher_epochs < 1) {
    throw std::invalid_argument("teacher.epochs: must be >= 1");
  }
  if (epochs < 1) {
    throw std::invalid_argument("train.epochs: must be >= 1");
  }
  if (!(loss.temperature > 0.0)) {
    throw std::invalid_argument("loss.temperature: must be > 0");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("output: must be a non-empty path");
  }
  optimizer.validate();
  teacher_optimizer.validate();
}

std::shared_ptr<const Prepared> PreparedCache::get(
    const ExperimentConfig& cfg) {
  const std::string key = prepared_key(cfg);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  auto prep = std::make_shared<Prepared>(prepare_data(cfg));
  entries_[key] = prep;
  return prep;
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, RunContext{});
}

RunRecord run_experiment(const ExperimentConfig& cfg, const RunContext& ctx) {
  cfg.validate();

  std::shared_ptr<const Prepared> prep;
  if (ctx.cache != nullptr) {
    prep = ctx.cache->get(cfg);
  } else {
    prep = std::make_shared<Prepared>(prepare_data(cfg));
  }

  // IPC subset of the pool (pairing preserved row-for-row).
  data::DatasetBundle train = stage("subset", [&] {
    if (cfg.ipc == 0) return prep->pool;
    return data::select_ipc_subset(prep->pool, cfg.ipc,
                                   Rng::mix(cfg.data_seed, kSubsetSalt));
  });

  // Vector targets for the chosen role (row-local, so deriving them on the
  // subset equals deriving on the pool and subsetting).
  const labels::LabelMatrix vec = stage("labels", [&] {
    return build_vec_target(cfg, train.hard,
                            train.soft ? &*train.soft : nullptr);
  });

  RunRecord record = make_record_shell(cfg);
  record.teacher_accuracy = prep->teacher_accuracy;
  std::vector<std::uint64_t> repeat_seeds = ctx.repeat_seeds;
  if (repeat_seeds.empty()) {
    for (std::size_t r = 0; r < cfg.repeats; ++r) repeat_seeds.push_back(r);
  }

  stage("train", [&] {
    for (const std::uint64_t display_seed : repeat_seeds) {
      const std::uint64_t run_seed = Rng::mix(
          Rng::mix(cfg.base_seed, ctx.cell_index), display_seed);
      const RepeatOutcome outcome =
          train_student_once(cfg, train, vec, prep->test, run_seed);
      record.seeds.push_back(display_seed);
      record.accuracies.push_back(outcome.accuracy);
      record.epoch_loss.push_back(outcome.epoch_loss);
      record.epoch_grad_norm.push_back(outcome.epoch_grad_norm);
      record.wall_seconds.push_back(outcome.wall);
    }
    return 0;
  });

  aggregate(record);
  return record;
}

std::vector<RunRecord> grid_sweep(const config::Config& base,
                                  const std::vector<Axis>& axes) {
  const auto& known = ExperimentConfig::known_keys();
  std::set<std::string> seen;
  std::vector<Axis> cell_axes;
  std::vector<std::uint64_t> repeat_seeds;
  for (const auto& axis : axes) {
    if (axis.values.empty()) {
      throw std::invalid_argument("sweep axis \"" + axis.key +
                                  "\" has no values");
    }
    if (!seen.insert(axis.key).second) {
      throw std::invalid_argument("sweep axis \"" + axis.key +
                                  "\" given twice");
    }
    if (axis.key == "seed") {
      for (const auto& v : axis.values) {
        repeat_seeds.push_back(config::parse_u64(v, "axis seed"));
      }
      continue;
    }
    if (std::find(known.begin(), known.end(), axis.key) == known.end()) {
      throw std::invalid_argument("unknown sweep axis \"" + axis.key + "\"");
    }
    cell_axes.push_back(axis);
  }

  // Materialize and validate every cell before running anything.
  std::size_t total = 1;
  for (const auto& axis : cell_axes) total *= axis.values.size();
  std::vector<ExperimentConfig> cells;
  cells.reserve(total);
  for (std::size_t cell = 0; cell < total; ++cell) {
    config::Config c = base;
    std::size_t rem = cell;
    for (std::size_t j = cell_axes.size(); j-- > 0;) {
      const auto& axis = cell_axes[j];
      c.set(axis.key, axis.values[rem % axis.values.size()]);
      rem /= axis.values.size();
    }
    cells.push_back(ExperimentConfig::from_config(c));
  }

  PreparedCache cache;
  std::vector<RunRecord> records;
  records.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    RunContext ctx;
    ctx.cell_index = i;
    ctx.repeat_seeds = repeat_seeds;
    ctx.cache = &cache;
    records.push_back(run_experiment(cells[i], ctx));
  }
  return records;
}

std::vector<GdumbStep> gdumb_incremental(const ExperimentConfig& cfg,
                                         std::size_t steps,
                                         std::size_t repeat_index) {
  cfg.validate();
  if (steps < 1) {
    throw std::invalid_argument("gdumb: steps must be >= 1");
  }
  if (cfg.ipc == 0) {
    throw std::invalid_argument("gdumb: dataset.ipc must be > 0");
  }

  // Raw pool/test; per-task teachers supply the labels.
  data::DatasetBundle pool;
  data::DatasetBundle test;
  stage("dataset", [&] {
    if (cfg.dataset_source == "idx") {
      pool = data::load_idx(cfg.idx_images, cfg.idx_labels);
      test = data::load_idx(cfg.idx_test_images, cfg.idx_test_labels);
    } else {
      const auto kind = cfg.dataset_source == "blobs"
                            ? data::SyntheticKind::kBlobs
                            : data::SyntheticKind::kSpirals;
      pool = data::make_synthetic(kind, cfg.classes, cfg.per_class, cfg.dim,
                                  cfg.noise, cfg.data_seed);
      test = data::make_synthetic(kind, cfg.classes, cfg.test_per_class,
                                  cfg.dim, cfg.noise,
                                  Rng::mix(cfg.data_seed, kTestSplitSalt));
    }
    return 0;
  });

  const std::size_t class_count = pool.class_count;
  if (class_count % steps != 0) {
    throw std::invalid_argument(
        "gdumb: class count " + std::to_string(class_count) +
        " is not divisible by steps " + std::to_string(steps));
  }
  const std::size_t group = class_count / steps;

  // One balanced draw for the whole run; the class-major layout makes the
  // first seen*ipc entries exactly the memory after each step, so memory
  // contents persist across steps.
  const std::vector<std::size_t> subset_all = data::ipc_subset_indices(
      pool, cfg.ipc, Rng::mix(cfg.data_seed, kSubsetSalt));

  const std::vector<std::size_t> pool_classes = pool.classes();
  const std::vector<std::size_t> test_classes = test.classes();
  const std::uint64_t run_seed =
      Rng::mix(Rng::mix(cfg.base_seed, 0), repeat_index);

  std::vector<std::size_t> memory_rows;          // pool row indices
  std::vector<double> memory_vec_values;         // target rows, appended
  std::vector<double> memory_logit_values;       // teacher logits, appended
  labels::Role memory_role = labels::Role::kHard;

  std::vector<GdumbStep> out;
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t lo = step * group;
    const std::size_t hi = lo + group;

    stage("task-labels", [&] {
      // Rows of the arriving task, in pool order.
      std::vector<std::size_t> task_rows;
      for (std::size_t i = 0; i < pool_classes.size(); ++i) {
        if (pool_classes[i] >= lo && pool_classes[i] < hi) {
          task_rows.push_back(i);
        }
      }
      data::DatasetBundle task = data::take_rows(pool, task_rows);
      const std::uint64_t teacher_seed =
          step == 0 ? cfg.teacher_seed : Rng::mix(cfg.teacher_seed, step);
      const models::TrainedModel teacher =
          fit_teacher(cfg, task, teacher_seed);
      const labels::LabelMatrix soft =
          labels::generate_soft_labels(teacher, task.images);
      const labels::LabelMatrix vec = build_vec_target(cfg, task.hard, &soft);
      memory_role = vec.role;
      Tensor logits;
      if (cfg.loss.wants_logit_target()) {
        logits = teacher_logits_for(teacher, task.images);
      }

      std::map<std::size_t, std::size_t> task_index;  // pool row -> task row
      for (std::size_t i = 0; i < task_rows.size(); ++i) {
        task_index[task_rows[i]] = i;
      }
      for (std::size_t i = lo * cfg.ipc; i < hi * cfg.ipc; ++i) {
        const std::size_t pool_row = subset_all[i];
        const std::size_t local = task_index.at(pool_row);
        memory_rows.push_back(pool_row);
        memory_vec_values.insert(memory_vec_values.end(),
                                 vec.row(local), vec.row(local) + vec.cols);
        if (cfg.loss.wants_logit_target()) {
          memory_logit_values.insert(
              memory_logit_values.end(), logits.data() + local * class_count,
              logits.data() + (local + 1) * class_count);
        }
      }
      return 0;
    });

    GdumbStep result;
    result.seen_classes = hi;
    result.memory_size = memory_rows.size();

    stage("train", [&] {
      data::DatasetBundle memory = data::take_rows(pool, memory_rows);
      if (cfg.loss.wants_logit_target()) {
        Tensor logits({memory_rows.size(), class_count});
        std::copy(memory_logit_values.begin(), memory_logit_values.end(),
                  logits.data());
        memory.teacher_logits = std::move(logits);
      }
      labels::LabelMatrix vec;
      vec.rows = memory_rows.size();
      vec.cols = class_count;
      vec.values = memory_vec_values;
      vec.role = memory_role;
      vec.source = "gdumb-memory";

      std::vector<std::size_t> kept;
      for (std::size_t i = 0; i < test_classes.size(); ++i) {
        if (test_classes[i] < hi) kept.push_back(i);
      }
      const data::DatasetBundle eval_set = data::take_rows(test, kept);

      const std::uint64_t step_seed =
          step == 0 ? run_seed : Rng::mix(run_seed, step);
      result.accuracy =
          train_student_once(cfg, memory, vec, eval_set, step_seed).accuracy;
      return 0;
    });

    out.push_back(result);
  }
  return out;
}

const char* results_csv_header() {
  return "fingerprint,dataset,ipc,loss,optimizer,lr,weight_decay,gamma,alpha,"
         "seed,final_accuracy,mean,std,wall_seconds";
}

void emit_report(const std::vector<RunRecord>& records,
                 const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw std::runtime_error("emit_report: cannot create " + dir + ": " +
                             ec.message());
  }

  // results.csv: one row per repeat plus one aggregate row per record.
  std::ostringstream csv;
  csv << results_csv_header() << '\n';
  for (const auto& r : records) {
    const std::string prefix =
        r.fingerprint + ',' + r.dataset + ',' + std::to_string(r.ipc) + ',' +
        r.loss + ',' + r.optimizer + ',' + fmt("%.17g", r.lr) + ',' +
        fmt("%.17g", r.weight_decay) + ',' + fmt("%.17g", r.gamma) + ',' +
        fmt("%.17g", r.alpha) + ',';
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
      csv << prefix << r.seeds[i] << ',' << fmt("%.17g", r.accuracies[i])
          << ",,," << fmt("%.6f", r.wall_seconds[i]) << '\n';
    }
    csv << prefix << "all," << ',' << fmt("%.17g", r.mean) << ','
        << fmt("%.17g", r.stddev) << ',' << fmt("%.6f", r.total_wall) << '\n';
  }
  write_file_atomic(dir + "/results.csv", csv.str());

  // summary.md: aggregate table plus per-axis breakdowns with the argmax.
  std::ostringstream md;
  md << "# Experiment report\n\n";
  md << records.size() << " cell(s).\n\n";
  md << "| fingerprint | dataset | ipc | loss | optimizer | lr | wd | gamma "
        "| alpha | runs | mean | std | wall s |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : records) {
    md << "| " << r.fingerprint << " | " << r.dataset << " | " << r.ipc
       << " | " << r.loss << " | " << r.optimizer << " | "
       << fmt("%g", r.lr) << " | " << fmt("%g", r.weight_decay) << " | "
       << fmt("%g", r.gamma) << " | " << fmt("%g", r.alpha) << " | "
       << r.accuracies.size() << " | " << fmt("%.4f", r.mean) << " | "
       << fmt("%.4f", r.stddev) << " | " << fmt("%.2f", r.total_wall)
       << " |\n";
  }
  struct AxisView {
    const char* name;
    std::string (*value)(const RunRecord&);
  };
  const AxisView views[] = {
      {"loss", [](const RunRecord& r) { return r.loss; }},
      {"optimizer", [](const RunRecord& r) { return r.optimizer; }},
      {"lr", [](const RunRecord& r) { return fmt("%g", r.lr); }},
      {"weight_decay",
       [](const RunRecord& r) { return fmt("%g", r.weight_decay); }},
      {"gamma", [](const RunRecord& r) { return fmt("%g", r.gamma); }},
      {"alpha", [](const RunRecord& r) { return fmt("%g", r.alpha); }},
      {"ipc", [](const RunRecord& r) { return std::to_string(r.ipc); }},
  };
  for (const auto& view : views) {
    std::map<std::string, std::pair<double, std::size_t>> groups;
    for (const auto& r : records) {
      auto& g = groups[view.value(r)];
      g.first += r.mean;
      g.second += 1;
    }
    if (groups.size() < 2) continue;
    md << "\n## Axis: " << view.name << "\n\n| " << view.name
       << " | cells | mean accuracy |\n|---|---|---|\n";
    std::string best;
    double best_mean = -1.0;
    for (const auto& [value, g] : groups) {
      const double m = g.first / static_cast<double>(g.second);
      md << "| " << value << " | " << g.second << " | " << fmt("%.4f", m)
         << " |\n";
      if (m > best_mean) {
        best_mean = m;
        best = value;
      }
    }
    md << "\nbest " << view.name << " = " << best << " (mean "
       << fmt("%.4f", best_mean) << ")\n";
  }
  write_file_atomic(dir + "/summary.md", md.str());

  // curves.csv: long format for loss/grad-norm curves.
  std::ostringstream curves;
  curves << "fingerprint,seed,epoch,train_loss,grad_norm\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.epoch_loss.size(); ++i) {
      for (std::size_t e = 0; e < r.epoch_loss[i].size(); ++e) {
        curves << r.fingerprint << ',' << r.seeds[i] << ',' << e << ','
               << fmt("%.17g", r.epoch_loss[i][e]) << ','
               << fmt("%.17g", r.epoch_grad_norm[i][e]) << '\n';
      }
    }
  }
  write_file_atomic(dir + "/curves.csv", curves.str());
}

}  // namespace gift::harness
