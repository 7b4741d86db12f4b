// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: a flat-key experiment description, the
// generate -> teacher -> label -> subset -> train -> aggregate pipeline,
// Cartesian grid sweeps, the class-incremental (GDumb-style) protocol,
// and CSV/Markdown report emission.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gift/config.hpp"
#include "gift/data.hpp"
#include "gift/labels.hpp"
#include "gift/losses.hpp"
#include "gift/models.hpp"
#include "gift/optim.hpp"

namespace gift::harness {

// Every knob the pipeline reads, parsed from flat dotted keys. Unknown keys
// are rejected so silent typos cannot skew a sweep.
struct ExperimentConfig {
  config::Config raw;  // exactly the keys the user wrote; fingerprint source

  // dataset
  std::string dataset_source = "blobs";  // blobs | spirals | idx
  std::size_t classes = 100;
  std::size_t dim = 100;           // blobs feature dimension
  std::size_t per_class = 60;      // training-pool rows per class
  std::size_t test_per_class = 20;
  double noise = 0.6;
  std::uint64_t data_seed = 1;
  std::size_t ipc = 10;  // rows kept per class for training; 0 = full pool
  std::string idx_images, idx_labels, idx_test_images, idx_test_labels;

  // teacher (soft-label source)
  models::Arch teacher_arch = models::Arch::kMlp;
  std::vector<std::size_t> teacher_hidden = {128};
  std::size_t teacher_depth = 3;
  std::size_t teacher_channels = 32;
  models::NormKind teacher_norm = models::NormKind::kNone;
  std::size_t teacher_epochs = 30;
  optim::OptimizerConfig teacher_optimizer;  // AdamW 1e-3 / 1e-2 defaults
  std::uint64_t teacher_seed = 7;

  // label pipeline
  double alpha = 0.1;
  double gamma = 0.1;
  std::string target_role = "refined";  // hard | smoothed | soft | refined

  // student training
  losses::LossId loss = losses::LossId::parse("cosine");
  optim::OptimizerConfig optimizer;
  bool use_schedule = true;
  std::size_t epochs = 100;
  std::size_t batch_size = 0;  // 0: size-keyed rule
  data::AugmentConfig augment;
  models::Arch student_arch = models::Arch::kMlp;
  std::vector<std::size_t> student_hidden = {64};
  std::size_t student_depth = 3;
  std::size_t student_channels = 32;
  models::NormKind student_norm = models::NormKind::kNone;

  // run control
  std::size_t repeats = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir = "out";

  // Parses + validates; throws std::invalid_argument naming the bad key.
  static ExperimentConfig from_config(const config::Config& raw);
  void validate() const;
  std::string fingerprint() const { return raw.fingerprint(); }
  // All recognized config keys (also the legal sweep axes, plus "seed").
  static const std::vector<std::string>& known_keys();
};

// One experiment cell: per-repeat outcomes plus the aggregate.
struct RunRecord {
  std::string fingerprint;
  std::string dataset;
  std::size_t ipc = 0;
  std::string loss;
  std::string optimizer;
  double lr = 0.0;
  double weight_decay = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;

  std::vector<std::uint64_t> seeds;  // displayed repeat seeds
  std::vector<double> accuracies;    // final test accuracy per repeat
  std::vector<std::vector<double>> epoch_loss;       // [repeat][epoch]
  std::vector<std::vector<double>> epoch_grad_norm;  // [repeat][epoch]
  std::vector<double> wall_seconds;                  // per repeat

  double mean = 0.0;
  double stddev = 0.0;  // population std; 0 for a single repeat
  double total_wall = 0.0;
  double teacher_accuracy = 0.0;  // soft-label source quality (not in CSV)
};

// Dataset + teacher + soft labels, shareable across grid cells whose
// dataset/teacher keys agree (label/loss/optimizer axes reuse the teacher).
struct Prepared {
  data::DatasetBundle pool;  // carries soft labels and teacher logits
  data::DatasetBundle test;
  models::TrainedModel teacher;
  double teacher_accuracy = 0.0;
};

class PreparedCache {
 public:
  std::shared_ptr<const Prepared> get(const ExperimentConfig& cfg);

 private:
  std::map<std::string, std::shared_ptr<const Prepared>> entries_;
};

struct RunContext {
  std::size_t cell_index = 0;
  // Displayed repeat seeds; empty means 0..repeats-1. The run RNG seed is
  // mix(mix(base_seed, cell_index), displayed_seed).
  std::vector<std::uint64_t> repeat_seeds;
  PreparedCache* cache = nullptr;
};

// Full pipeline. Any stage failure is rethrown as
// "run_experiment stage <name>: <cause>"; nothing is written to disk.
RunRecord run_experiment(const ExperimentConfig& cfg);
RunRecord run_experiment(const ExperimentConfig& cfg, const RunContext& ctx);

struct Axis {
  std::string key;
  std::vector<std::string> values;
};

// Cartesian product over the non-seed axes (row-major, axes in the given
// order); a "seed" axis enumerates repeat seeds instead of forming cells.
// Invalid axis keys fail before any cell runs.
std::vector<RunRecord> grid_sweep(const config::Config& base,
                                  const std::vector<Axis>& axes);

struct GdumbStep {
  std::size_t seen_classes = 0;
  std::size_t memory_size = 0;  // rows stored (ipc per seen class)
  double accuracy = 0.0;        // on test rows of seen classes
};

// Class-incremental protocol: classes split into `steps` contiguous groups;
// each step adds ipc memory rows per new class (labels generated by that
// step's task teacher) and retrains a fresh student on the whole memory.
// steps == 1 degenerates to run_experiment's training run exactly.
std::vector<GdumbStep> gdumb_incremental(const ExperimentConfig& cfg,
                                         std::size_t steps,
                                         std::size_t repeat_index);

// Writes results.csv, summary.md, and curves.csv (long format) into dir.
// Each file is written to a temp name and atomically renamed into place.
void emit_report(const std::vector<RunRecord>& records,
                 const std::string& dir);

// Write-then-rename; a reader never observes a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

// The results.csv header row (shared with tests).
const char* results_csv_header();

}  // namespace gift::harness
