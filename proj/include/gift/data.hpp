// SPDX-License-Identifier: Apache-2.0
//
// Dataset plumbing: IDX ingestion, synthetic desk corpora with controllable
// difficulty, per-class random subset selection, and batch augmentation in
// the siamese convention (one op drawn per batch, applied to every sample).

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gift/labels.hpp"
#include "gift/rng.hpp"
#include "gift/tensor.hpp"

namespace gift::data {

struct DatasetBundle {
  Tensor images;  // [N, C, H, W] or [N, D]
  labels::LabelMatrix hard;
  std::optional<labels::LabelMatrix> soft;
  std::optional<Tensor> teacher_logits;  // [N, C]
  std::size_t class_count = 0;
  std::string name;

  std::size_t size() const { return images.dim(0); }
  bool is_image() const { return images.rank() == 4; }
  // Argmax of the hard rows; the canonical class vector.
  std::vector<std::size_t> classes() const;
  // Copies one sample's features into dst (row of a batch tensor).
  void copy_sample(std::size_t index, double* dst) const;
  std::size_t sample_size() const { return images.size() / size(); }
};

// MNIST-style IDX pair: image magic 0x00000803, label magic 0x00000801,
// big-endian headers. Pixels scaled to [0,1].
DatasetBundle load_idx(const std::string& images_path,
                       const std::string& labels_path);

enum class SyntheticKind { kBlobs, kSpirals };

// blobs: isotropic Gaussians with stddev `noise` at simplex-spread unit
// centers, feature dim = dim_or_size (must be >= classes).
// spirals: 2-D interleaved arcs, dim_or_size ignored (always 2), `noise`
// is the radial jitter.
DatasetBundle make_synthetic(SyntheticKind kind, std::size_t classes,
                             std::size_t per_class, std::size_t dim_or_size,
                             double noise, std::uint64_t seed);

// Uniform without replacement, exactly ipc rows per class; deterministic in
// seed; soft labels and teacher logits follow the same row selection.
std::vector<std::size_t> ipc_subset_indices(const DatasetBundle& bundle,
                                            std::size_t ipc,
                                            std::uint64_t seed);
DatasetBundle select_ipc_subset(const DatasetBundle& bundle, std::size_t ipc,
                                std::uint64_t seed);
DatasetBundle take_rows(const DatasetBundle& bundle,
                        const std::vector<std::size_t>& indices);

enum class AugmentOp { kFlip, kCrop, kCutout, kRotate, kScale };

struct AugmentConfig {
  std::set<AugmentOp> ops;
  double flip_prob = 0.5;
  double crop_pad = 0.125;      // fraction of width zero-padded per side
  double cutout_ratio = 0.5;    // square side as a fraction of height
  double rotate_degrees = 15.0; // max |angle|
  double scale_ratio = 1.2;     // zoom sampled in [1/ratio, ratio]

  bool enabled() const { return !ops.empty(); }
  static AugmentConfig none() { return AugmentConfig{}; }
  static AugmentConfig all();
  // Comma list: "flip,crop,cutout,rotate,scale" or "none".
  static AugmentConfig parse(const std::string& text);
  std::string text() const;
};

// One op sampled uniformly from cfg.ops, applied to the whole 4-D batch.
// Empty op set returns the input unchanged (a notice is logged once).
Tensor augment_batch(const Tensor& batch, const AugmentConfig& cfg, Rng& rng);

// Piecewise batch-size rule keyed on dataset size.
std::size_t default_batch_size(std::size_t dataset_size);

}  // namespace gift::data
