// SPDX-License-Identifier: Apache-2.0
//
// Label machinery: one-hot encoding, label smoothing, teacher soft labels,
// and the refinement step that blends the row-normalized smoothed label
// with the row-normalized soft label.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gift/tensor.hpp"

namespace gift::models {
struct TrainedModel;  // labels.cpp pulls in the full definition
}

namespace gift::labels {

enum class Role : std::uint8_t {
  kHard = 0,      // rows are one-hot
  kSmoothed = 1,  // rows sum to 1, entries in {alpha/C, 1-alpha+alpha/C}
  kSoft = 2,      // teacher probabilities, rows sum to 1
  kRefined = 3,   // blend of normalized rows; rows need not sum to 1
};

const char* role_name(Role role);

struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major, rows x cols
  Role role = Role::kHard;
  std::string source;  // provenance note ("teacher-3", "gamma=0.10", ...)

  double* row(std::size_t r) { return values.data() + r * cols; }
  const double* row(std::size_t r) const { return values.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  // Argmax with deterministic tie-break (lowest index).
  std::size_t argmax_row(std::size_t r) const;
};

LabelMatrix one_hot(const std::vector<std::size_t>& classes,
                    std::size_t class_count);

// row = (1-alpha) * onehot + (alpha/C) * ones
LabelMatrix smooth_labels(const LabelMatrix& hard, double alpha);

// softmax of teacher logits per sample; deterministic given the teacher.
LabelMatrix generate_soft_labels(const models::TrainedModel& teacher,
                                 const Tensor& images);

// row = gamma * smoothed/|smoothed| + (1-gamma) * soft/|soft|
LabelMatrix refine_labels(const LabelMatrix& smoothed, const LabelMatrix& soft,
                          double gamma);

// Fraction of rows whose argmax agrees with the hard argmax.
double label_accuracy(const LabelMatrix& labels, const LabelMatrix& hard);

// Row subset in the given order (shared by dataset subsetting).
LabelMatrix take_rows(const LabelMatrix& m,
                      const std::vector<std::size_t>& indices);

// In-place row L1 normalization; used to feed refined rows to losses that
// require a probability target. Rows must be nonnegative with positive sum.
LabelMatrix l1_normalized(const LabelMatrix& m);

// Binary format: magic "GLBL", u32 version=1, u64 N, u64 C, u8 role code,
// then N*C little-endian f64.
void save_labels(const LabelMatrix& m, const std::string& path);
LabelMatrix load_labels(const std::string& path);

// CSV export, one row per sample; role goes into the filename by convention.
void export_csv(const LabelMatrix& m, const std::string& path);

}  // namespace gift::labels
