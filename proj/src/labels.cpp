// SPDX-License-Identifier: Apache-2.0

#include "gift/labels.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gift/kernels.hpp"
#include "gift/models.hpp"

namespace gift::labels {
namespace {

constexpr double kNormFloor = 1e-12;
constexpr char kMagic[4] = {'G', 'L', 'B', 'L'};
constexpr std::uint32_t kVersion = 1;

double row_norm(const double* row, std::size_t n) {
  return std::sqrt(kern::active_kernels().dot(row, row, n));
}

void require_same_shape(const LabelMatrix& a, const LabelMatrix& b,
                        const char* ctx) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument(std::string(ctx) + ": shape mismatch " +
                                std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" +
                                std::to_string(b.cols));
  }
}

// Little-endian scalar I/O; this library only targets little-endian hosts,
// asserted at load/save time.
static_assert(std::endian::native == std::endian::little,
              "label serialization assumes a little-endian host");

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

const char* role_name(Role role) {
  switch (role) {
    case Role::kHard:
      return "hard";
    case Role::kSmoothed:
      return "smoothed";
    case Role::kSoft:
      return "soft";
    case Role::kRefined:
      return "refined";
  }
  return "unknown";
}

std::size_t LabelMatrix::argmax_row(std::size_t r) const {
  const double* v = row(r);
  std::size_t best = 0;
  for (std::size_t c = 1; c < cols; ++c) {
    if (v[c] > v[best]) best = c;
  }
  return best;
}

LabelMatrix one_hot(const std::vector<std::size_t>& classes,
                    std::size_t class_count) {
  if (class_count < 2) {
    throw std::invalid_argument("one_hot: class_count must be >= 2");
  }
  LabelMatrix m;
  m.rows = classes.size();
  m.cols = class_count;
  m.values.assign(m.rows * m.cols, 0.0);
  m.role = Role::kHard;
  m.source = "one_hot";
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (classes[r] >= class_count) {
      throw std::invalid_argument("one_hot: class index " +
                                  std::to_string(classes[r]) +
                                  " out of range at row " + std::to_string(r));
    }
    m.at(r, classes[r]) = 1.0;
  }
  return m;
}

LabelMatrix smooth_labels(const LabelMatrix& hard, double alpha) {
  if (hard.role != Role::kHard) {
    throw std::invalid_argument("smooth_labels: input role must be hard");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("smooth_labels: alpha must be in [0,1]");
  }
  LabelMatrix m = hard;
  m.role = Role::kSmoothed;
  m.source = "smoothed(alpha=" + std::to_string(alpha) + ")";
  const double uniform = alpha / static_cast<double>(hard.cols);
  const double keep = 1.0 - alpha;
  for (double& v : m.values) v = keep * v + uniform;
  return m;
}

LabelMatrix generate_soft_labels(const models::TrainedModel& teacher,
                                 const Tensor& images) {
  const Tensor logits = models::forward(teacher, images);
  LabelMatrix m;
  m.rows = logits.rows();
  m.cols = logits.cols();
  m.values.assign(m.rows * m.cols, 0.0);
  m.role = Role::kSoft;
  m.source = "teacher";
  const auto& k = kern::active_kernels();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* z = logits.data() + r * m.cols;
    double* out = m.row(r);
    const double mx = k.max(z, m.cols);
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      out[c] = std::exp(z[c] - mx);
      s += out[c];
    }
    for (std::size_t c = 0; c < m.cols; ++c) out[c] /= s;
  }
  return m;
}

LabelMatrix refine_labels(const LabelMatrix& smoothed, const LabelMatrix& soft,
                          double gamma) {
  require_same_shape(smoothed, soft, "refine_labels");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("refine_labels: gamma must be in [0,1]");
  }
  LabelMatrix m;
  m.rows = smoothed.rows;
  m.cols = smoothed.cols;
  m.values.assign(m.rows * m.cols, 0.0);
  m.role = Role::kRefined;
  char tag[48];
  std::snprintf(tag, sizeof(tag), "refined(gamma=%.4f)", gamma);
  m.source = tag;
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double ns = row_norm(smoothed.row(r), m.cols);
    const double nt = row_norm(soft.row(r), m.cols);
    if (ns <= kNormFloor || nt <= kNormFloor) {
      throw std::invalid_argument("refine_labels: zero-norm row " +
                                  std::to_string(r) + " in " +
                                  (ns <= kNormFloor ? "smoothed" : "soft") +
                                  " input");
    }
    const double ws = gamma / ns;
    const double wt = (1.0 - gamma) / nt;
    const double* srow = smoothed.row(r);
    const double* trow = soft.row(r);
    double* out = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) {
      out[c] = ws * srow[c] + wt * trow[c];
    }
  }
  return m;
}

double label_accuracy(const LabelMatrix& labels, const LabelMatrix& hard) {
  require_same_shape(labels, hard, "label_accuracy");
  if (labels.rows == 0) {
    throw std::invalid_argument("label_accuracy: empty input");
  }
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.rows; ++r) {
    if (labels.argmax_row(r) == hard.argmax_row(r)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.rows);
}

LabelMatrix take_rows(const LabelMatrix& m,
                      const std::vector<std::size_t>& indices) {
  LabelMatrix out;
  out.rows = indices.size();
  out.cols = m.cols;
  out.values.resize(out.rows * out.cols);
  out.role = m.role;
  out.source = m.source;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= m.rows) {
      throw std::out_of_range("take_rows: index " +
                              std::to_string(indices[r]) + " out of range");
    }
    std::memcpy(out.row(r), m.row(indices[r]), m.cols * sizeof(double));
  }
  return out;
}

LabelMatrix l1_normalized(const LabelMatrix& m) {
  LabelMatrix out = m;
  for (std::size_t r = 0; r < out.rows; ++r) {
    double* row = out.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) {
      if (row[c] < 0.0) {
        throw std::invalid_argument(
            "l1_normalized: negative entry at row " + std::to_string(r));
      }
      s += row[c];
    }
    if (s <= 0.0) {
      throw std::invalid_argument("l1_normalized: zero-sum row " +
                                  std::to_string(r));
    }
    for (std::size_t c = 0; c < out.cols; ++c) row[c] /= s;
  }
  out.role = Role::kSoft;
  out.source = m.source + "+l1";
  return out;
}

void save_labels(const LabelMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_labels: cannot open " + path);
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(m.rows));
  write_raw(out, static_cast<std::uint64_t>(m.cols));
  write_raw(out, static_cast<std::uint8_t>(m.role));
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_labels: write failed for " + path);
}

LabelMatrix load_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_labels: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_labels: bad magic in " + path);
  }
  std::uint32_t version = 0;
  read_raw(in, version);
  if (version != kVersion) {
    throw std::runtime_error("load_labels: unsupported version " +
                             std::to_string(version));
  }
  std::uint64_t rows = 0, cols = 0;
  std::uint8_t role = 0;
  read_raw(in, rows);
  read_raw(in, cols);
  read_raw(in, role);
  if (!in || role > 3) {
    throw std::runtime_error("load_labels: corrupt header in " + path);
  }
  LabelMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.role = static_cast<Role>(role);
  m.source = path;
  m.values.resize(rows * cols);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_labels: truncated file " + path);
  return m;
}

void export_csv(const LabelMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_csv: cannot open " + path);
  for (std::size_t c = 0; c < m.cols; ++c) {
    out << (c == 0 ? "" : ",") << "c" << c;
  }
  out << "\n";
  char buf[32];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.at(r, c));
      out << (c == 0 ? "" : ",") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("export_csv: write failed for " + path);
}

}  // namespace gift::labels
