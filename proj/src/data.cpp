// SPDX-License-Identifier: Apache-2.0

#include "gift/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gift::data {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("load_idx: truncated file " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

double bilinear(const double* plane, std::size_t h, std::size_t w, double y,
                double x) {
  // Zero padding outside [0,h)x[0,w).
  const long y0 = static_cast<long>(std::floor(y));
  const long x0 = static_cast<long>(std::floor(x));
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  auto at = [&](long yy, long xx) -> double {
    if (yy < 0 || yy >= static_cast<long>(h) || xx < 0 ||
        xx >= static_cast<long>(w)) {
      return 0.0;
    }
    return plane[static_cast<std::size_t>(yy) * w +
                 static_cast<std::size_t>(xx)];
  };
  return (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

// Applies the inverse-mapped affine transform src = M*(p-c)+c per plane.
Tensor warp(const Tensor& batch, double m00, double m01, double m10,
            double m11) {
  const std::size_t n = batch.dim(0), c = batch.dim(1);
  const std::size_t h = batch.dim(2), w = batch.dim(3);
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  Tensor out(batch.shape());
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* in = batch.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double dy = static_cast<double>(i) - cy;
        const double dx = static_cast<double>(j) - cx;
        const double sy = m00 * dy + m01 * dx + cy;
        const double sx = m10 * dy + m11 * dx + cx;
        double v = bilinear(in, h, w, sy, sx);
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        dst[i * w + j] = v;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> DatasetBundle::classes() const {
  std::vector<std::size_t> out(hard.rows);
  for (std::size_t r = 0; r < hard.rows; ++r) out[r] = hard.argmax_row(r);
  return out;
}

void DatasetBundle::copy_sample(std::size_t index, double* dst) const {
  const std::size_t stride = sample_size();
  std::memcpy(dst, images.data() + index * stride, stride * sizeof(double));
}

DatasetBundle load_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("load_idx: cannot open " + images_path);
  const std::uint32_t image_magic = read_be32(img, images_path);
  if (image_magic != kImageMagic) {
    throw std::runtime_error("load_idx: bad magic in " + images_path);
  }
  const std::uint32_t n = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("load_idx: cannot open " + labels_path);
  const std::uint32_t label_magic = read_be32(lab, labels_path);
  if (label_magic != kLabelMagic) {
    throw std::runtime_error("load_idx: bad magic in " + labels_path);
  }
  const std::uint32_t label_n = read_be32(lab, labels_path);
  if (label_n != n) {
    throw std::runtime_error(
        "load_idx: count mismatch: " + std::to_string(n) + " images vs " +
        std::to_string(label_n) + " labels");
  }

  std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * rows * cols);
  img.read(reinterpret_cast<char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
  if (!img) throw std::runtime_error("load_idx: truncated file " + images_path);
  std::vector<unsigned char> raw_labels(n);
  lab.read(reinterpret_cast<char*>(raw_labels.data()), n);
  if (!lab) throw std::runtime_error("load_idx: truncated file " + labels_path);

  DatasetBundle bundle;
  bundle.images = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    bundle.images[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  std::size_t class_count = 0;
  for (unsigned char l : raw_labels) {
    class_count = std::max<std::size_t>(class_count, l + 1);
  }
  class_count = std::max<std::size_t>(class_count, 2);
  std::vector<std::size_t> classes(raw_labels.begin(), raw_labels.end());
  bundle.hard = labels::one_hot(classes, class_count);
  bundle.class_count = class_count;
  bundle.name = images_path;
  return bundle;
}

DatasetBundle make_synthetic(SyntheticKind kind, std::size_t classes,
                             std::size_t per_class, std::size_t dim_or_size,
                             double noise, std::uint64_t seed) {
  if (classes < 2) {
    throw std::invalid_argument("make_synthetic: classes must be >= 2");
  }
  if (per_class < 1) {
    throw std::invalid_argument("make_synthetic: per_class must be >= 1");
  }
  const std::size_t n = classes * per_class;
  Rng rng(seed);
  DatasetBundle bundle;
  bundle.class_count = classes;
  std::vector<std::size_t> class_of(n);

  if (kind == SyntheticKind::kBlobs) {
    // Unit one-hot centers: mutually equidistant (a regular simplex's
    // vertices), so class geometry is symmetric and noise alone sets the
    // overlap.
    if (dim_or_size < classes) {
      throw std::invalid_argument(
          "make_synthetic: blobs need dim >= classes for simplex-spread "
          "centers");
    }
    bundle.images = Tensor({n, dim_or_size});
    bundle.name = "blobs";
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i, ++row) {
        double* x = bundle.images.data() + row * dim_or_size;
        for (std::size_t d = 0; d < dim_or_size; ++d) {
          x[d] = noise * rng.normal();
        }
        x[c] += 1.0;
        class_of[row] = c;
      }
    }
  } else {
    bundle.images = Tensor({n, 2});
    bundle.name = "spirals";
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double phase =
          2.0 * kPi * static_cast<double>(c) / static_cast<double>(classes);
      for (std::size_t i = 0; i < per_class; ++i, ++row) {
        const double t =
            static_cast<double>(i) / static_cast<double>(per_class);
        const double radius = 0.1 + 0.9 * t;
        const double theta = phase + 3.0 * kPi * t;
        double* x = bundle.images.data() + row * 2;
        x[0] = radius * std::cos(theta) + noise * rng.normal();
        x[1] = radius * std::sin(theta) + noise * rng.normal();
        class_of[row] = c;
      }
    }
  }
  bundle.hard = labels::one_hot(class_of, classes);
  return bundle;
}

std::vector<std::size_t> ipc_subset_indices(const DatasetBundle& bundle,
                                            std::size_t ipc,
                                            std::uint64_t seed) {
  if (ipc < 1) {
    throw std::invalid_argument("select_ipc_subset: ipc must be >= 1");
  }
  std::vector<std::vector<std::size_t>> per_class(bundle.class_count);
  const std::vector<std::size_t> classes = bundle.classes();
  for (std::size_t r = 0; r < classes.size(); ++r) {
    per_class[classes[r]].push_back(r);
  }
  Rng rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(ipc * bundle.class_count);
  for (std::size_t c = 0; c < bundle.class_count; ++c) {
    if (per_class[c].size() < ipc) {
      throw std::invalid_argument(
          "select_ipc_subset: class " + std::to_string(c) + " has only " +
          std::to_string(per_class[c].size()) + " samples, need " +
          std::to_string(ipc));
    }
    rng.shuffle(per_class[c]);
    picks.insert(picks.end(), per_class[c].begin(),
                 per_class[c].begin() + static_cast<long>(ipc));
  }
  return picks;
}

DatasetBundle take_rows(const DatasetBundle& bundle,
                        const std::vector<std::size_t>& indices) {
  DatasetBundle out;
  out.class_count = bundle.class_count;
  out.name = bundle.name;
  std::vector<std::size_t> shape = bundle.images.shape();
  shape[0] = indices.size();
  out.images = Tensor(shape);
  const std::size_t stride = bundle.sample_size();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= bundle.size()) {
      throw std::out_of_range("take_rows: index out of range");
    }
    bundle.copy_sample(indices[r], out.images.data() + r * stride);
  }
  out.hard = labels::take_rows(bundle.hard, indices);
  if (bundle.soft.has_value()) {
    out.soft = labels::take_rows(*bundle.soft, indices);
  }
  if (bundle.teacher_logits.has_value()) {
    const Tensor& src = *bundle.teacher_logits;
    Tensor logits({indices.size(), src.cols()});
    for (std::size_t r = 0; r < indices.size(); ++r) {
      std::memcpy(logits.data() + r * src.cols(),
                  src.data() + indices[r] * src.cols(),
                  src.cols() * sizeof(double));
    }
    out.teacher_logits = std::move(logits);
  }
  return out;
}

DatasetBundle select_ipc_subset(const DatasetBundle& bundle, std::size_t ipc,
                                std::uint64_t seed) {
  DatasetBundle out = take_rows(bundle, ipc_subset_indices(bundle, ipc, seed));
  char tag[64];
  std::snprintf(tag, sizeof(tag), "%s/ipc%zu", bundle.name.c_str(), ipc);
  out.name = tag;
  return out;
}

AugmentConfig AugmentConfig::all() {
  AugmentConfig cfg;
  cfg.ops = {AugmentOp::kFlip, AugmentOp::kCrop, AugmentOp::kCutout,
             AugmentOp::kRotate, AugmentOp::kScale};
  return cfg;
}

AugmentConfig AugmentConfig::parse(const std::string& text) {
  AugmentConfig cfg;
  if (text.empty() || text == "none") return cfg;
  if (text == "all") return all();
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const std::string op = text.substr(start, end - start);
    if (op == "flip") {
      cfg.ops.insert(AugmentOp::kFlip);
    } else if (op == "crop") {
      cfg.ops.insert(AugmentOp::kCrop);
    } else if (op == "cutout") {
      cfg.ops.insert(AugmentOp::kCutout);
    } else if (op == "rotate") {
      cfg.ops.insert(AugmentOp::kRotate);
    } else if (op == "scale") {
      cfg.ops.insert(AugmentOp::kScale);
    } else if (!op.empty()) {
      throw std::invalid_argument("augment: unknown op '" + op + "'");
    }
    start = end + 1;
  }
  return cfg;
}

std::string AugmentConfig::text() const {
  if (ops.empty()) return "none";
  std::string out;
  auto append = [&](AugmentOp op, const char* name) {
    if (ops.count(op) != 0) {
      if (!out.empty()) out += ",";
      out += name;
    }
  };
  append(AugmentOp::kFlip, "flip");
  append(AugmentOp::kCrop, "crop");
  append(AugmentOp::kCutout, "cutout");
  append(AugmentOp::kRotate, "rotate");
  append(AugmentOp::kScale, "scale");
  return out;
}

Tensor augment_batch(const Tensor& batch, const AugmentConfig& cfg, Rng& rng) {
  if (batch.rank() != 4) {
    throw std::invalid_argument("augment_batch: 4-D image batch required");
  }
  if (cfg.ops.empty()) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr,
                   "augment_batch: empty op set, returning inputs as-is\n");
      warned = true;
    }
    return batch;
  }
  std::vector<AugmentOp> ops(cfg.ops.begin(), cfg.ops.end());
  const AugmentOp op = ops[rng.below(ops.size())];
  const std::size_t n = batch.dim(0), c = batch.dim(1);
  const std::size_t h = batch.dim(2), w = batch.dim(3);

  switch (op) {
    case AugmentOp::kFlip: {
      if (rng.uniform() >= cfg.flip_prob) return batch;
      Tensor out(batch.shape());
      for (std::size_t p = 0; p < n * c; ++p) {
        const double* in = batch.data() + p * h * w;
        double* dst = out.data() + p * h * w;
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            dst[i * w + j] = in[i * w + (w - 1 - j)];
          }
        }
      }
      return out;
    }
    case AugmentOp::kCrop: {
      const long pad =
          static_cast<long>(std::lround(cfg.crop_pad * static_cast<double>(w)));
      if (pad == 0) return batch;
      const long di = static_cast<long>(rng.below(2 * pad + 1)) - pad;
      const long dj = static_cast<long>(rng.below(2 * pad + 1)) - pad;
      Tensor out(batch.shape());
      for (std::size_t p = 0; p < n * c; ++p) {
        const double* in = batch.data() + p * h * w;
        double* dst = out.data() + p * h * w;
        for (std::size_t i = 0; i < h; ++i) {
          const long si = static_cast<long>(i) + di;
          for (std::size_t j = 0; j < w; ++j) {
            const long sj = static_cast<long>(j) + dj;
            const bool inside = si >= 0 && si < static_cast<long>(h) &&
                                sj >= 0 && sj < static_cast<long>(w);
            dst[i * w + j] =
                inside ? in[static_cast<std::size_t>(si) * w +
                            static_cast<std::size_t>(sj)]
                       : 0.0;
          }
        }
      }
      return out;
    }
    case AugmentOp::kCutout: {
      const std::size_t side = static_cast<std::size_t>(
          std::lround(cfg.cutout_ratio * static_cast<double>(h)));
      if (side == 0) return batch;
      const std::size_t max_side = std::min({side, h, w});
      const std::size_t top = rng.below(h - max_side + 1);
      const std::size_t left = rng.below(w - max_side + 1);
      Tensor out = batch;
      for (std::size_t p = 0; p < n * c; ++p) {
        double* dst = out.data() + p * h * w;
        for (std::size_t i = top; i < top + max_side; ++i) {
          for (std::size_t j = left; j < left + max_side; ++j) {
            dst[i * w + j] = 0.0;
          }
        }
      }
      return out;
    }
    case AugmentOp::kRotate: {
      const double angle =
          rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees) * kPi / 180.0;
      // Inverse rotation: src = R(-angle) * (p - center) + center.
      const double cs = std::cos(angle), sn = std::sin(angle);
      return warp(batch, cs, sn, -sn, cs);
    }
    case AugmentOp::kScale: {
      const double s = rng.uniform(1.0 / cfg.scale_ratio, cfg.scale_ratio);
      const double inv = 1.0 / s;
      return warp(batch, inv, 0.0, 0.0, inv);
    }
  }
  return batch;
}

std::size_t default_batch_size(std::size_t dataset_size) {
  if (dataset_size == 0) {
    throw std::invalid_argument("default_batch_size: empty dataset");
  }
  if (dataset_size <= 10) return 10;
  if (dataset_size <= 500) return 50;
  if (dataset_size <= 20000) return 100;
  return 200;
}

}  // namespace gift::data
