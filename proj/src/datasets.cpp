#include "balkit/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace balkit {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_idx: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw std::runtime_error("load_idx: truncated header in " + path);
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const std::vector<unsigned char> img = read_file(images_path);
  const std::vector<unsigned char> lbl = read_file(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != 0x00000803u) {
    throw std::runtime_error("load_idx: bad image magic in " + images_path +
                             " (expected 0x00000803)");
  }
  const std::uint32_t count = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (img.size() != 16 + static_cast<std::size_t>(count) * pixels) {
    throw std::runtime_error("load_idx: image payload length mismatch in " +
                             images_path);
  }

  const std::uint32_t lbl_magic = read_be32(lbl, 0, labels_path);
  if (lbl_magic != 0x00000801u) {
    throw std::runtime_error("load_idx: bad label magic in " + labels_path +
                             " (expected 0x00000801)");
  }
  const std::uint32_t lbl_count = read_be32(lbl, 4, labels_path);
  if (lbl_count != count) {
    throw std::runtime_error("load_idx: image/label count mismatch (" +
                             std::to_string(count) + " vs " +
                             std::to_string(lbl_count) + ")");
  }
  if (lbl.size() != 8 + static_cast<std::size_t>(count)) {
    throw std::runtime_error("load_idx: label payload length mismatch in " +
                             labels_path);
  }

  LabeledDataset data;
  data.inputs.resize(count, pixels);
  data.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const unsigned char* src = img.data() + 16 + static_cast<std::size_t>(i) * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      data.inputs(i, static_cast<Eigen::Index>(p)) = src[p] / 255.0;
    }
    data.labels[i] = lbl[8 + i];
  }
  int max_label = 0;
  for (int l : data.labels) max_label = std::max(max_label, l);
  data.class_count = max_label + 1;
  return data;
}

LabeledDataset make_repeated(const LabeledDataset& data, int copies, double sigma,
                             Rng& rng) {
  if (copies < 1) throw std::invalid_argument("make_repeated: copies must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("make_repeated: sigma must be >= 0");
  const Eigen::Index m = data.size();
  const Eigen::Index d = data.dim();

  LabeledDataset out;
  out.class_count = data.class_count;
  out.inputs.resize(m * copies, d);
  out.labels.resize(m * copies);
  out.inputs.topRows(m) = data.inputs;
  std::copy(data.labels.begin(), data.labels.end(), out.labels.begin());
  for (int copy = 1; copy < copies; ++copy) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index row = copy * m + i;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double noisy = data.inputs(i, j) + sigma * sample_normal(rng);
        out.inputs(row, j) = std::clamp(noisy, 0.0, 1.0);
      }
      out.labels[row] = data.labels[i];
    }
  }
  return out;
}

LabeledDataset apply_label_noise(const LabeledDataset& data, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("apply_label_noise: rate must be in [0, 1]");
  }
  LabeledDataset out = data;
  const int c = data.class_count;
  for (auto& label : out.labels) {
    if (uniform_unit(rng) < rate) {
      const int shift = 1 + uniform_index(rng, c - 1);
      label = (label + shift) % c;
    }
  }
  return out;
}

LabeledDataset apply_class_imbalance(const LabeledDataset& data,
                                     const std::vector<double>& keep_probs,
                                     Rng& rng) {
  if (static_cast<int>(keep_probs.size()) != data.class_count) {
    throw std::invalid_argument("apply_class_imbalance: keep_probs length must be C");
  }
  bool any_positive = false;
  for (double p : keep_probs) {
    if (p < 0.0 || p > 1.0) {
      throw std::invalid_argument("apply_class_imbalance: keep probabilities in [0, 1]");
    }
    any_positive = any_positive || p > 0.0;
  }
  if (!any_positive) {
    throw std::invalid_argument("apply_class_imbalance: all-zero keep_probs");
  }

  std::vector<int> kept;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (uniform_unit(rng) < keep_probs[data.labels[i]]) {
      kept.push_back(static_cast<int>(i));
    }
  }
  if (kept.empty()) {
    throw std::runtime_error("apply_class_imbalance: no examples survived");
  }
  return subset(data, kept);
}

LabeledDataset make_blobs(int class_count, int per_class, int dim,
                          double separation, Rng& rng) {
  if (class_count < 2 || per_class < 1 || dim < 1) {
    throw std::invalid_argument("make_blobs: class_count, per_class, dim must be positive");
  }
  if (separation < 0.0) throw std::invalid_argument("make_blobs: separation must be >= 0");

  LabeledDataset out;
  out.class_count = class_count;
  out.inputs.resize(static_cast<Eigen::Index>(class_count) * per_class, dim);
  out.labels.resize(static_cast<std::size_t>(class_count) * per_class);
  for (int cls = 0; cls < class_count; ++cls) {
    // vertex for class cls: separation * (1 + wrap) along axis cls mod dim
    const int axis = cls % dim;
    const double scale = separation * (1.0 + cls / dim);
    for (int s = 0; s < per_class; ++s) {
      const Eigen::Index row = static_cast<Eigen::Index>(cls) * per_class + s;
      for (int j = 0; j < dim; ++j) {
        out.inputs(row, j) = (j == axis ? scale : 0.0) + sample_normal(rng);
      }
      out.labels[row] = cls;
    }
  }

  const double lo = out.inputs.minCoeff();
  const double hi = out.inputs.maxCoeff();
  if (hi > lo) {
    out.inputs = (out.inputs.array() - lo) / (hi - lo);
  } else {
    out.inputs.setConstant(0.5);
  }
  return out;
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<int>& indices) {
  LabeledDataset out;
  out.class_count = data.class_count;
  out.inputs.resize(indices.size(), data.dim());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= data.size()) {
      throw std::out_of_range("subset: index out of range");
    }
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(idx);
    out.labels[i] = data.labels[idx];
  }
  return out;
}

}  // namespace balkit
