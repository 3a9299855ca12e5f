#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "balkit/rng.hpp"

namespace balkit {

struct LabeledDataset {
  Eigen::MatrixXd inputs;  // [M x D], values in [0, 1]
  std::vector<int> labels;
  int class_count = 0;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }
};

// Parses big-endian IDX files: images magic 0x00000803 with dims [M, R, C]
// (pixels scaled to [0,1] and flattened), labels magic 0x00000801 with [M].
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Repeated dataset: copy 0 is the original, further copies add i.i.d.
// Gaussian noise (std sigma) clamped to [0, 1]; labels replicated.
LabeledDataset make_repeated(const LabeledDataset& data, int copies, double sigma,
                             Rng& rng);

// Each label is independently replaced, with probability rate, by a uniform
// draw over the other C-1 classes.
LabeledDataset apply_label_noise(const LabeledDataset& data, double rate, Rng& rng);

// Each example is kept independently with probability keep_probs[label].
LabeledDataset apply_class_imbalance(const LabeledDataset& data,
                                     const std::vector<double>& keep_probs,
                                     Rng& rng);

// Isotropic unit-variance Gaussian blobs centered at scaled basis vertices,
// rescaled into [0, 1]. Fast analytic test bed.
LabeledDataset make_blobs(int class_count, int per_class, int dim,
                          double separation, Rng& rng);

// Rows of `data` at the given indices.
LabeledDataset subset(const LabeledDataset& data, const std::vector<int>& indices);

}  // namespace balkit
