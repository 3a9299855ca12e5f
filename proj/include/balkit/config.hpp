#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "balkit/acquisition.hpp"
#include "balkit/mlp.hpp"

namespace balkit {

struct DatasetConfig {
  std::string source = "blobs";  // "blobs" | "idx"
  // idx source
  std::string train_images, train_labels, test_images, test_labels;
  int subsample = 0;  // 0 = use all train images
  // blobs source
  int classes = 4;
  int per_class = 50;
  int dim = 8;
  double separation = 3.0;
  int test_per_class = 200;
  // perturbations, applied in this order
  int copies = 1;
  double sigma = 0.1;
  double label_noise = 0.0;
  std::vector<double> keep_probs;  // empty = no imbalance
};

struct MethodConfig {
  AcquisitionMethod method = AcquisitionMethod::Random;
  int batch_size = 10;
  double alpha = 5.0;
  int mc_samples = kDefaultMcSamples;
  int exact_config_limit = kDefaultExactConfigLimit;
  int k = 0;            // 0 = per-method default (100 for Batch*, else 20)
  int uniform_top_c = 0;  // 0 = dataset class count

  int effective_k() const { return k > 0 ? k : method_default_k(method); }
};

struct ModelConfig {
  std::vector<int> hidden = {128, 128};
  double dropout = 0.5;
  TrainSchedule schedule;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  MethodConfig method;
  ModelConfig model;
  int budget = 150;
  int initial_per_class = 2;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output = "records.jsonl";
  bool measure_wall_time = true;
};

}  // namespace balkit
