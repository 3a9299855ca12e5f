#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "balkit/predictions.hpp"
#include "balkit/rng.hpp"

namespace balkit {

// MC-dropout multilayer perceptron: input -> hidden... -> classes, tanh
// hidden units, dropout on hidden activations.
struct MlpArchitecture {
  int input_dim = 0;
  std::vector<int> hidden = {128, 128};
  int class_count = 0;
  double dropout = 0.5;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
};

struct MlpParams {
  MlpArchitecture arch;
  std::vector<Eigen::MatrixXd> weights;  // [out x in] per layer
  std::vector<Eigen::VectorXd> biases;
};

struct TrainSchedule {
  int epochs = 30;
  int minibatch = 64;
  double learning_rate = 0.05;
  int oversample_target = 5096;  // per-epoch stream length, with replacement
  double weight_decay = 0.0;
  double momentum = 0.9;
  bool sample_with_replacement = true;
  std::uint64_t seed = 0;
};

struct SoftLabelSet {
  Eigen::MatrixXd inputs;        // [M x D]
  Eigen::MatrixXd soft_targets;  // [M x C], rows sum to 1 within 1e-6

  Eigen::Index size() const { return inputs.rows(); }
};

// Deterministic scaled-uniform fan-in initialization; biases zero.
MlpParams init_model(const MlpArchitecture& arch, std::uint64_t seed);

// Minibatch SGD with momentum on mean cross-entropy, dropout active,
// per-epoch sample stream of length oversample_target drawn with replacement.
MlpParams train_supervised(const MlpParams& init, const Eigen::MatrixXd& inputs,
                           const std::vector<int>& labels,
                           const TrainSchedule& schedule);

// Same trainer on a combined stream of hard (cross-entropy) and soft
// (KL(soft || model)) examples, mixed proportionally to set sizes. With an
// empty soft set this follows the exact same update trajectory as
// train_supervised under the same schedule.
MlpParams train_distilled(const MlpParams& init, const Eigen::MatrixXd& hard_inputs,
                          const std::vector<int>& hard_labels,
                          const SoftLabelSet& soft, const TrainSchedule& schedule);

// k stochastic forward passes; pass j uses an independent seeded dropout mask
// shared across all inputs (one posterior sample applied to the whole batch).
PosteriorPredictions predict_mc(const MlpParams& params, const Eigen::MatrixXd& inputs,
                                int k, std::uint64_t seed);

// Deterministic forward pass, dropout disabled; K = 1.
PosteriorPredictions predict_point(const MlpParams& params,
                                   const Eigen::MatrixXd& inputs);

// Mean cross-entropy of hard labels under the deterministic forward pass.
double mean_cross_entropy(const MlpParams& params, const Eigen::MatrixXd& inputs,
                          const std::vector<int>& labels);

// Mean KL(soft_targets || model predictive), deterministic forward pass.
// This is the distillation loss term; exactly 0 when targets equal the
// model's own predictions.
double mean_kl_to_model(const MlpParams& params, const SoftLabelSet& soft);

// Norm of the analytic cross-entropy gradient (dropout disabled).
double gradient_norm(const MlpParams& params, const Eigen::MatrixXd& inputs,
                     const std::vector<int>& labels);

// Compares analytic gradients against central finite differences
// (step 1e-5, dropout disabled) over every parameter and returns the max
// relative error |g - g_fd| / max(|g| + |g_fd|, 1e-3).
double check_gradients(const MlpParams& params, const Eigen::MatrixXd& inputs,
                       const std::vector<int>& labels);

// Versioned binary checkpoint: magic "IAQM", u32 version, arch dims,
// little-endian f64 arrays in layer order.
void save_checkpoint(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint(const std::string& path);

}  // namespace balkit
