#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "balkit/predictions.hpp"
#include "balkit/rng.hpp"

namespace balkit {

enum class JointMode { Exact, MonteCarlo };

// Incremental state for joint-entropy evaluation over a growing set of
// candidates. Exact mode enumerates all C^B class configurations; Monte Carlo
// mode carries m configurations sampled from the joint, their exact mixture
// log-probabilities (importance log-weights) and the posterior sample that
// generated each configuration (used to extend it by further members).
struct JointState {
  JointMode mode = JointMode::Exact;
  std::vector<int> member_indices;
  Eigen::MatrixXd config_probs;  // [R x K], product of member probs per sample
  std::vector<double> importance_log_weights;  // MC only, log Phat(config)
  std::vector<int> config_sample_ks;           // MC only, generator sample ids

  Eigen::Index rows() const { return config_probs.rows(); }
  int sample_count() const { return static_cast<int>(config_probs.cols()); }

  // Joint entropy of the current members, in nats. Exact: -sum P log P over
  // the mixture P(config) = mean_k config_probs. MC: -(1/m) sum log Phat.
  double entropy() const;

  // Exact mode: every column must sum to 1 within tol.
  void validate(double tol = 1e-9) const;
};

JointState make_joint_state_exact(const PosteriorPredictions& preds);
JointState make_joint_state_mc(const PosteriorPredictions& preds, int m, Rng& rng);

// Adds one member. Exact mode expands rows C-fold (checked against
// exact_config_limit); MC mode samples the new member's class per
// configuration and requires the rng the state was built with.
JointState joint_extend(const JointState& state, const PosteriorPredictions& preds,
                        int new_index,
                        int exact_config_limit = kDefaultExactConfigLimit);
JointState joint_extend(const JointState& state, const PosteriorPredictions& preds,
                        int new_index, Rng& rng,
                        int exact_config_limit = kDefaultExactConfigLimit);

// Joint entropy over distinct candidate indices by full enumeration.
// Requires C^B <= exact_config_limit.
double joint_entropy_exact(const PosteriorPredictions& preds,
                           std::span<const int> indices,
                           int exact_config_limit = kDefaultExactConfigLimit);

// Monte Carlo estimate: sample m configurations from the joint (sample k
// uniformly, then each member's class from p(. | omega_k)) and average
// -log Phat(config) where Phat is the exact mixture probability.
double joint_entropy_mc(const PosteriorPredictions& preds,
                        std::span<const int> indices, int m, Rng& rng);

}  // namespace balkit
