#include "balkit/joint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace balkit {

namespace {

void require_new_member(const JointState& state, int new_index, int n) {
  if (new_index < 0 || new_index >= n) {
    throw std::out_of_range("joint_extend: candidate index out of range");
  }
  if (std::find(state.member_indices.begin(), state.member_indices.end(),
                new_index) != state.member_indices.end()) {
    throw std::invalid_argument("joint_extend: duplicate member index");
  }
}

void require_distinct(std::span<const int> indices) {
  std::vector<int> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("joint entropy: indices must be distinct");
  }
}

}  // namespace

double JointState::entropy() const {
  if (mode == JointMode::Exact) {
    const Eigen::ArrayXd mixture =
        config_probs.rowwise().mean().array().max(0.0);
    return std::max(
        -(mixture * mixture.max(kProbFloor).log()).sum(), 0.0);
  }
  if (importance_log_weights.empty()) return 0.0;
  double acc = 0.0;
  for (double lw : importance_log_weights) acc += lw;
  return -acc / static_cast<double>(importance_log_weights.size());
}

void JointState::validate(double tol) const {
  if (mode == JointMode::Exact) {
    for (Eigen::Index k = 0; k < config_probs.cols(); ++k) {
      const double sum = config_probs.col(k).sum();
      if (std::abs(sum - 1.0) > tol) {
        throw std::logic_error("JointState: exact column " + std::to_string(k) +
                               " sums to " + std::to_string(sum));
      }
    }
  }
  std::vector<int> sorted = member_indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::logic_error("JointState: duplicate member indices");
  }
}

JointState make_joint_state_exact(const PosteriorPredictions& preds) {
  JointState state;
  state.mode = JointMode::Exact;
  state.config_probs = Eigen::MatrixXd::Ones(1, preds.k());
  return state;
}

JointState make_joint_state_mc(const PosteriorPredictions& preds, int m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("make_joint_state_mc: m must be >= 1");
  JointState state;
  state.mode = JointMode::MonteCarlo;
  state.config_probs = Eigen::MatrixXd::Ones(m, preds.k());
  state.importance_log_weights.assign(m, 0.0);
  state.config_sample_ks.resize(m);
  for (int i = 0; i < m; ++i) state.config_sample_ks[i] = uniform_index(rng, preds.k());
  return state;
}

JointState joint_extend(const JointState& state, const PosteriorPredictions& preds,
                        int new_index, int exact_config_limit) {
  if (state.mode != JointMode::Exact) {
    throw std::invalid_argument("joint_extend: Monte Carlo state requires an rng");
  }
  require_new_member(state, new_index, preds.n());
  const int c = preds.c();
  const int k = preds.k();
  if (state.rows() * c > exact_config_limit) {
    throw std::invalid_argument(
        "joint_extend: configuration count would exceed the exact limit (" +
        std::to_string(state.rows() * c) + " > " +
        std::to_string(exact_config_limit) + ")");
  }

  JointState next;
  next.mode = JointMode::Exact;
  next.member_indices = state.member_indices;
  next.member_indices.push_back(new_index);
  next.config_probs.resize(state.rows() * c, k);
  for (int j = 0; j < k; ++j) {
    const double* lp = preds.slice(new_index, j);
    for (int cls = 0; cls < c; ++cls) {
      const double p = std::exp(lp[cls]);
      for (Eigen::Index r = 0; r < state.rows(); ++r) {
        next.config_probs(r * c + cls, j) = state.config_probs(r, j) * p;
      }
    }
  }
  return next;
}

JointState joint_extend(const JointState& state, const PosteriorPredictions& preds,
                        int new_index, Rng& rng, int exact_config_limit) {
  if (state.mode == JointMode::Exact) {
    return joint_extend(state, preds, new_index, exact_config_limit);
  }
  require_new_member(state, new_index, preds.n());
  const int k = preds.k();
  const int c = preds.c();
  const int m = static_cast<int>(state.rows());

  JointState next = state;
  next.member_indices.push_back(new_index);
  Eigen::MatrixXd member_probs(k, c);
  for (int j = 0; j < k; ++j) {
    const double* lp = preds.slice(new_index, j);
    for (int cls = 0; cls < c; ++cls) member_probs(j, cls) = std::exp(lp[cls]);
  }
  const double log_k = std::log(static_cast<double>(k));
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd gen_row = member_probs.row(state.config_sample_ks[i]);
    const int drawn = sample_categorical(rng, gen_row.data(), c);
    next.config_probs.row(i).array() *= member_probs.col(drawn).transpose().array();
    // exact mixture probability of the extended configuration
    const double max_p = std::max(next.config_probs.row(i).maxCoeff(), kProbFloor);
    const double acc = (next.config_probs.row(i).array() / max_p).sum();
    next.importance_log_weights[i] = std::log(max_p) + std::log(acc) - log_k;
  }
  return next;
}

double joint_entropy_exact(const PosteriorPredictions& preds,
                           std::span<const int> indices, int exact_config_limit) {
  require_distinct(indices);
  double config_count = 1.0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    config_count *= preds.c();
    if (config_count > exact_config_limit) {
      throw std::invalid_argument(
          "joint_entropy_exact: C^B exceeds the configuration limit");
    }
  }
  JointState state = make_joint_state_exact(preds);
  for (int idx : indices) state = joint_extend(state, preds, idx, exact_config_limit);
  return state.entropy();
}

double joint_entropy_mc(const PosteriorPredictions& preds,
                        std::span<const int> indices, int m, Rng& rng) {
  require_distinct(indices);
  if (m < 1) throw std::invalid_argument("joint_entropy_mc: m must be >= 1");
  JointState state = make_joint_state_mc(preds, m, rng);
  for (int idx : indices) {
    state = joint_extend(state, preds, idx, rng);
  }
  return state.entropy();
}

}  // namespace balkit
