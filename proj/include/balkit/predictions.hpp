#pragma once

#include <span>
#include <vector>

namespace balkit {

// All entropies and mutual informations are in nats.
inline constexpr double kProbFloor = 1e-300;  // clamp before taking logs
inline constexpr int kDefaultExactConfigLimit = 10000;
inline constexpr int kDefaultMcSamples = 8192;

// Posterior-predictive log-probability tensor, layout [N x K x C] with the
// class axis fastest. Each (n, k) slice is a normalized log-distribution:
// logsumexp over classes == 0 within 1e-6, entries <= 0, no NaN/Inf, K >= 1,
// C >= 2. Construction validates all of this.
class PosteriorPredictions {
 public:
  PosteriorPredictions() = default;
  PosteriorPredictions(std::vector<double> log_probs, int n, int k, int c);

  int n() const { return n_; }
  int k() const { return k_; }
  int c() const { return c_; }

  const double* slice(int n_idx, int k_idx) const {
    return log_probs_.data() + (static_cast<std::size_t>(n_idx) * k_ + k_idx) * c_;
  }
  double log_prob(int n_idx, int k_idx, int c_idx) const {
    return slice(n_idx, k_idx)[c_idx];
  }
  std::span<const double> raw() const { return log_probs_; }

 private:
  std::vector<double> log_probs_;
  int n_ = 0, k_ = 0, c_ = 0;
};

// log of the posterior-mean predictive for candidate n, length C.
// Computed as logsumexp over the K samples minus log K.
std::vector<double> log_marginal_predictive(const PosteriorPredictions& preds, int n);

// Shannon entropy of the marginal predictive, in [0, ln C].
double predictive_entropy(const PosteriorPredictions& preds, int n);

// Mean over posterior samples of the per-sample predictive entropy.
double expected_conditional_entropy(const PosteriorPredictions& preds, int n);

// -sum p log p with 0 log 0 = 0, over an unnormalized-tolerant prob row.
double entropy_of_probs(const double* probs, int count);
// Same, from a log-probability row.
double entropy_of_log_probs(const double* log_probs, int count);

}  // namespace balkit
