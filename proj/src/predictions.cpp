#include "balkit/predictions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace balkit {

namespace {

constexpr double kNormalizationTol = 1e-6;

double log_sum_exp(const double* values, int count, int stride) {
  double max_val = values[0];
  for (int i = 1; i < count; ++i) max_val = std::max(max_val, values[i * stride]);
  double acc = 0.0;
  for (int i = 0; i < count; ++i) acc += std::exp(values[i * stride] - max_val);
  return max_val + std::log(acc);
}

}  // namespace

PosteriorPredictions::PosteriorPredictions(std::vector<double> log_probs, int n,
                                           int k, int c)
    : log_probs_(std::move(log_probs)), n_(n), k_(k), c_(c) {
  if (n_ < 1 || k_ < 1 || c_ < 2) {
    throw std::invalid_argument("PosteriorPredictions: need N >= 1, K >= 1, C >= 2");
  }
  const std::size_t expected =
      static_cast<std::size_t>(n_) * static_cast<std::size_t>(k_) * c_;
  if (log_probs_.size() != expected) {
    throw std::invalid_argument("PosteriorPredictions: tensor size does not match N*K*C");
  }
  for (double v : log_probs_) {
    if (!std::isfinite(v) || v > 0.0) {
      throw std::invalid_argument(
          "PosteriorPredictions: entries must be finite log-probabilities <= 0");
    }
  }
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < k_; ++j) {
      const double lse = log_sum_exp(slice(i, j), c_, 1);
      if (std::abs(lse) > kNormalizationTol) {
        throw std::invalid_argument(
            "PosteriorPredictions: slice (" + std::to_string(i) + ", " +
            std::to_string(j) + ") is not normalized (logsumexp = " +
            std::to_string(lse) + ")");
      }
    }
  }
}

std::vector<double> log_marginal_predictive(const PosteriorPredictions& preds, int n) {
  if (n < 0 || n >= preds.n()) {
    throw std::out_of_range("log_marginal_predictive: candidate index out of range");
  }
  const int k = preds.k();
  const int c = preds.c();
  const double log_k = std::log(static_cast<double>(k));
  std::vector<double> out(c);
  const double* base = preds.slice(n, 0);
  for (int cls = 0; cls < c; ++cls) {
    out[cls] = log_sum_exp(base + cls, k, c) - log_k;
  }
  return out;
}

double entropy_of_probs(const double* probs, int count) {
  double h = 0.0;
  for (int i = 0; i < count; ++i) {
    const double p = probs[i];
    if (p > 0.0) h -= p * std::log(std::max(p, kProbFloor));
  }
  return std::max(h, 0.0);
}

double entropy_of_log_probs(const double* log_probs, int count) {
  double h = 0.0;
  for (int i = 0; i < count; ++i) {
    const double p = std::exp(log_probs[i]);
    if (p > 0.0) h -= p * log_probs[i];
  }
  return std::max(h, 0.0);
}

double predictive_entropy(const PosteriorPredictions& preds, int n) {
  const std::vector<double> log_marginal = log_marginal_predictive(preds, n);
  return entropy_of_log_probs(log_marginal.data(), preds.c());
}

double expected_conditional_entropy(const PosteriorPredictions& preds, int n) {
  if (n < 0 || n >= preds.n()) {
    throw std::out_of_range("expected_conditional_entropy: candidate index out of range");
  }
  double acc = 0.0;
  for (int j = 0; j < preds.k(); ++j) {
    acc += entropy_of_log_probs(preds.slice(n, j), preds.c());
  }
  return acc / preds.k();
}

}  // namespace balkit
