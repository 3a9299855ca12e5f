#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "balkit/joint.hpp"
#include "balkit/predictions.hpp"
#include "balkit/rng.hpp"

namespace balkit {

enum class AcquisitionMethod {
  Random,
  Bald,
  BatchBald,
  Eig,
  EvalBald,
  BatchEvalBald,
  PowerBald,
  PowerEig,
  PowerEvalBald,
  ThompsonBald,
  UniformTop,
};

const char* method_name(AcquisitionMethod m);
std::optional<AcquisitionMethod> method_from_name(const std::string& name);
bool method_needs_eval_model(AcquisitionMethod m);
bool method_needs_posterior(AcquisitionMethod m);  // requires K >= 2
int method_default_k(AcquisitionMethod m);         // 100 for Batch*, else 20

// Per-candidate acquisition scores in nats, aligned with pool_indices.
struct ScoreVector {
  std::vector<double> scores;
  std::vector<int> pool_indices;

  int size() const { return static_cast<int>(scores.size()); }
};

ScoreVector make_score_vector(std::vector<double> scores);  // identity indices

// Ordered acquired candidate positions with per-step diagnostic scores:
// the running joint objective for greedy methods, the individual score
// otherwise.
struct BatchSelection {
  std::vector<int> indices;
  std::vector<double> step_scores;
  std::string method_tag;
  std::optional<std::uint64_t> seed;
};

struct McConfig {
  int mc_samples = kDefaultMcSamples;
  int exact_config_limit = kDefaultExactConfigLimit;
};

// BALD: H[y | x] - E_omega H[y | x, omega], clamped to >= 0 after a -1e-9
// sanity check. Requires K >= 2.
ScoreVector score_bald(const PosteriorPredictions& preds);

// EIG per-point form: predictive entropy under the parent model minus
// predictive entropy under the evaluation model; may be slightly negative.
ScoreVector score_eig(const PosteriorPredictions& parent,
                      const PosteriorPredictions& eval);

// EvaluationBALD per-point form: BALD under the parent minus BALD under the
// evaluation model; negative values are meaningful.
ScoreVector score_evalbald(const PosteriorPredictions& parent,
                           const PosteriorPredictions& eval);

// Top-b by score, ties broken by lowest pool index. b > N returns the whole
// pool (flagged in method_tag).
BatchSelection select_top_k(const ScoreVector& scores, int b);

// Greedy maximization of the joint mutual information
// H[(y)_batch] - sum E_omega H[y_b | omega]; exact joint entropies while the
// configuration count stays within the limit, Monte Carlo after.
BatchSelection select_batchbald(const PosteriorPredictions& preds, int b,
                                const McConfig& mc, Rng& rng);

// Greedy maximization of the difference of the two joint-MI objectives
// (parent minus evaluation model), two joint states in lockstep.
BatchSelection select_batch_evalbald(const PosteriorPredictions& parent,
                                     const PosteriorPredictions& eval, int b,
                                     const McConfig& mc, Rng& rng);

// Sample b indices without replacement with probabilities proportional to
// max(score, 1e-12)^alpha, via the Gumbel-top-k construction (distributed
// identically to sequential renormalized draws).
BatchSelection sample_power(const ScoreVector& scores, int b, double alpha,
                            Rng& rng);

// Uniformly sample b distinct indices from the top b*c scorers.
BatchSelection sample_uniform_top(const ScoreVector& scores, int b,
                                  int class_count, Rng& rng);

// ThompsonBALD: split the K posterior samples into b disjoint groups by a
// seeded shuffle; slot j takes the best remaining candidate by the BALD
// estimate of group j alone. Requires K >= 2b.
BatchSelection sample_thompson(const PosteriorPredictions& preds, int b, Rng& rng);

// Uniform b-subset in random order.
BatchSelection select_random(int n, int b, Rng& rng);

}  // namespace balkit
