#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "balkit/config.hpp"
#include "balkit/datasets.hpp"

namespace balkit {

// Partition of a dataset into labeled training indices and unlabeled pool
// indices (both kept sorted ascending), plus optional pseudo-label rows
// aligned with pool_indices.
struct PoolState {
  std::shared_ptr<const LabeledDataset> data;
  std::vector<int> train_indices;
  std::vector<int> pool_indices;
  std::optional<Eigen::MatrixXd> pseudo_labels;  // [pool x C]

  void validate() const;  // disjointness, bounds, row-stochastic pseudo labels
};

struct RoundRecord {
  int round = 0;
  int train_size = 0;
  double test_accuracy = 0.0;
  std::vector<int> selected_indices;
  std::string method_tag;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Balanced seeded initial training set: per_class examples per class.
PoolState make_initial_pool(std::shared_ptr<const LabeledDataset> data,
                            int per_class, Rng& rng);

double evaluate_accuracy(const MlpParams& params, const LabeledDataset& test);

// Everything a round computed before the oracle step; exposed so tests can
// assert that scores never depend on unacquired labels.
struct PoolScoringResult {
  BatchSelection selection;            // candidate positions into pool_indices
  std::vector<double> scores;          // per-candidate scores when applicable
  std::optional<Eigen::MatrixXd> pseudo_labels;
};

// Trains the parent (and, for evaluation-set methods, the self-distilled
// evaluation model), scores the pool and selects a batch of candidate
// positions. Reads no pool labels.
PoolScoringResult score_pool(const PoolState& state, const MethodConfig& method,
                             const ModelConfig& model, int effective_batch,
                             std::uint64_t round_seed, MlpParams* trained_parent);

struct RoundOutcome {
  PoolState state;
  RoundRecord record;
};

// One acquisition round: train, (distill), score, select, query the oracle,
// update the partition, evaluate test accuracy.
RoundOutcome run_round(const PoolState& state, const MethodConfig& method,
                       const ModelConfig& model, const LabeledDataset& test,
                       int round, int effective_batch, std::uint64_t experiment_seed,
                       bool measure_wall_time = true);

struct BuiltDataset {
  std::shared_ptr<const LabeledDataset> train;
  std::shared_ptr<const LabeledDataset> test;
};

// Loads or generates the base data and applies the configured perturbations,
// all deterministically from (config, seed).
BuiltDataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed);

using RecordSink = std::function<void(const RoundRecord&)>;
using FinalModelSink = std::function<void(std::uint64_t seed, const MlpParams&)>;

// Full experiment: for each seed, build the data, draw the balanced initial
// set and run rounds until the label budget is reached; a final record is
// emitted at the budget size. Records stream through the sink as they finish;
// model_sink receives each seed's final trained model (checkpointing).
std::vector<RoundRecord> run_experiment(const ExperimentConfig& config,
                                        const RecordSink& sink = {},
                                        const FinalModelSink& model_sink = {});

}  // namespace balkit
