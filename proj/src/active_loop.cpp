#include "balkit/active_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace balkit {

namespace {

enum SeedStream : std::uint64_t {
  kSeedParentInit = 11,
  kSeedParentTrain = 12,
  kSeedEvalInit = 13,
  kSeedEvalTrain = 14,
  kSeedParentPredict = 15,
  kSeedEvalPredict = 16,
  kSeedSelect = 17,
  kSeedSubsample = 21,
  kSeedRepeat = 22,
  kSeedLabelNoise = 23,
  kSeedImbalance = 24,
  kSeedBlobs = 25,
  kSeedInitialPool = 31,
  kSeedRound = 41,
};

Eigen::MatrixXd gather_rows(const LabeledDataset& data, const std::vector<int>& indices) {
  Eigen::MatrixXd out(indices.size(), data.dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = data.inputs.row(indices[i]);
  }
  return out;
}

std::vector<int> gather_labels(const LabeledDataset& data, const std::vector<int>& indices) {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = data.labels[indices[i]];
  return out;
}

MlpArchitecture arch_for(const LabeledDataset& data, const ModelConfig& model) {
  MlpArchitecture arch;
  arch.input_dim = static_cast<int>(data.dim());
  arch.hidden = model.hidden;
  arch.class_count = data.class_count;
  arch.dropout = model.dropout;
  return arch;
}

MlpParams train_parent(const PoolState& state, const ModelConfig& model,
                       std::uint64_t round_seed) {
  const MlpArchitecture arch = arch_for(*state.data, model);
  TrainSchedule schedule = model.schedule;
  schedule.seed = derive_seed(round_seed, kSeedParentTrain);
  return train_supervised(init_model(arch, derive_seed(round_seed, kSeedParentInit)),
                          gather_rows(*state.data, state.train_indices),
                          gather_labels(*state.data, state.train_indices), schedule);
}

// Marginal predictive probabilities per pool candidate, the soft targets for
// self-distillation.
Eigen::MatrixXd marginal_rows(const PosteriorPredictions& preds) {
  Eigen::MatrixXd out(preds.n(), preds.c());
  for (int i = 0; i < preds.n(); ++i) {
    const std::vector<double> lm = log_marginal_predictive(preds, i);
    double sum = 0.0;
    for (int cls = 0; cls < preds.c(); ++cls) {
      out(i, cls) = std::exp(lm[cls]);
      sum += out(i, cls);
    }
    out.row(i) /= sum;
  }
  return out;
}

}  // namespace

void PoolState::validate() const {
  if (!data) throw std::logic_error("PoolState: missing dataset");
  std::vector<int> all;
  all.reserve(train_indices.size() + pool_indices.size());
  all.insert(all.end(), train_indices.begin(), train_indices.end());
  all.insert(all.end(), pool_indices.begin(), pool_indices.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw std::logic_error("PoolState: train and pool indices overlap");
  }
  for (int idx : all) {
    if (idx < 0 || idx >= data->size()) {
      throw std::logic_error("PoolState: index outside dataset");
    }
  }
  if (pseudo_labels) {
    if (pseudo_labels->rows() != static_cast<Eigen::Index>(pool_indices.size()) ||
        pseudo_labels->cols() != data->class_count) {
      throw std::logic_error("PoolState: pseudo label shape mismatch");
    }
    for (Eigen::Index r = 0; r < pseudo_labels->rows(); ++r) {
      if (std::abs(pseudo_labels->row(r).sum() - 1.0) > 1e-6) {
        throw std::logic_error("PoolState: pseudo label row is not a distribution");
      }
    }
  }
}

PoolState make_initial_pool(std::shared_ptr<const LabeledDataset> data,
                            int per_class, Rng& rng) {
  if (per_class < 1) throw std::invalid_argument("make_initial_pool: per_class >= 1");
  std::vector<std::vector<int>> by_class(data->class_count);
  for (Eigen::Index i = 0; i < data->size(); ++i) {
    by_class[data->labels[i]].push_back(static_cast<int>(i));
  }

  PoolState state;
  state.data = std::move(data);
  for (int cls = 0; cls < static_cast<int>(by_class.size()); ++cls) {
    auto& members = by_class[cls];
    if (static_cast<int>(members.size()) < per_class) {
      throw std::invalid_argument("make_initial_pool: class " + std::to_string(cls) +
                                  " has fewer than " + std::to_string(per_class) +
                                  " examples");
    }
    for (int i = 0; i < per_class; ++i) {
      const int j = i + uniform_index(rng, static_cast<int>(members.size()) - i);
      std::swap(members[i], members[j]);
      state.train_indices.push_back(members[i]);
    }
  }
  std::sort(state.train_indices.begin(), state.train_indices.end());
  std::vector<char> in_train(state.data->size(), 0);
  for (int idx : state.train_indices) in_train[idx] = 1;
  for (Eigen::Index i = 0; i < state.data->size(); ++i) {
    if (!in_train[i]) state.pool_indices.push_back(static_cast<int>(i));
  }
  return state;
}

double evaluate_accuracy(const MlpParams& params, const LabeledDataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty test set");
  const PosteriorPredictions preds = predict_point(params, test.inputs);
  int correct = 0;
  for (int i = 0; i < preds.n(); ++i) {
    const double* lp = preds.slice(i, 0);
    int arg = 0;
    for (int cls = 1; cls < preds.c(); ++cls) {
      if (lp[cls] > lp[arg]) arg = cls;  // ties keep the lowest class id
    }
    if (arg == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

PoolScoringResult score_pool(const PoolState& state, const MethodConfig& method,
                             const ModelConfig& model, int effective_batch,
                             std::uint64_t round_seed, MlpParams* trained_parent) {
  if (state.pool_indices.empty()) {
    throw std::runtime_error("score_pool: pool exhausted");
  }
  const int k = method.effective_k();
  if (method_needs_posterior(method.method) && k < 2) {
    throw std::invalid_argument(std::string(method_name(method.method)) +
                                " requires K >= 2 MC samples");
  }

  const MlpParams parent = train_parent(state, model, round_seed);
  if (trained_parent != nullptr) *trained_parent = parent;

  const Eigen::MatrixXd pool_inputs = gather_rows(*state.data, state.pool_indices);
  const PosteriorPredictions parent_preds =
      predict_mc(parent, pool_inputs, k, derive_seed(round_seed, kSeedParentPredict));

  PoolScoringResult result;
  std::optional<PosteriorPredictions> eval_preds;
  if (method_needs_eval_model(method.method)) {
    // Pool set as evaluation set: soft targets are the parent's marginal
    // predictive over the pool; the evaluation model is trained from scratch
    // on hard train labels plus these soft pool targets.
    Eigen::MatrixXd pseudo = marginal_rows(parent_preds);
    SoftLabelSet soft{pool_inputs, pseudo};
    const MlpArchitecture arch = arch_for(*state.data, model);
    TrainSchedule schedule = model.schedule;
    schedule.seed = derive_seed(round_seed, kSeedEvalTrain);
    const MlpParams eval_model = train_distilled(
        init_model(arch, derive_seed(round_seed, kSeedEvalInit)),
        gather_rows(*state.data, state.train_indices),
        gather_labels(*state.data, state.train_indices), soft, schedule);
    eval_preds =
        predict_mc(eval_model, pool_inputs, k, derive_seed(round_seed, kSeedEvalPredict));
    result.pseudo_labels = std::move(pseudo);
  }

  Rng select_rng = make_rng(derive_seed(round_seed, kSeedSelect));
  const McConfig mc{method.mc_samples, method.exact_config_limit};
  const int b = effective_batch;
  BatchSelection selection;
  switch (method.method) {
    case AcquisitionMethod::Random:
      selection = select_random(static_cast<int>(state.pool_indices.size()), b, select_rng);
      break;
    case AcquisitionMethod::Bald: {
      ScoreVector scores = score_bald(parent_preds);
      selection = select_top_k(scores, b);
      result.scores = scores.scores;
      break;
    }
    case AcquisitionMethod::BatchBald:
      selection = select_batchbald(parent_preds, b, mc, select_rng);
      break;
    case AcquisitionMethod::Eig: {
      ScoreVector scores = score_eig(parent_preds, *eval_preds);
      selection = select_top_k(scores, b);
      result.scores = scores.scores;
      break;
    }
    case AcquisitionMethod::EvalBald: {
      ScoreVector scores = score_evalbald(parent_preds, *eval_preds);
      selection = select_top_k(scores, b);
      result.scores = scores.scores;
      break;
    }
    case AcquisitionMethod::BatchEvalBald:
      selection = select_batch_evalbald(parent_preds, *eval_preds, b, mc, select_rng);
      break;
    case AcquisitionMethod::PowerBald: {
      ScoreVector scores = score_bald(parent_preds);
      selection = sample_power(scores, b, method.alpha, select_rng);
      result.scores = scores.scores;
      break;
    }
    case AcquisitionMethod::PowerEig: {
      ScoreVector scores = score_eig(parent_preds, *eval_preds);
      selection = sample_power(scores, b, method.alpha, select_rng);
      result.scores = scores.scores;
      break;
    }
    case AcquisitionMethod::PowerEvalBald: {
      ScoreVector scores = score_evalbald(parent_preds, *eval_preds);
      selection = sample_power(scores, b, method.alpha, select_rng);
      result.scores = scores.scores;
      break;
    }
    case AcquisitionMethod::ThompsonBald:
      selection = sample_thompson(parent_preds, b, select_rng);
      break;
    case AcquisitionMethod::UniformTop: {
      ScoreVector scores = score_bald(parent_preds);
      const int c = method.uniform_top_c > 0 ? method.uniform_top_c
                                             : state.data->class_count;
      selection = sample_uniform_top(scores, b, c, select_rng);
      result.scores = scores.scores;
      break;
    }
  }
  selection.seed = derive_seed(round_seed, kSeedSelect);
  result.selection = std::move(selection);
  return result;
}

RoundOutcome run_round(const PoolState& state, const MethodConfig& method,
                       const ModelConfig& model, const LabeledDataset& test,
                       int round, int effective_batch, std::uint64_t experiment_seed,
                       bool measure_wall_time) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t round_seed =
      derive_seed(experiment_seed, kSeedRound, static_cast<std::uint64_t>(round));

  MlpParams parent;
  const PoolScoringResult scored =
      score_pool(state, method, model, effective_batch, round_seed, &parent);

  RoundOutcome outcome;
  outcome.state.data = state.data;
  outcome.state.train_indices = state.train_indices;

  // The oracle step: only here do acquired pool labels become visible.
  std::vector<int> acquired;
  for (int pos : scored.selection.indices) {
    acquired.push_back(state.pool_indices[pos]);
  }
  std::vector<char> taken(state.data->size(), 0);
  for (int idx : acquired) taken[idx] = 1;
  outcome.state.train_indices.insert(outcome.state.train_indices.end(),
                                     acquired.begin(), acquired.end());
  std::sort(outcome.state.train_indices.begin(), outcome.state.train_indices.end());
  for (int idx : state.pool_indices) {
    if (!taken[idx]) outcome.state.pool_indices.push_back(idx);
  }
  // pseudo labels are not carried over; they are stale once the pool shrinks

  outcome.record.round = round;
  outcome.record.train_size = static_cast<int>(state.train_indices.size());
  outcome.record.test_accuracy = evaluate_accuracy(parent, test);
  outcome.record.selected_indices = std::move(acquired);
  outcome.record.method_tag = method_name(method.method);
  outcome.record.seed = experiment_seed;
  if (measure_wall_time) {
    outcome.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return outcome;
}

BuiltDataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  LabeledDataset train;
  LabeledDataset test;
  if (cfg.source == "idx") {
    train = load_idx(cfg.train_images, cfg.train_labels);
    test = load_idx(cfg.test_images, cfg.test_labels);
    const int classes = std::max(train.class_count, test.class_count);
    train.class_count = classes;
    test.class_count = classes;
    if (cfg.subsample > 0 && cfg.subsample < train.size()) {
      Rng rng = make_rng(derive_seed(seed, kSeedSubsample));
      std::vector<int> idx(train.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (int i = 0; i < cfg.subsample; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, static_cast<int>(idx.size()) - i)]);
      }
      idx.resize(cfg.subsample);
      std::sort(idx.begin(), idx.end());
      train = subset(train, idx);
    }
  } else if (cfg.source == "blobs") {
    // One generation for train and test so both share centers and scaling.
    Rng rng = make_rng(derive_seed(seed, kSeedBlobs));
    const int per_class_total = cfg.per_class + cfg.test_per_class;
    const LabeledDataset all =
        make_blobs(cfg.classes, per_class_total, cfg.dim, cfg.separation, rng);
    std::vector<int> train_idx, test_idx;
    for (int cls = 0; cls < cfg.classes; ++cls) {
      for (int s = 0; s < per_class_total; ++s) {
        const int row = cls * per_class_total + s;
        (s < cfg.per_class ? train_idx : test_idx).push_back(row);
      }
    }
    train = subset(all, train_idx);
    test = subset(all, test_idx);
  } else {
    throw std::invalid_argument("build_dataset: unknown source '" + cfg.source + "'");
  }

  if (cfg.copies > 1 || cfg.sigma > 0.0) {
    Rng rng = make_rng(derive_seed(seed, kSeedRepeat));
    train = make_repeated(train, cfg.copies, cfg.sigma, rng);
  }
  if (cfg.label_noise > 0.0) {
    Rng rng = make_rng(derive_seed(seed, kSeedLabelNoise));
    train = apply_label_noise(train, cfg.label_noise, rng);
  }
  if (!cfg.keep_probs.empty()) {
    Rng rng = make_rng(derive_seed(seed, kSeedImbalance));
    train = apply_class_imbalance(train, cfg.keep_probs, rng);
  }

  BuiltDataset built;
  built.train = std::make_shared<const LabeledDataset>(std::move(train));
  built.test = std::make_shared<const LabeledDataset>(std::move(test));
  return built;
}

std::vector<RoundRecord> run_experiment(const ExperimentConfig& config,
                                        const RecordSink& sink,
                                        const FinalModelSink& model_sink) {
  if (config.seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");
  std::vector<RoundRecord> records;

  for (const std::uint64_t seed : config.seeds) {
    const BuiltDataset built = build_dataset(config.dataset, seed);
    Rng init_rng = make_rng(derive_seed(seed, kSeedInitialPool));
    PoolState state =
        make_initial_pool(built.train, config.initial_per_class, init_rng);
    const int initial_size = static_cast<int>(state.train_indices.size());
    if (config.budget < initial_size) {
      throw std::invalid_argument("run_experiment: budget smaller than the initial set");
    }

    int round = 0;
    while (static_cast<int>(state.train_indices.size()) < config.budget &&
           !state.pool_indices.empty()) {
      const int remaining = config.budget - static_cast<int>(state.train_indices.size());
      const int b = std::min<int>(
          {config.method.batch_size, remaining,
           static_cast<int>(state.pool_indices.size())});
      RoundOutcome outcome = run_round(state, config.method, config.model,
                                       *built.test, round, b, seed,
                                       config.measure_wall_time);
      state = std::move(outcome.state);
      records.push_back(outcome.record);
      if (sink) sink(records.back());
      ++round;
    }

    // Final record at the budget size: train and evaluate, no acquisition.
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t round_seed =
        derive_seed(seed, kSeedRound, static_cast<std::uint64_t>(round));
    const MlpParams parent = train_parent(state, config.model, round_seed);
    RoundRecord final_record;
    final_record.round = round;
    final_record.train_size = static_cast<int>(state.train_indices.size());
    final_record.test_accuracy = evaluate_accuracy(parent, *built.test);
    final_record.method_tag = method_name(config.method.method);
    final_record.seed = seed;
    if (config.measure_wall_time) {
      final_record.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    records.push_back(final_record);
    if (sink) sink(records.back());
    if (model_sink) model_sink(seed, parent);
  }
  return records;
}

}  // namespace balkit
