#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "balkit/active_loop.hpp"
#include "balkit/experiment_io.hpp"
#include "oracles.hpp"

using balkit::AcquisitionMethod;
using balkit::ExperimentConfig;
using balkit::LabeledDataset;
using balkit::MethodConfig;
using balkit::ModelConfig;
using balkit::PoolState;

namespace {

// Small duplicated-blobs setting shared by the redundancy tests.
std::shared_ptr<const LabeledDataset> duplicated_blobs(std::uint64_t seed) {
  balkit::Rng rng(seed);
  const LabeledDataset base = balkit::make_blobs(4, 20, 6, 2.5, rng);
  balkit::Rng noise_rng(seed + 1);
  return std::make_shared<const LabeledDataset>(
      balkit::make_repeated(base, 2, 0.0, noise_rng));
}

ModelConfig small_model() {
  ModelConfig model;
  model.hidden = {24};
  model.dropout = 0.5;
  model.schedule.epochs = 25;
  model.schedule.minibatch = 16;
  model.schedule.oversample_target = 128;
  model.schedule.learning_rate = 0.2;
  return model;
}

// duplicate pairs (i, i + M) fully contained in the selection
int duplicate_pairs(const std::vector<int>& selected, int base_size) {
  std::set<int> chosen(selected.begin(), selected.end());
  int pairs = 0;
  for (int idx : chosen) {
    if (idx < base_size && chosen.count(idx + base_size)) ++pairs;
  }
  return pairs;
}

ExperimentConfig blobs_experiment(AcquisitionMethod method) {
  ExperimentConfig config;
  config.dataset.source = "blobs";
  config.dataset.classes = 4;
  config.dataset.per_class = 60;
  config.dataset.dim = 8;
  config.dataset.separation = 2.0;
  config.dataset.test_per_class = 200;
  config.dataset.copies = 1;
  config.dataset.sigma = 0.0;
  config.method.method = method;
  config.method.batch_size = 8;
  config.method.k = 10;
  config.model.hidden = {32};
  config.model.dropout = 0.25;
  config.model.schedule.epochs = 60;
  config.model.schedule.minibatch = 16;
  config.model.schedule.oversample_target = 256;
  config.model.schedule.learning_rate = 0.15;
  config.budget = 48;
  config.initial_per_class = 2;
  config.seeds = {1, 2};
  config.measure_wall_time = false;
  return config;
}

}  // namespace

TEST_CASE("make_initial_pool draws a balanced seeded start") {
  auto data = duplicated_blobs(100);
  balkit::Rng rng(5);
  const PoolState state = balkit::make_initial_pool(data, 2, rng);
  state.validate();
  CHECK(state.train_indices.size() == 8);  // 4 classes x 2
  CHECK(state.pool_indices.size() == data->size() - 8);
  std::map<int, int> per_class;
  for (int idx : state.train_indices) ++per_class[data->labels[idx]];
  for (const auto& [cls, count] : per_class) CHECK(count == 2);

  balkit::Rng rng2(5);
  CHECK(balkit::make_initial_pool(data, 2, rng2).train_indices == state.train_indices);
}

TEST_CASE("evaluate_accuracy") {
  balkit::MlpArchitecture arch;
  arch.input_dim = 4;
  arch.hidden = {8};
  arch.class_count = 10;
  arch.dropout = 0.5;
  const balkit::MlpParams model = balkit::init_model(arch, 3);

  SUBCASE("chance level on label-free data, deterministic across calls") {
    LabeledDataset test;
    test.class_count = 10;
    test.inputs.resize(1000, 4);
    balkit::Rng rng(9);
    for (Eigen::Index i = 0; i < 1000; ++i) {
      for (int j = 0; j < 4; ++j) test.inputs(i, j) = balkit::uniform_unit(rng);
    }
    test.labels.resize(1000);
    for (int i = 0; i < 1000; ++i) test.labels[i] = i % 10;  // independent of inputs
    const double acc = balkit::evaluate_accuracy(model, test);
    const double sigma = std::sqrt(0.1 * 0.9 / 1000.0);
    CHECK(std::abs(acc - 0.1) < 3.0 * sigma);
    CHECK(balkit::evaluate_accuracy(model, test) == acc);
  }

  SUBCASE("empty test set is rejected") {
    LabeledDataset empty;
    empty.class_count = 2;
    empty.inputs.resize(0, 4);
    CHECK_THROWS(balkit::evaluate_accuracy(model, empty));
  }

  SUBCASE("a memorized single-example test set scores 1.0") {
    balkit::MlpArchitecture small;
    small.input_dim = 2;
    small.hidden = {8};
    small.class_count = 2;
    small.dropout = 0.0;
    LabeledDataset one;
    one.class_count = 2;
    one.inputs.resize(1, 2);
    one.inputs << 0.2, 0.9;
    one.labels = {1};
    balkit::TrainSchedule schedule;
    schedule.epochs = 100;
    schedule.minibatch = 2;
    schedule.oversample_target = 2;
    schedule.learning_rate = 0.5;
    schedule.seed = 4;
    const balkit::MlpParams trained = balkit::train_supervised(
        balkit::init_model(small, 6), one.inputs, one.labels, schedule);
    CHECK(balkit::evaluate_accuracy(trained, one) == 1.0);
  }
}

TEST_CASE("run_round") {
  auto data = duplicated_blobs(200);
  balkit::Rng rng(1);
  const PoolState state = balkit::make_initial_pool(data, 2, rng);
  const ModelConfig model = small_model();
  LabeledDataset test = balkit::subset(*data, {0, 1, 2, 3, 4, 5, 6, 7});

  SUBCASE("acquiring the whole pool, then the next round fails") {
    MethodConfig method;
    method.method = AcquisitionMethod::Random;
    const int pool_size = static_cast<int>(state.pool_indices.size());
    const balkit::RoundOutcome outcome =
        balkit::run_round(state, method, model, test, 0, pool_size, 7);
    outcome.state.validate();
    CHECK(outcome.state.pool_indices.empty());
    CHECK(outcome.state.train_indices.size() == data->size());
    CHECK_THROWS_WITH_AS(
        balkit::run_round(outcome.state, method, model, test, 1, 1, 7),
        doctest::Contains("exhausted"), std::runtime_error);
  }

  SUBCASE("random selection is reproducible for a fixed seed") {
    MethodConfig method;
    method.method = AcquisitionMethod::Random;
    const auto a = balkit::run_round(state, method, model, test, 0, 5, 42);
    const auto b = balkit::run_round(state, method, model, test, 0, 5, 42);
    CHECK(a.record.selected_indices == b.record.selected_indices);
    CHECK(a.record.train_size == 8);
    a.state.validate();
  }

  SUBCASE("top-k BALD picks duplicate pairs more often than BatchBALD") {
    int bald_pairs = 0;
    int batchbald_pairs = 0;
    const int base_size = 80;
    for (int seed = 0; seed < 20; ++seed) {
      auto local = duplicated_blobs(300 + seed);
      balkit::Rng prng(seed);
      const PoolState pool = balkit::make_initial_pool(local, 2, prng);
      MethodConfig bald;
      bald.method = AcquisitionMethod::Bald;
      bald.k = 12;
      MethodConfig batch;
      batch.method = AcquisitionMethod::BatchBald;
      batch.k = 12;
      const auto sel_bald =
          balkit::run_round(pool, bald, model, test, 0, 4, seed).record.selected_indices;
      const auto sel_batch =
          balkit::run_round(pool, batch, model, test, 0, 4, seed).record.selected_indices;
      bald_pairs += duplicate_pairs(sel_bald, base_size);
      batchbald_pairs += duplicate_pairs(sel_batch, base_size);
    }
    CHECK(bald_pairs > batchbald_pairs);
  }
}

TEST_CASE("acquisition scores never read unacquired pool labels") {
  auto clean = duplicated_blobs(400);
  // poison every pool label (train labels stay intact)
  balkit::Rng rng(3);
  const PoolState state = balkit::make_initial_pool(clean, 2, rng);
  auto poisoned_data = std::make_shared<LabeledDataset>(*clean);
  {
    std::set<int> train(state.train_indices.begin(), state.train_indices.end());
    for (Eigen::Index i = 0; i < poisoned_data->size(); ++i) {
      if (!train.count(static_cast<int>(i))) {
        poisoned_data->labels[i] =
            (poisoned_data->labels[i] + 1) % poisoned_data->class_count;
      }
    }
  }
  PoolState poisoned_state = state;
  poisoned_state.data = poisoned_data;

  const ModelConfig model = small_model();
  for (AcquisitionMethod method :
       {AcquisitionMethod::Bald, AcquisitionMethod::BatchBald,
        AcquisitionMethod::PowerEvalBald, AcquisitionMethod::Random}) {
    MethodConfig cfg;
    cfg.method = method;
    cfg.k = 10;
    cfg.mc_samples = 128;
    const auto a = balkit::score_pool(state, cfg, model, 4, 99, nullptr);
    const auto b = balkit::score_pool(poisoned_state, cfg, model, 4, 99, nullptr);
    CHECK(a.selection.indices == b.selection.indices);
    CHECK(a.scores == b.scores);
    CHECK(a.pseudo_labels.has_value() == b.pseudo_labels.has_value());
    if (a.pseudo_labels) CHECK(*a.pseudo_labels == *b.pseudo_labels);
  }
}

TEST_CASE("run_experiment") {
  SUBCASE("budget equal to the initial size emits one baseline record") {
    ExperimentConfig config = blobs_experiment(AcquisitionMethod::Random);
    config.budget = 8;  // 4 classes x 2
    config.seeds = {1};
    const auto records = balkit::run_experiment(config);
    CHECK(records.size() == 1);
    CHECK(records[0].train_size == 8);
    CHECK(records[0].selected_indices.empty());
  }

  SUBCASE("budget below the initial size is rejected") {
    ExperimentConfig config = blobs_experiment(AcquisitionMethod::Random);
    config.budget = 7;
    CHECK_THROWS(balkit::run_experiment(config));
  }

  SUBCASE("two seeds differ only in seed-derived fields") {
    ExperimentConfig config = blobs_experiment(AcquisitionMethod::Bald);
    const auto records = balkit::run_experiment(config);
    std::vector<balkit::RoundRecord> seed1, seed2;
    for (const auto& r : records) {
      (r.seed == 1 ? seed1 : seed2).push_back(r);
    }
    REQUIRE(seed1.size() == seed2.size());
    for (std::size_t i = 0; i < seed1.size(); ++i) {
      CHECK(seed1[i].round == seed2[i].round);
      CHECK(seed1[i].train_size == seed2[i].train_size);
      CHECK(seed1[i].method_tag == seed2[i].method_tag);
      CHECK(seed1[i].seed != seed2[i].seed);
    }
  }

  SUBCASE("train sizes increase by B with a final budget record") {
    ExperimentConfig config = blobs_experiment(AcquisitionMethod::Random);
    config.seeds = {3};
    const auto records = balkit::run_experiment(config);
    REQUIRE(records.size() == 6);  // 8 -> 16 -> 24 -> 32 -> 40 -> 48
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(records[i].train_size == 8 + 8 * static_cast<int>(i));
    }
    CHECK(records.back().train_size == 48);
    CHECK(records.back().selected_indices.empty());
  }

  SUBCASE("random-acquisition accuracy is non-decreasing after smoothing") {
    ExperimentConfig config = blobs_experiment(AcquisitionMethod::Random);
    config.seeds = {1, 2, 3, 4, 5};
    const auto records = balkit::run_experiment(config);
    std::map<int, std::pair<double, int>> by_size;
    for (const auto& r : records) {
      by_size[r.train_size].first += r.test_accuracy;
      by_size[r.train_size].second += 1;
    }
    std::vector<double> curve;
    for (const auto& [size, acc] : by_size) curve.push_back(acc.first / acc.second);
    // window-3 moving average must not decrease
    std::vector<double> smooth;
    for (std::size_t i = 0; i + 3 <= curve.size(); ++i) {
      smooth.push_back((curve[i] + curve[i + 1] + curve[i + 2]) / 3.0);
    }
    for (std::size_t i = 1; i < smooth.size(); ++i) {
      CHECK(smooth[i] >= smooth[i - 1] - 1e-9);
    }
  }

  SUBCASE("end-to-end determinism of the full record stream") {
    ExperimentConfig config = blobs_experiment(AcquisitionMethod::PowerBald);
    config.seeds = {4};
    const auto a = balkit::run_experiment(config);
    const auto b = balkit::run_experiment(config);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(balkit::record_to_json_line(a[i]) == balkit::record_to_json_line(b[i]));
    }
  }
}
