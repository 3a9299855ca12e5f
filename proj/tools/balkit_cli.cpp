#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "balkit/experiment_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

int cmd_run(const std::string& config_path, long long seed_offset,
            const std::string& out_override, const std::string& checkpoint_path) {
  balkit::ExperimentConfig config = balkit::parse_config_file(config_path);
  if (seed_offset != 0) {
    for (auto& seed : config.seeds) seed += static_cast<std::uint64_t>(seed_offset);
  }
  const std::string out_path = out_override.empty() ? config.output : out_override;

  balkit::RecordWriter writer(out_path);
  const balkit::FinalModelSink model_sink =
      checkpoint_path.empty()
          ? balkit::FinalModelSink{}
          : [&](std::uint64_t seed, const balkit::MlpParams& model) {
              const std::string path =
                  config.seeds.size() == 1
                      ? checkpoint_path
                      : checkpoint_path + ".seed" + std::to_string(seed);
              balkit::save_checkpoint(model, path);
              std::fprintf(stderr, "checkpoint for seed %llu written to %s\n",
                           static_cast<unsigned long long>(seed), path.c_str());
            };
  balkit::run_experiment(
      config,
      [&](const balkit::RoundRecord& record) {
        writer.write(record);
        std::fprintf(stderr, "[%s seed=%llu round=%d] train=%d acc=%.4f (%.1fs)\n",
                     record.method_tag.c_str(),
                     static_cast<unsigned long long>(record.seed), record.round,
                     record.train_size, record.test_accuracy, record.wall_seconds);
      },
      model_sink);
  std::fprintf(stderr, "records written to %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_score(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& method_tag, const std::string& eval_checkpoint_path,
              const std::string& out_path) {
  const balkit::ExperimentConfig config = balkit::parse_config_file(config_path);
  const auto method = balkit::method_from_name(method_tag);
  if (!method) {
    throw balkit::ConfigError({"score: unknown method '" + method_tag + "'"});
  }

  // Map each method to its per-candidate scorer; joint/sampler-only methods
  // have no standalone score vector.
  enum class Scorer { Bald, Eig, EvalBald };
  Scorer scorer;
  switch (*method) {
    case balkit::AcquisitionMethod::Bald:
    case balkit::AcquisitionMethod::PowerBald:
    case balkit::AcquisitionMethod::UniformTop:
      scorer = Scorer::Bald;
      break;
    case balkit::AcquisitionMethod::Eig:
    case balkit::AcquisitionMethod::PowerEig:
      scorer = Scorer::Eig;
      break;
    case balkit::AcquisitionMethod::EvalBald:
    case balkit::AcquisitionMethod::PowerEvalBald:
      scorer = Scorer::EvalBald;
      break;
    default:
      throw balkit::ConfigError(
          {"score: method '" + method_tag + "' has no per-candidate score vector"});
  }
  if (scorer != Scorer::Bald && eval_checkpoint_path.empty()) {
    throw balkit::ConfigError(
        {"score: method '" + method_tag + "' needs --eval-checkpoint"});
  }

  const std::uint64_t seed = config.seeds.front();
  const balkit::BuiltDataset built = balkit::build_dataset(config.dataset, seed);
  const balkit::MlpParams model = balkit::load_checkpoint(checkpoint_path);
  balkit::MethodConfig mc = config.method;
  mc.method = *method;
  const int k = mc.effective_k();

  const balkit::PosteriorPredictions parent =
      balkit::predict_mc(model, built.train->inputs, k, balkit::derive_seed(seed, 1));
  balkit::ScoreVector scores;
  if (scorer == Scorer::Bald) {
    scores = balkit::score_bald(parent);
  } else {
    const balkit::MlpParams eval_model = balkit::load_checkpoint(eval_checkpoint_path);
    const balkit::PosteriorPredictions eval = balkit::predict_mc(
        eval_model, built.train->inputs, k, balkit::derive_seed(seed, 2));
    scores = scorer == Scorer::Eig ? balkit::score_eig(parent, eval)
                                   : balkit::score_evalbald(parent, eval);
  }

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("score: cannot open " + out_path);
    os = &file;
  }
  *os << "index,score\n";
  char buf[64];
  for (int i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", scores.pool_indices[i],
                  scores.scores[i]);
    *os << buf;
  }
  return kExitOk;
}

int cmd_summarize(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<balkit::RoundRecord> records;
  for (const auto& path : inputs) {
    const balkit::RecordReadResult result = balkit::read_records(path);
    if (result.truncated_tail) {
      std::fprintf(stderr, "warning: %s has a truncated trailing line (skipped)\n",
                   path.c_str());
    }
    records.insert(records.end(), result.records.begin(), result.records.end());
  }
  std::vector<std::string> warnings;
  const std::vector<balkit::SummaryRow> rows = balkit::summarize(records, &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  const std::string csv = balkit::summary_to_csv(rows);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("summarize: cannot open " + out_path);
    os << csv;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"balkit: information-theoretic active learning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint_path, eval_checkpoint_path, method_tag;
  std::string save_checkpoint_path;
  long long seed_offset = 0;
  std::vector<std::string> inputs;

  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed-offset", seed_offset, "added to every configured seed");
  run->add_option("--out", out_path, "records output path (overrides config)");
  run->add_option("--save-checkpoint", save_checkpoint_path,
                  "write each seed's final trained model here");

  CLI::App* score = app.add_subcommand("score", "one-shot pool scoring to CSV");
  score->add_option("--config", config_path, "experiment config (JSON)")->required();
  score->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  score->add_option("--method", method_tag, "acquisition method tag")->required();
  score->add_option("--eval-checkpoint", eval_checkpoint_path,
                    "evaluation-model checkpoint (eig/evalbald)");
  score->add_option("--out", out_path, "CSV output path (default stdout)");

  CLI::App* summ = app.add_subcommand("summarize", "aggregate record files to CSV");
  summ->add_option("--in", inputs, "record files (JSONL)")->required()->expected(-1);
  summ->add_option("--out", out_path, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) {
      return cmd_run(config_path, seed_offset, out_path, save_checkpoint_path);
    }
    if (score->parsed()) {
      return cmd_score(config_path, checkpoint_path, method_tag, eval_checkpoint_path,
                       out_path);
    }
    return cmd_summarize(inputs, out_path);
  } catch (const balkit::ConfigError& e) {
    for (const auto& violation : e.violations()) {
      std::fprintf(stderr, "config error: %s\n", violation.c_str());
    }
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntimeError;
  }
}
