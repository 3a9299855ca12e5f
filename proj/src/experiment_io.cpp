#include "balkit/experiment_io.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

namespace balkit {

using json = nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

// Collects every violation so a config error reports all problems at once.
class Validator {
 public:
  std::vector<std::string> violations;

  void fail(const std::string& what) { violations.push_back(what); }

  void check_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
      bool known = false;
      for (const char* key : allowed) {
        if (item.key() == key) {
          known = true;
          break;
        }
      }
      if (!known) fail(where + ": unknown key '" + item.key() + "'");
    }
  }

  template <typename T>
  void read(const json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail(where + "." + key + ": wrong type");
    }
  }
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

RoundRecord record_from_json(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.train_size = j.at("train_size").get<int>();
  r.test_accuracy = j.at("test_accuracy").get<double>();
  r.selected_indices = j.at("selected_indices").get<std::vector<int>>();
  r.method_tag = j.at("method_tag").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error("invalid config: " + join(violations, "; ")),
      violations_(std::move(violations)) {}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("JSON parse error: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"config root must be an object"});

  Validator v;
  ExperimentConfig cfg;
  v.check_keys(root, "config",
               {"dataset", "method", "model", "budget", "initial_per_class", "seeds",
                "output", "measure_wall_time"});

  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    v.check_keys(d, "dataset",
                 {"source", "train_images", "train_labels", "test_images",
                  "test_labels", "subsample", "classes", "per_class", "dim",
                  "separation", "test_per_class", "copies", "sigma", "label_noise",
                  "keep_probs"});
    v.read(d, "dataset", "source", cfg.dataset.source);
    v.read(d, "dataset", "train_images", cfg.dataset.train_images);
    v.read(d, "dataset", "train_labels", cfg.dataset.train_labels);
    v.read(d, "dataset", "test_images", cfg.dataset.test_images);
    v.read(d, "dataset", "test_labels", cfg.dataset.test_labels);
    v.read(d, "dataset", "subsample", cfg.dataset.subsample);
    v.read(d, "dataset", "classes", cfg.dataset.classes);
    v.read(d, "dataset", "per_class", cfg.dataset.per_class);
    v.read(d, "dataset", "dim", cfg.dataset.dim);
    v.read(d, "dataset", "separation", cfg.dataset.separation);
    v.read(d, "dataset", "test_per_class", cfg.dataset.test_per_class);
    v.read(d, "dataset", "copies", cfg.dataset.copies);
    v.read(d, "dataset", "sigma", cfg.dataset.sigma);
    v.read(d, "dataset", "label_noise", cfg.dataset.label_noise);
    v.read(d, "dataset", "keep_probs", cfg.dataset.keep_probs);
  }

  std::string method_name_str = method_name(cfg.method.method);
  if (root.contains("method")) {
    const json& m = root["method"];
    v.check_keys(m, "method",
                 {"name", "batch_size", "alpha", "mc_samples", "exact_config_limit",
                  "k", "uniform_top_c"});
    v.read(m, "method", "name", method_name_str);
    v.read(m, "method", "batch_size", cfg.method.batch_size);
    v.read(m, "method", "alpha", cfg.method.alpha);
    v.read(m, "method", "mc_samples", cfg.method.mc_samples);
    v.read(m, "method", "exact_config_limit", cfg.method.exact_config_limit);
    v.read(m, "method", "k", cfg.method.k);
    v.read(m, "method", "uniform_top_c", cfg.method.uniform_top_c);
  }
  if (auto parsed = method_from_name(method_name_str)) {
    cfg.method.method = *parsed;
  } else {
    v.fail("method.name: unknown method '" + method_name_str + "'");
  }

  if (root.contains("model")) {
    const json& m = root["model"];
    v.check_keys(m, "model",
                 {"hidden", "dropout", "epochs", "minibatch", "learning_rate",
                  "oversample_target", "weight_decay", "momentum",
                  "sample_with_replacement"});
    v.read(m, "model", "hidden", cfg.model.hidden);
    v.read(m, "model", "dropout", cfg.model.dropout);
    v.read(m, "model", "epochs", cfg.model.schedule.epochs);
    v.read(m, "model", "minibatch", cfg.model.schedule.minibatch);
    v.read(m, "model", "learning_rate", cfg.model.schedule.learning_rate);
    v.read(m, "model", "oversample_target", cfg.model.schedule.oversample_target);
    v.read(m, "model", "weight_decay", cfg.model.schedule.weight_decay);
    v.read(m, "model", "momentum", cfg.model.schedule.momentum);
    v.read(m, "model", "sample_with_replacement",
           cfg.model.schedule.sample_with_replacement);
  }

  v.read(root, "config", "budget", cfg.budget);
  v.read(root, "config", "initial_per_class", cfg.initial_per_class);
  v.read(root, "config", "seeds", cfg.seeds);
  v.read(root, "config", "output", cfg.output);
  v.read(root, "config", "measure_wall_time", cfg.measure_wall_time);

  // cross-field constraints, mirroring what the downstream modules require
  if (cfg.dataset.source != "blobs" && cfg.dataset.source != "idx") {
    v.fail("dataset.source: must be 'blobs' or 'idx'");
  }
  if (cfg.dataset.source == "idx") {
    if (cfg.dataset.train_images.empty() || cfg.dataset.train_labels.empty() ||
        cfg.dataset.test_images.empty() || cfg.dataset.test_labels.empty()) {
      v.fail("dataset: idx source requires train/test image and label paths");
    }
  }
  if (cfg.dataset.subsample < 0) v.fail("dataset.subsample: must be >= 0");
  if (cfg.dataset.classes < 2) v.fail("dataset.classes: must be >= 2");
  if (cfg.dataset.per_class < 1) v.fail("dataset.per_class: must be >= 1");
  if (cfg.dataset.dim < 1) v.fail("dataset.dim: must be >= 1");
  if (cfg.dataset.separation < 0.0) v.fail("dataset.separation: must be >= 0");
  if (cfg.dataset.test_per_class < 1) v.fail("dataset.test_per_class: must be >= 1");
  if (cfg.dataset.copies < 1) v.fail("dataset.copies: must be >= 1");
  if (cfg.dataset.sigma < 0.0) v.fail("dataset.sigma: must be >= 0");
  if (cfg.dataset.label_noise < 0.0 || cfg.dataset.label_noise > 1.0) {
    v.fail("dataset.label_noise: must be in [0, 1]");
  }
  for (double p : cfg.dataset.keep_probs) {
    if (p < 0.0 || p > 1.0) {
      v.fail("dataset.keep_probs: entries must be in [0, 1]");
      break;
    }
  }

  if (cfg.method.batch_size < 1) v.fail("method.batch_size: must be >= 1");
  if (cfg.method.alpha < 0.0) v.fail("method.alpha: must be >= 0");
  if (cfg.method.mc_samples < 1) v.fail("method.mc_samples: must be >= 1");
  if (cfg.method.exact_config_limit < 1) {
    v.fail("method.exact_config_limit: must be >= 1");
  }
  if (cfg.method.k < 0) v.fail("method.k: must be >= 0 (0 = per-method default)");
  if (cfg.method.uniform_top_c < 0) v.fail("method.uniform_top_c: must be >= 0");
  if (method_needs_posterior(cfg.method.method) && cfg.method.k == 1) {
    v.fail("method.k: " + method_name_str +
           " requires K >= 2 MC samples (epistemic uncertainty is undefined "
           "for point estimates)");
  }
  if (cfg.method.method == AcquisitionMethod::ThompsonBald && cfg.method.k != 0 &&
      cfg.method.k < 2 * cfg.method.batch_size) {
    v.fail("method.k: thompson_bald requires K >= 2 * batch_size");
  }

  if (cfg.model.hidden.empty()) v.fail("model.hidden: need at least one hidden layer");
  for (int h : cfg.model.hidden) {
    if (h < 1) {
      v.fail("model.hidden: layer widths must be >= 1");
      break;
    }
  }
  if (cfg.model.dropout < 0.0 || cfg.model.dropout >= 1.0) {
    v.fail("model.dropout: must be in [0, 1)");
  }
  if (cfg.model.schedule.epochs < 1) v.fail("model.epochs: must be >= 1");
  if (cfg.model.schedule.minibatch < 1) v.fail("model.minibatch: must be >= 1");
  if (cfg.model.schedule.learning_rate <= 0.0) {
    v.fail("model.learning_rate: must be > 0");
  }
  if (cfg.model.schedule.oversample_target < 1) {
    v.fail("model.oversample_target: must be >= 1");
  }
  if (cfg.model.schedule.weight_decay < 0.0) v.fail("model.weight_decay: must be >= 0");
  if (cfg.model.schedule.momentum < 0.0 || cfg.model.schedule.momentum >= 1.0) {
    v.fail("model.momentum: must be in [0, 1)");
  }

  if (cfg.budget < 1) v.fail("budget: must be >= 1");
  if (cfg.initial_per_class < 1) v.fail("initial_per_class: must be >= 1");
  if (cfg.seeds.empty()) v.fail("seeds: need at least one seed");
  if (cfg.output.empty()) v.fail("output: must not be empty");

  if (!v.violations.empty()) throw ConfigError(std::move(v.violations));
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open config file: " + path});
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_config(buffer.str());
}

std::string render_config(const ExperimentConfig& cfg) {
  json root;
  json d;
  d["source"] = cfg.dataset.source;
  if (cfg.dataset.source == "idx") {
    d["train_images"] = cfg.dataset.train_images;
    d["train_labels"] = cfg.dataset.train_labels;
    d["test_images"] = cfg.dataset.test_images;
    d["test_labels"] = cfg.dataset.test_labels;
    d["subsample"] = cfg.dataset.subsample;
  } else {
    d["classes"] = cfg.dataset.classes;
    d["per_class"] = cfg.dataset.per_class;
    d["dim"] = cfg.dataset.dim;
    d["separation"] = cfg.dataset.separation;
    d["test_per_class"] = cfg.dataset.test_per_class;
  }
  d["copies"] = cfg.dataset.copies;
  d["sigma"] = cfg.dataset.sigma;
  d["label_noise"] = cfg.dataset.label_noise;
  if (!cfg.dataset.keep_probs.empty()) d["keep_probs"] = cfg.dataset.keep_probs;
  root["dataset"] = std::move(d);

  json m;
  m["name"] = method_name(cfg.method.method);
  m["batch_size"] = cfg.method.batch_size;
  m["alpha"] = cfg.method.alpha;
  m["mc_samples"] = cfg.method.mc_samples;
  m["exact_config_limit"] = cfg.method.exact_config_limit;
  m["k"] = cfg.method.k;
  m["uniform_top_c"] = cfg.method.uniform_top_c;
  root["method"] = std::move(m);

  json mo;
  mo["hidden"] = cfg.model.hidden;
  mo["dropout"] = cfg.model.dropout;
  mo["epochs"] = cfg.model.schedule.epochs;
  mo["minibatch"] = cfg.model.schedule.minibatch;
  mo["learning_rate"] = cfg.model.schedule.learning_rate;
  mo["oversample_target"] = cfg.model.schedule.oversample_target;
  mo["weight_decay"] = cfg.model.schedule.weight_decay;
  mo["momentum"] = cfg.model.schedule.momentum;
  mo["sample_with_replacement"] = cfg.model.schedule.sample_with_replacement;
  root["model"] = std::move(mo);

  root["budget"] = cfg.budget;
  root["initial_per_class"] = cfg.initial_per_class;
  root["seeds"] = cfg.seeds;
  root["output"] = cfg.output;
  root["measure_wall_time"] = cfg.measure_wall_time;
  return root.dump(2) + "\n";
}

struct RecordWriter::Impl {
  std::ofstream os;
  std::string path;
};

RecordWriter::RecordWriter(const std::string& path) : impl_(new Impl) {
  impl_->path = path;
  impl_->os.open(path, std::ios::app | std::ios::binary);
  if (!impl_->os) throw std::runtime_error("RecordWriter: cannot open " + path);
}

RecordWriter::~RecordWriter() = default;

void RecordWriter::write(const RoundRecord& record) {
  impl_->os << record_to_json_line(record) << '\n';
  impl_->os.flush();
  if (!impl_->os) {
    throw std::runtime_error("RecordWriter: write failed for " + impl_->path);
  }
}

void write_records(const std::vector<RoundRecord>& records, const std::string& path) {
  RecordWriter writer(path);
  for (const auto& r : records) writer.write(r);
}

std::string record_to_json_line(const RoundRecord& record) {
  json j;
  j["round"] = record.round;
  j["train_size"] = record.train_size;
  j["test_accuracy"] = record.test_accuracy;
  j["selected_indices"] = record.selected_indices;
  j["method_tag"] = record.method_tag;
  j["seed"] = record.seed;
  j["wall_seconds"] = record.wall_seconds;
  return j.dump();
}

RecordReadResult read_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_records: cannot open " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  const std::string content = buffer.str();

  RecordReadResult result;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      // incomplete trailing line (no terminator): report, don't parse
      result.truncated_tail = true;
      break;
    }
    const std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      result.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error("read_records: corrupt record in " + path + ": " +
                               e.what());
    }
  }
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<RoundRecord>& records,
                                  std::vector<std::string>* warnings) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  std::map<std::pair<std::string, int>, std::vector<double>> cells;
  for (const auto& r : records) {
    cells[{r.method_tag, r.train_size}].push_back(r.test_accuracy);
  }

  std::vector<SummaryRow> rows;
  for (const auto& [key, values] : cells) {
    SummaryRow row;
    row.method_tag = key.first;
    row.train_size = key.second;
    row.n_seeds = static_cast<int>(values.size());
    double mean = 0.0;
    for (double a : values) mean += a;
    mean /= values.size();
    row.mean_accuracy = mean;
    if (values.size() >= 2) {
      double ss = 0.0;
      for (double a : values) ss += (a - mean) * (a - mean);
      const double sd = std::sqrt(ss / (values.size() - 1));
      const boost::math::students_t dist(static_cast<double>(values.size() - 1));
      const double t = boost::math::quantile(dist, 0.975);
      row.ci95_half_width = t * sd / std::sqrt(static_cast<double>(values.size()));
    } else {
      row.ci95_half_width = 0.0;
      if (warnings != nullptr) {
        warnings->push_back("cell (" + key.first + ", " + std::to_string(key.second) +
                            ") has a single seed; CI half-width set to 0");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "method,train_size,mean,ci95,n\n";
  for (const auto& row : rows) {
    out += row.method_tag + "," + std::to_string(row.train_size) + "," +
           fmt6(row.mean_accuracy) + "," + fmt6(row.ci95_half_width) + "," +
           std::to_string(row.n_seeds) + "\n";
  }
  return out;
}

}  // namespace balkit
