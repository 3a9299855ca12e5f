#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "balkit/active_loop.hpp"
#include "balkit/config.hpp"

namespace balkit {

// Carries every violation found during validation, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Parses and fully validates a JSON experiment config. Unknown keys are hard
// errors. Throws ConfigError listing all violations.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical JSON rendering; parse(render(config)) round-trips.
std::string render_config(const ExperimentConfig& config);

// Append-only line-delimited records, one JSON object per line, flushed per
// record.
class RecordWriter {
 public:
  explicit RecordWriter(const std::string& path);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void write(const RoundRecord& record);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

void write_records(const std::vector<RoundRecord>& records, const std::string& path);

struct RecordReadResult {
  std::vector<RoundRecord> records;
  bool truncated_tail = false;  // trailing partial line was detected
};

RecordReadResult read_records(const std::string& path);

std::string record_to_json_line(const RoundRecord& record);

struct SummaryRow {
  std::string method_tag;
  int train_size = 0;
  double mean_accuracy = 0.0;
  double ci95_half_width = 0.0;
  int n_seeds = 0;
};

// Mean and Student-t 95% CI half-width per (method, train_size) cell.
// Cells with a single seed get half-width 0 and a warning.
std::vector<SummaryRow> summarize(const std::vector<RoundRecord>& records,
                                  std::vector<std::string>* warnings = nullptr);

// CSV with fixed 6-significant-digit formatting; bit-stable per input.
std::string summary_to_csv(const std::vector<SummaryRow>& rows);

}  // namespace balkit
