#pragma once

#include "fsadapt/bench.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fsadapt {

struct IngestOptions {
  std::filesystem::path input;  // .csv or .fseb
  std::optional<std::filesystem::path> text_csv;  // one `label,f...` row per class
  std::optional<std::filesystem::path> test_indices;
  std::filesystem::path out_dir = ".";
  std::string name;  // defaults to the input stem
  int num_classes = 0;
  std::optional<double> temperature_hint;
};

struct IngestSummary {
  DatasetFiles files;
  Index num_samples = 0;
  Index dim = 0;
  int num_classes = 0;
};

/// Validates the input and writes `<name>.fseb` + manifest (and text /
/// test split when given) under `out_dir`.
IngestSummary cmd_ingest(const IngestOptions& opts);

DatasetFiles cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir);

struct RunOutcome {
  std::vector<RunResult> results;
  std::size_t failed = 0;
  bool all_failed() const { return !results.empty() && failed == results.size(); }
};

/// Runs every tuple and writes results.csv, aggregate.csv and report.md
/// into cfg.out_dir. Split provenance and failures go to `log`.
RunOutcome cmd_run(const BenchConfig& cfg, std::ostream& log);

/// Grid-only mode: writes sweep.csv with the validation ACA of every
/// config.
std::vector<SweepRow> cmd_sweep(const BenchConfig& cfg, std::ostream& log);

/// Merges result CSVs and writes report.md and aggregate.csv to `out_dir`.
std::string cmd_report(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
                       const std::map<std::string, std::string>& modality = {});

}  // namespace fsadapt
