#pragma once

#include "fsadapt/adapters.hpp"
#include "fsadapt/embedding_store.hpp"
#include "fsadapt/episodes.hpp"
#include "fsadapt/evaluation.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fsadapt {

// ---------------------------------------------------------------- synthesis

/// Sphere benchmark: unit class means, samples = mean + N(0, sigma_cluster^2 I)
/// renormalized, text prototypes = mean + N(0, sigma_text^2 I) renormalized.
struct SynthSpec {
  std::string name = "synth";
  int num_classes = 10;
  int dim = 64;
  int per_class = 50;
  double sigma_cluster = 0.35;
  double sigma_text = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  LabeledDataset dataset;
  TextPrototypeSet text;
  DatasetManifest manifest;
};

SynthData synthesize(const SynthSpec& spec);

/// Payload locations for a dataset named by its FSEB path.
struct DatasetFiles {
  std::filesystem::path embeddings;  // <stem>.fseb
  std::filesystem::path text;        // <stem>.text.fseb
  std::filesystem::path manifest;    // <stem>.manifest.json
  std::filesystem::path test_split;  // <stem>.test.json (optional)

  static DatasetFiles for_path(const std::filesystem::path& fseb);
  static DatasetFiles in_dir(const std::filesystem::path& dir, const std::string& name);
};

void write_dataset_files(const SynthData& data, const DatasetFiles& files);

// ---------------------------------------------------------------- benchmark

struct BenchConfig {
  std::vector<std::filesystem::path> datasets;
  std::vector<Method> methods = {Method::ZeroShot, Method::LinearProbe, Method::LpText, Method::ClipAdapter,
                                 Method::TipAdapterF};
  std::vector<int> shots = {1, 2, 4, 8, 16};
  std::uint64_t base_seed = 1;
  int n_seeds = 5;
  std::optional<double> temperature;  // overrides the manifest hint
  double holdout = 0.20;
  int jobs = 1;
  bool timing = false;  // record wall_ms; off keeps results.csv byte-stable
  std::filesystem::path out_dir = "results";

  LpConfig lp;
  LpTextConfig lp_text;
  ClipAdapterConfig clip;
  TipAdapterConfig tip;
  std::map<std::string, std::string> modality;  // dataset -> modality, for the report

  void validate() const;
};

/// `key = value` lines, `#` comments. Lists are comma separated.
BenchConfig parse_config(const std::string& text);
BenchConfig load_config(const std::filesystem::path& path);

struct BenchDataset {
  std::string name;
  LabeledDataset data;  // rows L2-normalized
  Matrix text;          // K x D, rows L2-normalized
  double temperature = kDefaultTemperature;
  TestPolicy test_policy;
  std::string split_source;  // "predefined:<file>" or "holdout:<fraction>"
};

BenchDataset load_bench_dataset(const std::filesystem::path& fseb, const BenchConfig& cfg);

/// One (dataset, method, shots, seed) run: sample the episode, select
/// hyperparameters on validation, fit on support, score ACA on test.
/// Failures are captured in RunResult::error.
RunResult run_single(const BenchDataset& ds, Method method, int shots, std::uint64_t seed, const BenchConfig& cfg);

/// Every run tuple, sorted by (dataset, method, shots, seed).
std::vector<RunResult> run_benchmark(const std::vector<BenchDataset>& datasets, const BenchConfig& cfg);

struct SweepRow {
  std::string dataset;
  std::string method;
  int shots = 0;
  std::uint64_t seed = 0;
  std::size_t config_index = 0;
  std::string hyperparams_json;
  double val_aca = 0.0;
};

/// Validation score of every grid config (no test evaluation).
std::vector<SweepRow> run_sweep(const std::vector<BenchDataset>& datasets, const BenchConfig& cfg);

// ------------------------------------------------------------------ results

inline constexpr const char* kResultsHeader = "dataset,method,shots,seed,aca,wall_ms,params,hyperparams_json,error";

std::string results_to_csv(const std::vector<RunResult>& results);
std::vector<RunResult> results_from_csv(const std::string& text, const std::string& origin = "results.csv");
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// Concatenates result sets; a repeated (dataset, method, shots, seed) key
/// is a SchemaError.
std::vector<RunResult> merge_results(const std::vector<std::vector<RunResult>>& sets);

std::vector<AggregateRow> aggregate_all(const std::vector<RunResult>& results);

/// Markdown tables: one per dataset (methods x shots, `mean ± std` in
/// percent), per-modality averages, and an efficiency table.
/// `modality` maps dataset -> modality name; unmapped datasets go to "all".
std::string render_report(const std::vector<RunResult>& results,
                          const std::map<std::string, std::string>& modality = {});

std::string aggregate_to_csv(const std::vector<AggregateRow>& rows);

/// "12.34 ± 5.67" with percent scaling; annotated when fewer seeds than
/// `expected_seeds` contributed.
std::string format_cell(const AggregateRow& row, int expected_seeds);

}  // namespace fsadapt
