#include "fsadapt/commands.hpp"

#include "fsadapt/error.hpp"

#include <fstream>
#include <sstream>

namespace fsadapt {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<BenchDataset> load_all(const BenchConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.datasets.empty()) throw Error(ErrorCode::ConfigError, "no datasets given");
  std::vector<BenchDataset> out;
  for (const auto& p : cfg.datasets) {
    out.push_back(load_bench_dataset(p, cfg));
    log << out.back().name << ": test split " << out.back().split_source << "\n";
  }
  return out;
}

}  // namespace

IngestSummary cmd_ingest(const IngestOptions& opts) {
  const std::string ext = opts.input.extension().string();
  LabeledDataset ds;
  if (ext == ".csv") {
    ds = read_csv_dataset(opts.input, opts.num_classes);
  } else if (ext == ".fseb") {
    ds = load_dataset(opts.input);
    if (opts.num_classes > 0 && opts.num_classes != ds.num_classes()) {
      throw Error(ErrorCode::DimMismatch, opts.input.string() + ": K=" + std::to_string(ds.num_classes()) +
                                              " but " + std::to_string(opts.num_classes) + " requested");
    }
  } else {
    throw Error(ErrorCode::SchemaError, opts.input.string() + ": expected a .csv or .fseb file");
  }
  ds.validate();

  const std::string name = opts.name.empty() ? opts.input.stem().string() : opts.name;
  fs::create_directories(opts.out_dir);
  IngestSummary summary{DatasetFiles::in_dir(opts.out_dir, name), ds.size(), ds.dim(), ds.num_classes()};

  DatasetManifest manifest;
  manifest.name = name;
  manifest.num_classes = ds.num_classes();
  manifest.num_samples = ds.size();
  manifest.dim = ds.dim();
  manifest.class_names = ds.class_names;
  manifest.normalized = rows_unit_norm(ds.embeddings.values());
  manifest.temperature_hint = opts.temperature_hint;

  if (opts.text_csv) {
    const LabeledDataset t = read_csv_dataset(*opts.text_csv, ds.num_classes());
    if (t.size() != ds.num_classes() || t.dim() != ds.dim()) {
      throw Error(ErrorCode::DimMismatch, opts.text_csv->string() + ": need one row per class with D=" +
                                              std::to_string(ds.dim()));
    }
    Matrix protos(t.size(), t.dim());
    for (Index i = 0; i < t.size(); ++i) protos.row(t.labels[static_cast<std::size_t>(i)]) = t.embeddings.values().row(i);
    save_prototypes(TextPrototypeSet{EmbeddingMatrix(protos), {}, opts.temperature_hint}, summary.files.text);
  }
  if (opts.test_indices) {
    const auto idx = load_test_indices(*opts.test_indices);
    for (Index i : idx) {
      if (i < 0 || i >= ds.size()) {
        throw Error(ErrorCode::BadTestIndices, opts.test_indices->string() + ": index " + std::to_string(i) +
                                                   " out of range");
      }
    }
    fs::copy_file(*opts.test_indices, summary.files.test_split, fs::copy_options::overwrite_existing);
  }
  save_dataset(ds, summary.files.embeddings);
  save_manifest(manifest, summary.files.manifest);
  return summary;
}

DatasetFiles cmd_synth(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);
  const auto files = DatasetFiles::in_dir(out_dir, spec.name);
  write_dataset_files(synthesize(spec), files);
  return files;
}

RunOutcome cmd_run(const BenchConfig& cfg, std::ostream& log) {
  const auto datasets = load_all(cfg, log);
  RunOutcome outcome;
  outcome.results = run_benchmark(datasets, cfg);
  for (const auto& r : outcome.results) {
    if (!r.ok()) {
      ++outcome.failed;
      log << "run failed: " << r.dataset << " " << r.method << " S=" << r.shots << " seed=" << r.seed << ": "
          << r.error << "\n";
    }
  }
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "results.csv", results_to_csv(outcome.results));
  if (outcome.failed < outcome.results.size()) {
    write_text(cfg.out_dir / "aggregate.csv", aggregate_to_csv(aggregate_all(outcome.results)));
    write_text(cfg.out_dir / "report.md", render_report(outcome.results, cfg.modality));
  }
  return outcome;
}

std::vector<SweepRow> cmd_sweep(const BenchConfig& cfg, std::ostream& log) {
  const auto datasets = load_all(cfg, log);
  auto rows = run_sweep(datasets, cfg);
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "sweep.csv", sweep_to_csv(rows));
  return rows;
}

std::string cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_dir,
                       const std::map<std::string, std::string>& modality) {
  if (inputs.empty()) throw Error(ErrorCode::ConfigError, "no results files given");
  std::vector<std::vector<RunResult>> sets;
  for (const auto& p : inputs) sets.push_back(results_from_csv(read_text(p), p.string()));
  const auto merged = merge_results(sets);
  const std::string md = render_report(merged, modality);
  fs::create_directories(out_dir);
  write_text(out_dir / "report.md", md);
  write_text(out_dir / "aggregate.csv", aggregate_to_csv(aggregate_all(merged)));
  return md;
}

}  // namespace fsadapt
