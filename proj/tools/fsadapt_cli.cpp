#include "fsadapt/commands.hpp"
#include "fsadapt/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace fsadapt;
namespace fs = std::filesystem;

namespace {

// Exit codes
constexpr int kOk = 0;
constexpr int kAllRunsFailed = 1;
constexpr int kInputError = 2;

struct RunFlags {
  std::string config;
  std::string out;
  std::optional<int> seeds;
  std::vector<int> shots;
  std::optional<double> tau;
  std::optional<int> jobs;
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  bool timing = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("datasets", f.datasets, "FSEB dataset files (added to those in --config)");
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seeds", f.seeds, "number of seeds")->check(CLI::PositiveNumber);
  cmd->add_option("--shots", f.shots, "shots per class, e.g. 1,2,4,8,16")->delimiter(',');
  cmd->add_option("--tau", f.tau, "softmax temperature for text logits");
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--methods", f.methods, "subset of zero-shot,lp,lp+text,clip-adapter,tip-adapter-f")
      ->delimiter(',');
  cmd->add_flag("--timing", f.timing, "record wall_ms (results are then not byte-stable)");
}

BenchConfig resolve(const RunFlags& f) {
  BenchConfig cfg = f.config.empty() ? BenchConfig{} : load_config(f.config);
  for (const auto& d : f.datasets) cfg.datasets.emplace_back(d);
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.seeds) cfg.n_seeds = *f.seeds;
  if (!f.shots.empty()) cfg.shots = f.shots;
  if (f.tau) cfg.temperature = *f.tau;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (!f.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : f.methods) cfg.methods.push_back(parse_method(m));
  }
  if (f.timing) cfg.timing = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot adaptation benchmark over frozen embeddings"};
  app.require_subcommand(1);

  IngestOptions ingest;
  std::string ingest_out = ".";
  auto* ingest_cmd = app.add_subcommand("ingest", "validate a CSV/FSEB dataset and write FSEB + manifest");
  ingest_cmd->add_option("input", ingest.input, "label,f0,... CSV or .fseb file")->required();
  ingest_cmd->add_option("--out", ingest_out, "output directory");
  ingest_cmd->add_option("--name", ingest.name, "dataset name (default: input stem)");
  ingest_cmd->add_option("--classes", ingest.num_classes, "declared class count");
  ingest_cmd->add_option("--text", ingest.text_csv, "text prototypes CSV, one row per class");
  ingest_cmd->add_option("--test", ingest.test_indices, "JSON array of test row indices");
  ingest_cmd->add_option("--tau", ingest.temperature_hint, "temperature hint stored in the manifest");

  SynthSpec synth;
  std::string synth_out = ".";
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic sphere dataset");
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_option("--name", synth.name);
  synth_cmd->add_option("--classes", synth.num_classes);
  synth_cmd->add_option("--dim", synth.dim);
  synth_cmd->add_option("--per-class", synth.per_class);
  synth_cmd->add_option("--sigma-cluster", synth.sigma_cluster);
  synth_cmd->add_option("--sigma-text", synth.sigma_text);
  synth_cmd->add_option("--seed", synth.seed);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "run the benchmark: results.csv, aggregate.csv, report.md");
  add_run_flags(run_cmd, run_flags);

  RunFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "validation scores of every grid config: sweep.csv");
  add_run_flags(sweep_cmd, sweep_flags);

  std::vector<std::string> report_inputs;
  std::string report_out = ".";
  std::string report_config;
  auto* report_cmd = app.add_subcommand("report", "merge results CSVs into report.md and aggregate.csv");
  report_cmd->add_option("results", report_inputs, "results.csv files")->required();
  report_cmd->add_option("--out", report_out, "output directory");
  report_cmd->add_option("--config", report_config, "config file (only [modality] is read)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    if (*ingest_cmd) {
      ingest.out_dir = ingest_out;
      const auto s = cmd_ingest(ingest);
      std::cout << "N=" << s.num_samples << " D=" << s.dim << " K=" << s.num_classes << " -> "
                << s.files.embeddings.string() << "\n";
    } else if (*synth_cmd) {
      const auto files = cmd_synth(synth, synth_out);
      std::cout << files.embeddings.string() << "\n";
    } else if (*run_cmd) {
      const auto cfg = resolve(run_flags);
      const auto outcome = cmd_run(cfg, std::cerr);
      if (outcome.all_failed()) {
        std::cerr << "error: all " << outcome.results.size() << " runs failed\n";
        return kAllRunsFailed;
      }
      if (outcome.failed > 0) {
        std::cerr << "warning: " << outcome.failed << " of " << outcome.results.size() << " runs failed\n";
      }
      std::cout << outcome.results.size() << " runs written to " << cfg.out_dir.string() << "\n";
    } else if (*sweep_cmd) {
      const auto cfg = resolve(sweep_flags);
      const auto rows = cmd_sweep(cfg, std::cerr);
      std::cout << rows.size() << " configs written to " << (cfg.out_dir / "sweep.csv").string() << "\n";
    } else if (*report_cmd) {
      std::vector<fs::path> inputs(report_inputs.begin(), report_inputs.end());
      const auto modality = report_config.empty() ? std::map<std::string, std::string>{}
                                                  : load_config(report_config).modality;
      std::cout << cmd_report(inputs, report_out, modality);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kOk;
}
