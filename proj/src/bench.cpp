#include "fsadapt/bench.hpp"

#include "fsadapt/error.hpp"
#include "fsadapt/pcg64.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace fsadapt {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- synthesis

void SynthSpec::validate() const {
  if (num_classes < 1 || dim < 1 || per_class < 1) throw Error(ErrorCode::ConfigError, "synth counts must be positive");
  if (!(sigma_cluster >= 0.0) || !(sigma_text >= 0.0)) throw Error(ErrorCode::ConfigError, "synth sigmas must be >= 0");
}

namespace {

Vector gaussian(Pcg64& rng, Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (Index j = 0; j < dim; ++j) v(j) = normal(rng);
  return v;
}

// Round-trip through float so in-memory data equals what FSEB stores.
Vector unit_float(const Vector& v) {
  Vector u = v / v.norm();
  for (Index j = 0; j < u.size(); ++j) u(j) = static_cast<double>(static_cast<float>(u(j)));
  return u;
}

}  // namespace

SynthData synthesize(const SynthSpec& spec) {
  spec.validate();
  const Index d = spec.dim;
  Pcg64 mean_rng(spec.seed, 1);
  Pcg64 sample_rng(spec.seed, 2);
  Pcg64 text_rng(spec.seed, 3);

  std::vector<Vector> means;
  for (int k = 0; k < spec.num_classes; ++k) means.push_back(gaussian(mean_rng, d).normalized());

  Matrix x(static_cast<Index>(spec.num_classes) * spec.per_class, d);
  Labels labels;
  Index row = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int i = 0; i < spec.per_class; ++i, ++row) {
      x.row(row) = unit_float(means[static_cast<std::size_t>(k)] + spec.sigma_cluster * gaussian(sample_rng, d));
      labels.push_back(k);
    }
  }
  Matrix t(spec.num_classes, d);
  for (int k = 0; k < spec.num_classes; ++k) {
    t.row(k) = unit_float(means[static_cast<std::size_t>(k)] + spec.sigma_text * gaussian(text_rng, d));
  }

  SynthData out;
  std::vector<std::string> names;
  std::vector<std::string> prompts;
  for (int k = 0; k < spec.num_classes; ++k) {
    names.push_back("class_" + std::to_string(k));
    prompts.push_back("an image of a class_" + std::to_string(k));
  }
  out.dataset = LabeledDataset{EmbeddingMatrix(std::move(x)), std::move(labels), names};
  out.text.prototypes = EmbeddingMatrix(std::move(t));
  out.text.prompts = prompts;
  out.manifest.name = spec.name;
  out.manifest.num_classes = spec.num_classes;
  out.manifest.num_samples = out.dataset.size();
  out.manifest.dim = d;
  out.manifest.class_names = names;
  out.manifest.prompts = prompts;
  out.manifest.normalized = true;
  return out;
}

DatasetFiles DatasetFiles::for_path(const fs::path& fseb) {
  const fs::path dir = fseb.parent_path();
  const std::string stem = fseb.stem().string();
  return {fseb, dir / (stem + ".text.fseb"), dir / (stem + ".manifest.json"), dir / (stem + ".test.json")};
}

DatasetFiles DatasetFiles::in_dir(const fs::path& dir, const std::string& name) {
  return for_path(dir / (name + ".fseb"));
}

void write_dataset_files(const SynthData& data, const DatasetFiles& files) {
  if (!files.embeddings.parent_path().empty()) fs::create_directories(files.embeddings.parent_path());
  save_dataset(data.dataset, files.embeddings);
  save_prototypes(data.text, files.text);
  save_manifest(data.manifest, files.manifest);
}

// ------------------------------------------------------------------- config

void BenchConfig::validate() const {
  if (methods.empty()) throw Error(ErrorCode::ConfigError, "methods list is empty");
  if (shots.empty()) throw Error(ErrorCode::ConfigError, "shots list is empty");
  for (int s : shots) {
    if (s < 1) throw Error(ErrorCode::ConfigError, "shots must be positive");
  }
  if (n_seeds < 1) throw Error(ErrorCode::ConfigError, "seeds must be >= 1");
  if (jobs < 1) throw Error(ErrorCode::ConfigError, "jobs must be >= 1");
  if (temperature && !(*temperature > 0.0)) throw Error(ErrorCode::ConfigError, "tau must be positive");
  if (!(holdout > 0.0 && holdout < 1.0)) throw Error(ErrorCode::ConfigError, "holdout must lie in (0, 1)");
  if (clip.ratio_grid.empty() || tip.alpha_grid.empty() || tip.beta_grid.empty()) {
    throw Error(ErrorCode::EmptyGrid, "hyperparameter grids must be non-empty");
  }
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::string body = trim(v);
  if (!body.empty() && body.front() == '[') body = body.substr(1);
  if (!body.empty() && body.back() == ']') body.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::ConfigError, key + ": '" + v + "' is not a number");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::ConfigError, key + ": '" + v + "' is not an integer");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::ConfigError, key + ": expected true/false");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

}  // namespace

BenchConfig parse_config(const std::string& text) {
  BenchConfig cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  std::string section;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2)) + ".";
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = section + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "datasets") {
      cfg.datasets.clear();
      for (const auto& p : split_list(value)) cfg.datasets.emplace_back(p);
    } else if (key == "methods") {
      cfg.methods.clear();
      for (const auto& m : split_list(value)) cfg.methods.push_back(parse_method(m));
    } else if (key == "shots") {
      cfg.shots.clear();
      for (const auto& s : split_list(value)) cfg.shots.push_back(static_cast<int>(to_int(key, s)));
    } else if (key == "base_seed") {
      cfg.base_seed = static_cast<std::uint64_t>(to_int(key, value));
    } else if (key == "seeds" || key == "n_seeds") {
      cfg.n_seeds = static_cast<int>(to_int(key, value));
    } else if (key == "tau") {
      cfg.temperature = to_double(key, value);
    } else if (key == "holdout") {
      cfg.holdout = to_double(key, value);
    } else if (key == "jobs") {
      cfg.jobs = static_cast<int>(to_int(key, value));
    } else if (key == "timing") {
      cfg.timing = to_bool(key, value);
    } else if (key == "out") {
      cfg.out_dir = value;
    } else if (key == "lp.max_iters") {
      cfg.lp.lbfgs.max_iters = static_cast<int>(to_int(key, value));
    } else if (key == "lp.memory") {
      cfg.lp.lbfgs.memory = static_cast<int>(to_int(key, value));
    } else if (key == "lp.grad_tol") {
      cfg.lp.lbfgs.grad_tol = to_double(key, value);
    } else if (key == "lptext.max_iters") {
      cfg.lp_text.gd.max_iters = static_cast<int>(to_int(key, value));
    } else if (key == "lptext.rel_tol") {
      cfg.lp_text.gd.rel_tol = to_double(key, value);
    } else if (key == "lptext.init") {
      if (value == "centroids") {
        cfg.lp_text.init = WeightInit::Centroids;
      } else if (value == "zeros") {
        cfg.lp_text.init = WeightInit::Zeros;
      } else {
        throw Error(ErrorCode::ConfigError, key + ": expected centroids or zeros");
      }
    } else if (key == "clip.ratio_grid") {
      cfg.clip.ratio_grid = to_doubles(key, value);
    } else if (key == "clip.hidden") {
      cfg.clip.hidden = static_cast<int>(to_int(key, value));
    } else if (key == "clip.max_iters") {
      cfg.clip.lbfgs.max_iters = static_cast<int>(to_int(key, value));
    } else if (key == "tip.alpha_grid") {
      cfg.tip.alpha_grid = to_doubles(key, value);
    } else if (key == "tip.beta_grid") {
      cfg.tip.beta_grid = to_doubles(key, value);
    } else if (key == "tip.lr") {
      cfg.tip.learning_rate = to_double(key, value);
    } else if (key == "tip.epochs") {
      cfg.tip.epochs = static_cast<int>(to_int(key, value));
    } else if (key.rfind("modality.", 0) == 0 && key.size() > 9) {
      cfg.modality[key.substr(9)] = value;
    } else {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

BenchConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

BenchDataset load_bench_dataset(const fs::path& fseb, const BenchConfig& cfg) {
  const DatasetFiles files = DatasetFiles::for_path(fseb);
  BenchDataset ds;
  ds.name = fseb.stem().string();
  LabeledDataset raw = load_dataset(files.embeddings);
  std::optional<DatasetManifest> manifest;
  if (fs::exists(files.manifest)) {
    manifest = load_manifest(files.manifest);
    if (manifest->num_samples != raw.size() || manifest->dim != raw.dim() ||
        manifest->num_classes != raw.num_classes()) {
      throw Error(ErrorCode::DimMismatch, files.manifest.string() + " disagrees with " + fseb.string());
    }
    raw.class_names = manifest->class_names;
    if (!manifest->name.empty()) ds.name = manifest->name;
  }
  ds.data = LabeledDataset{l2_normalize(raw.embeddings), raw.labels, raw.class_names};
  const TextPrototypeSet text = load_prototypes(files.text);
  if (text.num_classes() != raw.num_classes() || text.prototypes.dim() != raw.dim()) {
    throw Error(ErrorCode::DimMismatch, files.text.string() + " must hold K x D prototypes");
  }
  ds.text = l2_normalize_rows(text.prototypes.values());
  ds.temperature = cfg.temperature.value_or(manifest && manifest->temperature_hint ? *manifest->temperature_hint
                                                                                   : kDefaultTemperature);
  if (fs::exists(files.test_split)) {
    ds.test_policy = PredefinedSplit{load_test_indices(files.test_split)};
    ds.split_source = "predefined:" + files.test_split.filename().string();
  } else {
    ds.test_policy = Holdout{cfg.holdout};
    std::ostringstream s;
    s << "holdout:" << cfg.holdout;
    ds.split_source = s.str();
  }
  return ds;
}

// --------------------------------------------------------------------- runs

namespace {

struct EpisodeData {
  LabeledFeatures support;
  LabeledFeatures validation;
  LabeledFeatures test;
};

LabeledFeatures gather(const LabeledDataset& ds, const std::vector<Index>& idx) {
  LabeledFeatures out;
  out.features = take_rows(ds.embeddings.values(), idx);
  out.num_classes = ds.num_classes();
  for (Index i : idx) out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
  return out;
}

EpisodeData episode_data(const BenchDataset& ds, int shots, std::uint64_t seed) {
  EpisodeSpec spec;
  spec.shots = shots;
  spec.seed = seed;
  spec.test_policy = ds.test_policy;
  const FewShotEpisode ep = sample_episode(ds.data, spec);
  return {gather(ds.data, ep.flat_support()), gather(ds.data, ep.flat_validation()), gather(ds.data, ep.test)};
}

double aca_of(const Matrix& scores, const LabeledFeatures& data) {
  return balanced_accuracy(argmax_rows(scores), data.labels, data.num_classes);
}

// Selects hyperparameters on validation (where the method has any), fits
// on support, returns test scores and the chosen hyperparameters.
std::pair<Matrix, json> fit_and_score(const BenchDataset& ds, Method method, const EpisodeData& ep,
                                      const BenchConfig& cfg) {
  json hp = json::object();
  switch (method) {
    case Method::ZeroShot: {
      hp["tau"] = ds.temperature;
      return {zero_shot_predict(ep.test.features, {ds.text, ds.temperature}), hp};
    }
    case Method::LinearProbe: {
      const LpState st = lp_fit(ep.support, cfg.lp);
      hp["lbfgs_iterations"] = st.report.iterations;
      return {predict(st, ep.test.features), hp};
    }
    case Method::LpText: {
      const LpTextState st = lp_text_fit(ep.support, ds.text, cfg.lp_text);
      hp["init"] = cfg.lp_text.init == WeightInit::Centroids ? "centroids" : "zeros";
      hp["gd_iterations"] = st.report.iterations;
      return {predict(st, ep.test.features), hp};
    }
    case Method::ClipAdapter: {
      ClipAdapterConfig c = cfg.clip;
      c.temperature = ds.temperature;
      const ClipAdapterState st = clip_adapter_fit(ep.support, ds.text, c, ep.validation);
      hp["ratio"] = st.ratio;
      hp["hidden"] = st.a1.cols();
      return {predict(st, ep.test.features), hp};
    }
    case Method::TipAdapterF: {
      const TipAdapterState init = tip_adapter_build(ep.support, ds.text, 1.0, 1.0, ds.temperature);
      const TipAdapterState st = tip_adapter_finetune(init, ep.support, cfg.tip, ep.validation);
      hp["alpha"] = st.alpha_blend;
      hp["beta"] = st.beta_sharp;
      return {predict(st, ep.test.features), hp};
    }
  }
  throw Error(ErrorCode::UnknownMethod, "unknown method");
}

}  // namespace

RunResult run_single(const BenchDataset& ds, Method method, int shots, std::uint64_t seed, const BenchConfig& cfg) {
  RunResult r;
  r.dataset = ds.name;
  r.method = std::string(method_name(method));
  r.shots = shots;
  r.seed = seed;
  r.params = parameter_count(method, ds.data.num_classes(), ds.data.dim(), shots, cfg.clip.hidden).weights;
  try {
    const EpisodeData ep = episode_data(ds, shots, seed);
    const auto start = std::chrono::steady_clock::now();
    auto [scores, hp] = fit_and_score(ds, method, ep, cfg);
    const auto stop = std::chrono::steady_clock::now();
    r.aca = aca_of(scores, ep.test);
    if (cfg.timing) r.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    r.hyperparams_json = hp.dump();
  } catch (const std::exception& e) {
    r.aca = 0.0;
    r.error = e.what();
  }
  return r;
}

namespace {

template <typename Task>
void parallel_for(std::size_t count, int jobs, Task&& task) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < std::min<int>(jobs, static_cast<int>(count)); ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& t : workers) t.join();
}

struct Tuple {
  std::size_t dataset;
  Method method;
  int shots;
  std::uint64_t seed;
};

std::vector<Tuple> run_tuples(const std::vector<BenchDataset>& datasets, const BenchConfig& cfg) {
  std::vector<Tuple> tuples;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (Method m : cfg.methods) {
      for (int s : cfg.shots) {
        for (std::uint64_t seed : seed_schedule(cfg.base_seed, cfg.n_seeds)) tuples.push_back({d, m, s, seed});
      }
    }
  }
  return tuples;
}

bool result_less(const RunResult& a, const RunResult& b) {
  return std::tie(a.dataset, a.method, a.shots, a.seed) < std::tie(b.dataset, b.method, b.shots, b.seed);
}

}  // namespace

std::vector<RunResult> run_benchmark(const std::vector<BenchDataset>& datasets, const BenchConfig& cfg) {
  cfg.validate();
  const auto tuples = run_tuples(datasets, cfg);
  std::vector<RunResult> results(tuples.size());
  parallel_for(tuples.size(), cfg.jobs, [&](std::size_t i) {
    const Tuple& t = tuples[i];
    results[i] = run_single(datasets[t.dataset], t.method, t.shots, t.seed, cfg);
  });
  std::stable_sort(results.begin(), results.end(), result_less);
  return results;
}

std::vector<SweepRow> run_sweep(const std::vector<BenchDataset>& datasets, const BenchConfig& cfg) {
  cfg.validate();
  const auto tuples = run_tuples(datasets, cfg);
  std::vector<std::vector<SweepRow>> per_tuple(tuples.size());
  parallel_for(tuples.size(), cfg.jobs, [&](std::size_t i) {
    const Tuple& t = tuples[i];
    const BenchDataset& ds = datasets[t.dataset];
    auto& rows = per_tuple[i];
    auto emit = [&](std::size_t index, const json& hp, double score) {
      rows.push_back({ds.name, std::string(method_name(t.method)), t.shots, t.seed, index, hp.dump(), score});
    };
    EpisodeData ep;
    try {
      ep = episode_data(ds, t.shots, t.seed);
    } catch (const Error&) {
      return;
    }
    switch (t.method) {
      case Method::ZeroShot:
        emit(0, json{{"tau", ds.temperature}}, aca_of(zero_shot_predict(ep.validation.features, {ds.text, ds.temperature}), ep.validation));
        break;
      case Method::LinearProbe:
        emit(0, json::object(), aca_of(predict(lp_fit(ep.support, cfg.lp), ep.validation.features), ep.validation));
        break;
      case Method::LpText:
        emit(0, json::object(),
             aca_of(predict(lp_text_fit(ep.support, ds.text, cfg.lp_text), ep.validation.features), ep.validation));
        break;
      case Method::ClipAdapter: {
        ClipAdapterConfig c = cfg.clip;
        c.temperature = ds.temperature;
        for (std::size_t k = 0; k < cfg.clip.ratio_grid.size(); ++k) {
          c.ratio = cfg.clip.ratio_grid[k];
          const ClipAdapterState st = clip_adapter_fit(ep.support, ds.text, c);
          emit(k, json{{"ratio", c.ratio}}, aca_of(st.logits(ep.validation.features), ep.validation));
        }
        break;
      }
      case Method::TipAdapterF: {
        const TipAdapterState tuned =
            tip_adapter_finetune(tip_adapter_build(ep.support, ds.text, 1.0, 1.0, ds.temperature), ep.support, cfg.tip);
        std::size_t k = 0;
        for (double a : cfg.tip.alpha_grid) {
          for (double b : cfg.tip.beta_grid) {
            TipAdapterState st = tuned;
            st.alpha_blend = a;
            st.beta_sharp = b;
            emit(k++, json{{"alpha", a}, {"beta", b}}, aca_of(st.logits(ep.validation.features), ep.validation));
          }
        }
        break;
      }
    }
  });
  std::vector<SweepRow> out;
  for (auto& rows : per_tuple) out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

// ------------------------------------------------------------------ results

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::string results_to_csv(const std::vector<RunResult>& results) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : results) {
    out += csv_quote(r.dataset) + "," + csv_quote(r.method) + "," + std::to_string(r.shots) + "," +
           std::to_string(r.seed) + "," + fmt("%.17g", r.aca) + "," + fmt("%.3f", r.wall_ms) + "," +
           std::to_string(r.params) + "," + csv_quote(r.hyperparams_json) + "," + csv_quote(r.error) + "\n";
  }
  return out;
}

std::vector<RunResult> results_from_csv(const std::string& text, const std::string& origin) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line) || csv_split(line) != csv_split(kResultsHeader)) {
    throw Error(ErrorCode::SchemaError, origin + ": header must be " + kResultsHeader);
  }
  std::vector<RunResult> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = csv_split(line);
    const std::string where = origin + ":" + std::to_string(lineno);
    if (c.size() != 9) throw Error(ErrorCode::SchemaError, where + ": expected 9 columns");
    RunResult r;
    try {
      r.dataset = c[0];
      r.method = c[1];
      r.shots = std::stoi(c[2]);
      r.seed = std::stoull(c[3]);
      r.aca = std::stod(c[4]);
      r.wall_ms = std::stod(c[5]);
      r.params = std::stoll(c[6]);
      r.hyperparams_json = c[7];
      r.error = c[8];
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::SchemaError, where + ": malformed numeric field");
    }
    if (r.ok() && !(r.aca >= 0.0 && r.aca <= 1.0)) throw Error(ErrorCode::SchemaError, where + ": aca outside [0, 1]");
    out.push_back(std::move(r));
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "dataset,method,shots,seed,config_index,hyperparams_json,val_aca\n";
  for (const auto& r : rows) {
    out += csv_quote(r.dataset) + "," + csv_quote(r.method) + "," + std::to_string(r.shots) + "," +
           std::to_string(r.seed) + "," + std::to_string(r.config_index) + "," + csv_quote(r.hyperparams_json) + "," +
           fmt("%.17g", r.val_aca) + "\n";
  }
  return out;
}

std::vector<RunResult> merge_results(const std::vector<std::vector<RunResult>>& sets) {
  std::vector<RunResult> out;
  std::set<std::tuple<std::string, std::string, int, std::uint64_t>> seen;
  for (const auto& set : sets) {
    for (const auto& r : set) {
      if (!seen.emplace(r.dataset, r.method, r.shots, r.seed).second) {
        throw Error(ErrorCode::SchemaError, "duplicate result for " + r.dataset + "/" + r.method + "/S=" +
                                                std::to_string(r.shots) + "/seed=" + std::to_string(r.seed));
      }
      out.push_back(r);
    }
  }
  std::stable_sort(out.begin(), out.end(), result_less);
  return out;
}

std::vector<AggregateRow> aggregate_all(const std::vector<RunResult>& results) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<RunResult>> groups;
  for (const auto& r : results) groups[{r.dataset, r.method, r.shots}].push_back(r);
  std::vector<AggregateRow> out;
  for (auto& [key, group] : groups) {
    if (std::none_of(group.begin(), group.end(), [](const RunResult& r) { return r.ok(); })) continue;
    out.push_back(aggregate(std::move(group)));
  }
  return out;
}

std::string aggregate_to_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "dataset,method,shots,mean_aca,std_aca,n_seeds\n";
  for (const auto& r : rows) {
    out += csv_quote(r.dataset) + "," + csv_quote(r.method) + "," + std::to_string(r.shots) + "," +
           fmt("%.17g", r.mean_aca) + "," + (r.std_aca ? fmt("%.17g", *r.std_aca) : std::string()) + "," +
           std::to_string(r.n_seeds) + "\n";
  }
  return out;
}

std::string format_cell(const AggregateRow& row, int expected_seeds) {
  std::string cell = fmt("%.2f", 100.0 * row.mean_aca) + " ± " +
                     (row.std_aca ? fmt("%.2f", 100.0 * *row.std_aca) : std::string("n/a"));
  if (row.n_seeds < expected_seeds) cell += " (n=" + std::to_string(row.n_seeds) + ")";
  return cell;
}

namespace {

std::vector<std::string> ordered_methods(const std::vector<RunResult>& results) {
  std::vector<std::string> known;
  for (Method m : {Method::ZeroShot, Method::ClipAdapter, Method::TipAdapterF, Method::LinearProbe, Method::LpText}) {
    known.emplace_back(method_name(m));
  }
  std::vector<std::string> out;
  for (const auto& m : known) {
    if (std::any_of(results.begin(), results.end(), [&](const RunResult& r) { return r.method == m; })) out.push_back(m);
  }
  std::set<std::string> extra;
  for (const auto& r : results) {
    if (std::find(known.begin(), known.end(), r.method) == known.end()) extra.insert(r.method);
  }
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::string table_header(const std::string& first, const std::vector<int>& shots) {
  std::string h = "| " + first + " |";
  std::string sep = "|---|";
  for (int s : shots) {
    h += " S=" + std::to_string(s) + " |";
    sep += "---|";
  }
  return h + "\n" + sep + "\n";
}

}  // namespace

std::string render_report(const std::vector<RunResult>& results, const std::map<std::string, std::string>& modality) {
  const auto rows = aggregate_all(results);
  const auto methods = ordered_methods(results);
  std::set<int> shot_set;
  std::set<std::string> dataset_set;
  std::map<std::string, int> max_seeds;
  for (const auto& r : rows) {
    shot_set.insert(r.shots);
    dataset_set.insert(r.dataset);
    max_seeds[r.dataset] = std::max(max_seeds[r.dataset], r.n_seeds);
  }
  const std::vector<int> shots(shot_set.begin(), shot_set.end());
  auto find = [&](const std::string& d, const std::string& m, int s) -> const AggregateRow* {
    for (const auto& r : rows) {
      if (r.dataset == d && r.method == m && r.shots == s) return &r;
    }
    return nullptr;
  };

  std::ostringstream md;
  md << "# Few-shot adaptation results\n\n"
     << "Balanced average accuracy (%), mean ± sample standard deviation (n-1 divisor) over seeds.\n\n";
  for (const auto& d : dataset_set) {
    md << "## " << d << "\n\n" << table_header("Method", shots);
    for (const auto& m : methods) {
      md << "| " << m << " |";
      for (int s : shots) {
        const AggregateRow* a = find(d, m, s);
        md << " " << (a ? format_cell(*a, max_seeds[d]) : std::string("-")) << " |";
      }
      md << "\n";
    }
    md << "\n";
  }

  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& d : dataset_set) {
    const auto it = modality.find(d);
    groups[it == modality.end() ? "all" : it->second].push_back(d);
  }
  md << "## Average per modality\n\n" << table_header("Modality / Method", shots);
  for (const auto& [mod, datasets] : groups) {
    for (const auto& m : methods) {
      md << "| " << mod << " / " << m << " |";
      for (int s : shots) {
        double sum = 0.0;
        int n = 0;
        for (const auto& d : datasets) {
          if (const AggregateRow* a = find(d, m, s)) {
            sum += a->mean_aca;
            ++n;
          }
        }
        md << " " << (n > 0 ? fmt("%.2f", 100.0 * sum / n) : std::string("-")) << " |";
      }
      md << "\n";
    }
  }
  md << "\n";

  md << "## Efficiency\n\n| Method | #Parameters (formula) | #Parameters | Mean wall time (ms) |\n|---|---|---|---|\n";
  const std::map<std::string, std::string> formula = {{"zero-shot", "n/a"},         {"lp", "K x D"},
                                                      {"lp+text", "K(D+1)"},         {"clip-adapter", "2(D1 x D2)"},
                                                      {"tip-adapter-f", "K x S x D"}};
  const int top_shot = shots.empty() ? 0 : shots.back();
  for (const auto& m : methods) {
    std::int64_t params = 0;
    double wall = 0.0;
    int n = 0;
    for (const auto& r : results) {
      if (r.method != m || !r.ok()) continue;
      if (r.shots == top_shot) params = std::max(params, r.params);
      wall += r.wall_ms;
      ++n;
    }
    const auto f = formula.find(m);
    md << "| " << m << " | " << (f == formula.end() ? "?" : f->second) << " | " << params << " (S=" << top_shot
       << ") | " << (n > 0 && wall > 0.0 ? fmt("%.2f", wall / n) : std::string("n/a")) << " |\n";
  }
  return md.str();
}

}  // namespace fsadapt
