#include "doctest.h"
#include "test_support.hpp"

#include "fsadapt/bench.hpp"
#include "fsadapt/error.hpp"

#include <fstream>
#include <sstream>

using namespace fsadapt;
using fsadapt::testing::scratch_dir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

BenchConfig small_config() {
  BenchConfig cfg;
  cfg.shots = {1, 2};
  cfg.n_seeds = 2;
  cfg.clip.ratio_grid = {0.2, 0.6};
  cfg.clip.lbfgs.max_iters = 10;
  cfg.tip.alpha_grid = {1.0, 2.0};
  cfg.tip.beta_grid = {1.0, 5.0};
  cfg.tip.epochs = 5;
  return cfg;
}

}  // namespace

TEST_CASE("synthesize") {
  SUBCASE("sigma_cluster = 0 collapses each class onto its mean") {
    SynthSpec s;
    s.num_classes = 3;
    s.dim = 5;
    s.per_class = 4;
    s.sigma_cluster = 0.0;
    const auto d = synthesize(s);
    const Matrix& x = d.dataset.embeddings.values();
    for (Index i = 0; i < x.rows(); ++i) CHECK(x.row(i) == x.row(i - i % 4));
  }
  SUBCASE("sigma_text = 0 gives perfect zero-shot for tight clusters") {
    SynthSpec s;
    s.num_classes = 5;
    s.dim = 16;
    s.per_class = 20;
    s.sigma_cluster = 0.02;
    s.sigma_text = 0.0;
    const auto d = synthesize(s);
    const Matrix x = l2_normalize_rows(d.dataset.embeddings.values());
    const Matrix t = l2_normalize_rows(d.text.prototypes.values());
    const auto pred = argmax_rows(zero_shot_predict(x, {t, 100.0}));
    CHECK(balanced_accuracy(pred, d.dataset.labels, 5) == 1.0);
  }
  SUBCASE("files are bit-identical for a fixed seed") {
    const auto dir = scratch_dir("synth_det");
    SynthSpec s;
    s.seed = 77;
    write_dataset_files(synthesize(s), DatasetFiles::in_dir(dir / "a", "synth"));
    write_dataset_files(synthesize(s), DatasetFiles::in_dir(dir / "b", "synth"));
    for (const char* f : {"synth.fseb", "synth.text.fseb", "synth.manifest.json"}) {
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
  }
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config(R"(# comment
datasets = a.fseb, b.fseb
methods = lp, lp+text
shots = [1, 4]
seeds = 3
tau = 50
[tip]
alpha_grid = 1, 2
)");
  CHECK(cfg.datasets.size() == 2);
  CHECK(cfg.methods == std::vector<Method>{Method::LinearProbe, Method::LpText});
  CHECK(cfg.shots == std::vector<int>{1, 4});
  CHECK(cfg.n_seeds == 3);
  CHECK(cfg.temperature.value() == 50.0);
  CHECK(cfg.tip.alpha_grid == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(parse_config("bogus = 1\n"), Error);
  CHECK_THROWS_AS(parse_config("seeds = many\n"), Error);
  BenchConfig bad;
  bad.methods.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("results CSV round trip and merge") {
  RunResult a;
  a.dataset = "d";
  a.method = "tip-adapter-f";
  a.shots = 4;
  a.seed = 2;
  a.aca = 0.123456789012345;
  a.hyperparams_json = R"({"alpha":1.0,"beta":2.0})";
  RunResult b = a;
  b.seed = 3;
  b.error = "InsufficientSamples: class 1, needs \"5\"";
  const auto back = results_from_csv(results_to_csv({a, b}));
  REQUIRE(back.size() == 2);
  CHECK(back[0].aca == a.aca);
  CHECK(back[0].hyperparams_json == a.hyperparams_json);
  CHECK(back[1].error == b.error);
  CHECK(results_to_csv(back) == results_to_csv({a, b}));

  CHECK(merge_results({{a}, {b}}).size() == 2);
  try {
    merge_results({{a}, {a}});
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
  }
  CHECK_THROWS_AS(results_from_csv("dataset,method\n"), Error);
}

TEST_CASE("report cells") {
  std::vector<RunResult> rs;
  for (std::uint64_t s = 0; s < 5; ++s) {
    RunResult r;
    r.dataset = "d";
    r.method = "lp";
    r.shots = 1;
    r.seed = s;
    r.aca = 0.5 + 0.01 * static_cast<double>(s);
    rs.push_back(r);
  }
  RunResult partial = rs[0];
  partial.shots = 2;
  rs.push_back(partial);
  const auto rows = aggregate_all(rs);
  REQUIRE(rows.size() == 2);
  CHECK(format_cell(rows[0], 5) == "52.00 ± 1.58");
  CHECK(format_cell(rows[1], 5) == "50.00 ± n/a (n=1)");
  const std::string md = render_report(rs, {{"d", "histology"}});
  CHECK(md.find("52.00 ± 1.58") != std::string::npos);
  CHECK(md.find("(n=1)") != std::string::npos);
  CHECK(md.find("histology / lp") != std::string::npos);
  CHECK(md.find("K x D") != std::string::npos);
}

TEST_CASE("benchmark runs are deterministic and shaped per protocol") {
  const auto dir = scratch_dir("bench_run");
  SynthSpec s;
  s.num_classes = 3;
  s.dim = 8;
  s.per_class = 20;
  s.seed = 4;
  const auto files = DatasetFiles::in_dir(dir, "toy");
  write_dataset_files(synthesize(s), files);
  BenchConfig cfg = small_config();
  const std::vector<BenchDataset> ds{load_bench_dataset(files.embeddings, cfg)};
  CHECK(ds[0].split_source.rfind("holdout", 0) == 0);
  const auto a = run_benchmark(ds, cfg);
  CHECK(a.size() == 5 * 2 * 2);
  for (const auto& r : a) {
    CHECK_MESSAGE(r.ok(), r.error);
    CHECK(r.aca >= 0.0);
    CHECK(r.aca <= 1.0);
  }
  cfg.jobs = 3;
  const auto b = run_benchmark(ds, cfg);
  CHECK(results_to_csv(a) == results_to_csv(b));

  const auto sweep = run_sweep(ds, cfg);
  // per (S, seed): zero-shot 1, lp 1, lp+text 1, clip 2, tip 4
  CHECK(sweep.size() == 4 * (1 + 1 + 1 + 2 + 4));
}

TEST_CASE("zero-shot is constant across shots and seeds on a predefined split") {
  const auto dir = scratch_dir("bench_predef");
  SynthSpec s;
  s.num_classes = 3;
  s.dim = 8;
  s.per_class = 20;
  const auto files = DatasetFiles::in_dir(dir, "toy");
  write_dataset_files(synthesize(s), files);
  {
    std::ofstream out(files.test_split);
    out << "[0, 1, 2, 20, 21, 22, 40, 41, 42]";
  }
  BenchConfig cfg = small_config();
  cfg.methods = {Method::ZeroShot};
  const std::vector<BenchDataset> ds{load_bench_dataset(files.embeddings, cfg)};
  CHECK(ds[0].split_source == "predefined:toy.test.json");
  const auto res = run_benchmark(ds, cfg);
  REQUIRE(res.size() == 4);
  for (const auto& r : res) CHECK(r.aca == res[0].aca);
}

TEST_CASE("failed runs are recorded, not thrown") {
  const auto dir = scratch_dir("bench_fail");
  SynthSpec s;
  s.num_classes = 2;
  s.dim = 4;
  s.per_class = 5;
  const auto files = DatasetFiles::in_dir(dir, "tiny");
  write_dataset_files(synthesize(s), files);
  BenchConfig cfg = small_config();
  cfg.methods = {Method::LinearProbe};
  cfg.shots = {16};
  const std::vector<BenchDataset> ds{load_bench_dataset(files.embeddings, cfg)};
  const auto res = run_benchmark(ds, cfg);
  for (const auto& r : res) CHECK(r.error.find("InsufficientSamples") != std::string::npos);
}
