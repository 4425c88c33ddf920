#include "fsadapt/adapters.hpp"
#include "fsadapt/commands.hpp"
#include "fsadapt/episodes.hpp"
#include "fsadapt/evaluation.hpp"
#include "fsadapt/numopt.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace fsadapt;

namespace {

LabeledFeatures features(const Matrix& f, const Labels& y, int k) {
  return LabeledFeatures{f, y, k > 0 ? k : (y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1)};
}

py::dict run_result_dict(const RunResult& r) {
  py::dict d;
  d["dataset"] = r.dataset;
  d["method"] = r.method;
  d["shots"] = r.shots;
  d["seed"] = r.seed;
  d["aca"] = r.aca;
  d["params"] = r.params;
  d["hyperparams_json"] = r.hyperparams_json;
  d["error"] = r.error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fsadapt, m) {
  m.doc() = "few-shot adaptation of frozen embeddings";

  static py::exception<Error> error(m, "FsadaptError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("l2_normalize_rows", &l2_normalize_rows, py::arg("x"));
  m.def("balanced_accuracy", &balanced_accuracy, py::arg("predictions"), py::arg("labels"), py::arg("num_classes"));
  m.def("argmax_rows", &argmax_rows, py::arg("scores"));

  m.def(
      "zero_shot_predict",
      [](const Matrix& q, const Matrix& text, double tau) { return zero_shot_predict(q, {text, tau}); },
      py::arg("query"), py::arg("text"), py::arg("tau") = kDefaultTemperature);

  m.def(
      "lp_fit",
      [](const Matrix& f, const Labels& y, int k) {
        const auto st = lp_fit(features(f, y, k));
        return py::make_tuple(st.weights, st.report.iterations, st.report.converged);
      },
      py::arg("features"), py::arg("labels"), py::arg("num_classes") = 0,
      "L-BFGS linear probe; returns (weights, iterations, converged)");

  m.def(
      "lp_text_fit",
      [](const Matrix& f, const Labels& y, const Matrix& text, int max_iters, bool zeros_init) {
        LpTextConfig cfg;
        cfg.gd.max_iters = max_iters;
        if (zeros_init) cfg.init = WeightInit::Zeros;
        const auto st = lp_text_fit(features(f, y, static_cast<int>(text.rows())), text, cfg);
        return py::make_tuple(st.weights, st.alpha, st.report.loss_trace);
      },
      py::arg("features"), py::arg("labels"), py::arg("text"), py::arg("max_iters") = 300,
      py::arg("zeros_init") = false, "text-blended probe; returns (weights, alpha, loss_trace)");

  m.def(
      "lp_text_predict",
      [](const Matrix& q, const Matrix& w, const Vector& alpha, const Matrix& text) {
        return predict(LpTextState{w, alpha, text, {}}, q);
      },
      py::arg("query"), py::arg("weights"), py::arg("alpha"), py::arg("text"));

  m.def(
      "lp_text_loss_grad",
      [](const Matrix& f, const Labels& y, const Matrix& text, const Matrix& w, const Vector& alpha) {
        const auto lg = lp_text_loss_grad(LpTextObjective{f, y, text, w, alpha});
        return py::make_tuple(lg.loss, lg.grad_weights, lg.grad_alpha);
      },
      py::arg("features"), py::arg("labels"), py::arg("text"), py::arg("weights"), py::arg("alpha"));

  m.def(
      "lipschitz_constants",
      [](const Matrix& f, const Matrix& text) {
        const auto l = lipschitz_constants(f, text);
        return py::make_tuple(l.weights, l.alpha);
      },
      py::arg("features"), py::arg("text"));

  m.def(
      "parameter_count",
      [](const std::string& method, std::int64_t k, std::int64_t d, std::int64_t s, std::int64_t hidden) {
        return parameter_count(method, k, d, s, hidden).weights;
      },
      py::arg("method"), py::arg("num_classes"), py::arg("dim"), py::arg("shots"), py::arg("hidden") = 0);

  m.def(
      "sample_episode",
      [](const Matrix& x, const Labels& y, int shots, std::uint64_t seed, double holdout) {
        LabeledDataset ds{EmbeddingMatrix(x), y, {}};
        const int k = *std::max_element(y.begin(), y.end()) + 1;
        for (int c = 0; c < k; ++c) ds.class_names.push_back("class_" + std::to_string(c));
        const auto ep = sample_episode(ds, EpisodeSpec{shots, std::nullopt, seed, Holdout{holdout}});
        return py::make_tuple(ep.support, ep.validation, ep.test);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("shots"), py::arg("seed"), py::arg("holdout") = 0.2,
      "returns (support per class, validation per class, sorted test indices)");

  m.def(
      "synth",
      [](const std::filesystem::path& out, const std::string& name, int k, int d, int per_class, double sc,
         double st, std::uint64_t seed) {
        SynthSpec spec{name, k, d, per_class, sc, st, seed};
        return cmd_synth(spec, out).embeddings;
      },
      py::arg("out"), py::arg("name") = "synth", py::arg("num_classes") = 10, py::arg("dim") = 64,
      py::arg("per_class") = 50, py::arg("sigma_cluster") = 0.35, py::arg("sigma_text") = 0.25,
      py::arg("seed") = 0, "writes a synthetic dataset; returns the .fseb path");

  m.def(
      "load_dataset",
      [](const std::filesystem::path& p) {
        const auto ds = load_dataset(p);
        return py::make_tuple(ds.embeddings.values(), ds.labels);
      },
      py::arg("path"));

  m.def(
      "run",
      [](const std::vector<std::filesystem::path>& datasets, const std::filesystem::path& out,
         const std::vector<std::string>& methods, const std::vector<int>& shots, int seeds, int jobs) {
        BenchConfig cfg;
        cfg.datasets = datasets;
        cfg.out_dir = out;
        if (!methods.empty()) {
          cfg.methods.clear();
          for (const auto& mth : methods) cfg.methods.push_back(parse_method(mth));
        }
        if (!shots.empty()) cfg.shots = shots;
        cfg.n_seeds = seeds;
        cfg.jobs = jobs;
        std::ostringstream log;
        const auto outcome = [&] {
          py::gil_scoped_release release;
          return cmd_run(cfg, log);
        }();
        py::list rows;
        for (const auto& r : outcome.results) rows.append(run_result_dict(r));
        return rows;
      },
      py::arg("datasets"), py::arg("out"), py::arg("methods") = std::vector<std::string>{},
      py::arg("shots") = std::vector<int>{}, py::arg("seeds") = 5, py::arg("jobs") = 1,
      "runs the benchmark, writes results.csv/aggregate.csv/report.md, returns the rows");
}
