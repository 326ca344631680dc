/* Copyright 2026 The avsec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "avsec/annotation.hpp"
#include "avsec/av_analysis.hpp"
#include "avsec/cli.hpp"
#include "avsec/dsp.hpp"
#include "avsec/error.hpp"
#include "avsec/evaluation.hpp"
#include "avsec/features.hpp"

namespace py = pybind11;
using namespace avsec;

namespace {

using Scores = std::array<std::uint8_t, kNumActions>;

ActionRating to_rating(const std::string& clip, const std::string& annotator, const std::vector<int>& scores) {
  if (scores.size() != kNumActions) throw DataError("a rating needs 20 scores");
  ActionRating r{clip, annotator, {}};
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (scores[i] < 0 || scores[i] > kLikertMax) throw DataError("scores must be 0-4");
    r.scores[i] = static_cast<std::uint8_t>(scores[i]);
  }
  return r;
}

py::dict summary_dict(const RepeatedRunSummary& s) {
  py::dict d;
  d["mean"] = s.mean;
  d["stddev"] = s.stddev;
  d["n_runs"] = s.n_runs;
  py::list runs;
  for (const auto& r : s.runs) {
    py::dict one;
    one["seed"] = r.run_seed;
    one["overall_accuracy"] = r.overall_accuracy;
    one["per_fold_accuracy"] = r.per_fold_accuracy;
    one["confusion"] = Eigen::MatrixXi(r.confusion);
    runs.append(one);
  }
  d["runs"] = runs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_avsec, m) {
  m.doc() = "Action-vector sound event classification core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<LeakageError>(m, "LeakageError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  std::vector<std::string> actions;
  for (auto a : ActionTaxonomy::standard().actions()) actions.emplace_back(a);
  m.attr("ACTIONS") = actions;

  py::class_<DspConfig>(m, "DspConfig")
      .def(py::init<>())
      .def_readwrite("target_sample_rate", &DspConfig::target_sample_rate)
      .def_readwrite("fft_size", &DspConfig::fft_size)
      .def_readwrite("hop", &DspConfig::hop)
      .def_readwrite("n_mels", &DspConfig::n_mels)
      .def_readwrite("f_min", &DspConfig::f_min)
      .def_readwrite("f_max", &DspConfig::f_max)
      .def_readwrite("power", &DspConfig::power)
      .def_readwrite("top_db", &DspConfig::top_db)
      .def("validate", &DspConfig::validate);

  m.def("resample", [](const std::vector<double>& x, int from, int to) { return resample(x, from, to); },
        py::arg("signal"), py::arg("from_rate"), py::arg("to_rate"));
  m.def("mel_filterbank", &mel_filterbank, py::arg("config") = DspConfig{});
  m.def("log_mel", [](const std::vector<double>& x, const DspConfig& c) { return log_mel(x, c); },
        py::arg("signal"), py::arg("config") = DspConfig{}, "Log-mel spectrogram in dB, [n_mels x frames].");
  m.def("logmel_mean_from_file", &logmel_mean_from_file, py::arg("path"), py::arg("config") = DspConfig{});

  m.def("is_spam_rating",
        [](const std::vector<int>& s, double f) { return is_spam_rating(to_rating("", "", s), f); },
        py::arg("scores"), py::arg("majority_fraction") = kDefaultMajorityFraction);
  m.def(
      "build_action_vectors",
      [](const std::vector<std::tuple<std::string, std::string, std::vector<int>>>& rows, double fraction,
         bool global, const std::string& shortfall) {
        std::vector<ActionRating> ratings;
        for (const auto& [c, a, s] : rows) ratings.push_back(to_rating(c, a, s));
        const auto kept = reject_spammers(ratings, fraction, global ? RejectionScope::kGlobal : RejectionScope::kPerClip).kept;
        if (shortfall != "rescale" && shortfall != "exclude") throw UsageError("shortfall must be rescale or exclude");
        std::map<std::string, std::vector<double>> out;
        for (const auto& av : build_action_vectors(kept, shortfall == "rescale" ? ShortfallPolicy::kRescale : ShortfallPolicy::kExclude)) {
          out[av.clip_id] = std::vector<double>(av.values.begin(), av.values.end());
        }
        return out;
      },
      py::arg("ratings"), py::arg("majority_fraction") = kDefaultMajorityFraction, py::arg("global_rejection") = false,
      py::arg("shortfall") = "rescale",
      "ratings: [(clip_id, annotator_id, [20 scores])] -> {clip_id: graded AV}");
  m.def(
      "quantize",
      [](std::vector<double> v) {
        if (v.size() != kNumActions) throw DataError("an action vector has 20 values");
        ActionVector av;
        std::copy(v.begin(), v.end(), av.values.begin());
        const auto q = quantize_av(av);
        return std::vector<double>(q.values.begin(), q.values.end());
      },
      py::arg("graded"));
  m.def("fleiss_kappa", [](const std::vector<std::vector<int>>& t, int n) { return fleiss_kappa(t, n).kappa; },
        py::arg("table"), py::arg("n_raters"));
  m.def("dominant_actions", [](const std::vector<double>& row) { return dominant_actions(std::span<const double>(row)); },
        py::arg("row"));
  m.def(
      "kmeans",
      [](const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts) {
        const ClusterResult r = kmeans_restarts(points, k, seed, restarts);
        py::dict d;
        d["assignments"] = r.assignments;
        d["centroids"] = r.centroids;
        d["inertia"] = r.inertia;
        d["inertia_history"] = r.inertia_history;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("restarts") = 1);

  m.def(
      "train_svm",
      [](const Eigen::MatrixXd& x, const std::vector<int>& y, double c) {
        SvmConfig cfg;
        cfg.C = c;
        const LinearSvmModel model = train_linear_svm(x, y, cfg);
        return py::make_tuple(model.weights, model.biases, model.classes);
      },
      py::arg("x"), py::arg("y"), py::arg("C") = 35.0, "Returns (weights, biases, classes).");

  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest, const std::string& recipe, const std::string& classifier,
         std::optional<std::filesystem::path> avs, std::optional<std::filesystem::path> logmel,
         std::optional<std::filesystem::path> embeddings, std::size_t embedding_dim, int runs, std::uint64_t seed,
         std::optional<int> epochs, int jobs) {
        const FoldedDataset ds = load_manifest(manifest);
        FeatureSources src;
        if (avs) src.avs = index_by_clip(load_action_vectors(*avs));
        if (logmel) src.logmel = load_feature_cache(*logmel, &ds);
        if (embeddings) src.embeddings = load_embeddings(*embeddings, embedding_dim, &ds);
        ClassifierSpec spec;
        spec.kind = parse_classifier(classifier);
        if (epochs) spec.dnn.epochs = *epochs;
        const FeatureRecipe r = FeatureRecipe::parse(recipe);
        check_sources(r, src);
        RepeatedRunSummary s;
        {
          py::gil_scoped_release release;
          s = runs == 1 ? summarize({run_cv(ds, src, r, spec, seed, {jobs})})
                        : repeated_runs(ds, src, r, spec, seed, runs, jobs);
        }
        return summary_dict(s);
      },
      py::arg("manifest"), py::arg("recipe") = "av", py::arg("classifier") = "svm", py::arg("avs") = py::none(),
      py::arg("logmel") = py::none(), py::arg("embeddings") = py::none(), py::arg("embedding_dim") = 6144,
      py::arg("runs") = 1, py::arg("seed") = 0, py::arg("epochs") = py::none(), py::arg("jobs") = 1,
      "5-fold cross-validation of one recipe; returns mean, stddev and per-run results.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv = {"avsec"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::vector<const char*> ptrs;
        for (const auto& a : argv) ptrs.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(static_cast<int>(ptrs.size()), ptrs.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs an avsec subcommand in-process; returns (exit_code, stdout, stderr).");
}
