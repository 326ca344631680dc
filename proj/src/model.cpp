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

#include "avsec/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "avsec/error.hpp"

namespace avsec {

using json = nlohmann::json;

std::string_view classifier_name(ClassifierKind k) {
  return k == ClassifierKind::kSvm ? "svm" : "dnn";
}

ClassifierKind parse_classifier(std::string_view name) {
  if (name == "svm") return ClassifierKind::kSvm;
  if (name == "dnn" || name == "mlp") return ClassifierKind::kDnn;
  throw UsageError("unknown classifier '" + std::string(name) + "' (svm|dnn)");
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k) {
      if (scores(i, k) > scores(i, best)) best = k;  // strict: lowest index wins ties
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

Prediction finish(Eigen::MatrixXd scores, const std::vector<int>& classes) {
  Prediction p;
  p.classes = classes;
  for (int idx : argmax_rows(scores)) p.labels.push_back(classes[static_cast<std::size_t>(idx)]);
  p.scores = std::move(scores);
  return p;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename Derived>
void put_matrix(std::ofstream& out, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, static_cast<double>(m(r, c)));
  }
}

class Cursor {
 public:
  Cursor(const std::vector<std::uint8_t>& b, std::string where) : b_(b), where_(std::move(where)) {}
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > b_.size()) throw ParseError(where_ + ": truncated model file");
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(f64());
    }
    return m;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

Prediction predict(const LinearSvmModel& m, const Eigen::MatrixXd& x) {
  return finish(decision_scores(m, x), m.classes);
}

Prediction predict(const MlpModel& m, const Eigen::MatrixXd& x) {
  return finish(mlp_probabilities(m, x), m.classes);
}

Prediction TrainedModel::predict(const Eigen::MatrixXd& raw) const {
  const Eigen::MatrixXd x = standardizer ? standardizer->apply_rows(raw) : raw;
  return std::visit([&](const auto& c) { return avsec::predict(c, x); }, classifier);
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  json echo;
  echo["format_version"] = kModelFormatVersion;
  echo["classifier"] = classifier_name(model.classifier_kind());
  echo["kind"] = model.kind.tag();
  echo["recipe"] = model.recipe;
  if (const auto* svm = std::get_if<LinearSvmModel>(&model.classifier)) {
    echo["classes"] = svm->classes;
    echo["dim"] = svm->dim();
    echo["svm"] = {{"C", svm->config.C},
                   {"loss", svm->config.loss == SvmLoss::kSquaredHinge ? "squared_hinge" : "hinge"},
                   {"tol", svm->config.tol},
                   {"max_iter", svm->config.max_iter}};
  } else {
    const auto& mlp = std::get<MlpModel>(model.classifier);
    echo["classes"] = mlp.classes;
    echo["dim"] = mlp.dim();
    echo["dnn"] = {{"lr", mlp.config.lr},
                   {"epochs", mlp.config.epochs},
                   {"batch_size", mlp.config.batch_size},
                   {"seed", mlp.config.seed},
                   {"hidden", mlp.config.hidden},
                   {"init", mlp.config.init},
                   {"layer_sizes", mlp.params.layer_sizes},
                   {"epoch_losses", mlp.epoch_losses}};
  }
  if (model.standardizer) {
    echo["standardizer"] = {{"dim", model.standardizer->dim()},
                            {"folds", model.standardizer->fitted_folds()}};
  }
  const std::string text = echo.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model " + path.string());
  out.write("AVSECM", 6);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (const auto* svm = std::get_if<LinearSvmModel>(&model.classifier)) {
    put_matrix(out, svm->weights);
    put_matrix(out, svm->biases);
  } else {
    const auto& p = std::get<MlpModel>(model.classifier).params;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      put_matrix(out, p.weights[l]);
      put_matrix(out, p.biases[l]);
    }
  }
  if (model.standardizer) {
    put_matrix(out, model.standardizer->means());
    put_matrix(out, model.standardizer->scales());
  }
  if (!out) throw DataError("write failed for " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  Cursor cur(bytes, path.string());
  if (std::memcmp(cur.take(6), "AVSECM", 6) != 0) {
    throw ParseError(path.string() + ": not a model file");
  }
  const std::uint32_t version = cur.u32();
  if (version != kModelFormatVersion) {
    throw ParseError(path.string() + ": unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t len = cur.u32();
  const auto* text = cur.take(len);
  json echo;
  try {
    echo = json::parse(text, text + len);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad model header: " + e.what());
  }

  TrainedModel model;
  model.kind = FeatureKind::parse(echo.at("kind").get<std::string>());
  model.recipe = echo.value("recipe", "");
  const auto classes = echo.at("classes").get<std::vector<int>>();
  const auto dim = echo.at("dim").get<Eigen::Index>();
  const auto k = static_cast<Eigen::Index>(classes.size());
  if (parse_classifier(echo.at("classifier").get<std::string>()) == ClassifierKind::kSvm) {
    LinearSvmModel svm;
    svm.classes = classes;
    const auto& cfg = echo.at("svm");
    svm.config.C = cfg.at("C");
    svm.config.loss = cfg.at("loss") == "hinge" ? SvmLoss::kHinge : SvmLoss::kSquaredHinge;
    svm.config.tol = cfg.at("tol");
    svm.config.max_iter = cfg.at("max_iter");
    svm.weights = cur.matrix<double>(k, dim);
    svm.biases = cur.matrix<double>(k, 1);
    model.classifier = std::move(svm);
  } else {
    MlpModel mlp;
    mlp.classes = classes;
    const auto& cfg = echo.at("dnn");
    mlp.config.lr = cfg.at("lr");
    mlp.config.epochs = cfg.at("epochs");
    mlp.config.batch_size = cfg.at("batch_size");
    mlp.config.seed = cfg.at("seed");
    mlp.config.hidden = cfg.at("hidden").get<std::vector<int>>();
    mlp.config.init = cfg.at("init");
    mlp.epoch_losses = cfg.value("epoch_losses", std::vector<double>{});
    mlp.params.layer_sizes = cfg.at("layer_sizes").get<std::vector<int>>();
    for (std::size_t l = 0; l + 1 < mlp.params.layer_sizes.size(); ++l) {
      const auto in_dim = mlp.params.layer_sizes[l];
      const auto out_dim = mlp.params.layer_sizes[l + 1];
      mlp.params.weights.push_back(cur.matrix<float>(out_dim, in_dim));
      mlp.params.biases.push_back(cur.matrix<float>(out_dim, 1));
    }
    model.classifier = std::move(mlp);
  }
  if (echo.contains("standardizer")) {
    const auto& s = echo.at("standardizer");
    const auto sdim = s.at("dim").get<Eigen::Index>();
    Eigen::VectorXd means = cur.matrix<double>(sdim, 1);
    Eigen::VectorXd scales = cur.matrix<double>(sdim, 1);
    model.standardizer = Standardizer::from_parameters(std::move(means), std::move(scales),
                                                       s.at("folds").get<std::set<int>>());
  }
  if (!cur.done()) throw ParseError(path.string() + ": trailing bytes in model file");
  return model;
}

}  // namespace avsec
