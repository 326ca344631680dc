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

#ifndef AVSEC_MODEL_HPP_
#define AVSEC_MODEL_HPP_

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "avsec/features.hpp"
#include "avsec/mlp.hpp"
#include "avsec/svm.hpp"

namespace avsec {

enum class ClassifierKind { kSvm, kDnn };
std::string_view classifier_name(ClassifierKind k);
ClassifierKind parse_classifier(std::string_view name);

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::kSvm;
  SvmConfig svm;
  TrainConfig dnn;
};

struct Prediction {
  std::vector<int> labels;  // original class ids
  Eigen::MatrixXd scores;   // [n x n_classes], columns ordered by `classes`
  std::vector<int> classes;
};

// Argmax per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& scores);

Prediction predict(const LinearSvmModel& m, const Eigen::MatrixXd& x);
Prediction predict(const MlpModel& m, const Eigen::MatrixXd& x);

// A classifier together with the standardizer fitted on its training folds
// and the kind of features it consumes.
struct TrainedModel {
  std::variant<LinearSvmModel, MlpModel> classifier;
  std::optional<Standardizer> standardizer;
  FeatureKind kind;
  std::string recipe;  // recipe string the features came from

  ClassifierKind classifier_kind() const {
    return std::holds_alternative<LinearSvmModel>(classifier) ? ClassifierKind::kSvm
                                                              : ClassifierKind::kDnn;
  }
  // Standardizes (when fitted) and predicts raw fused features.
  Prediction predict(const Eigen::MatrixXd& raw) const;
};

// Versioned container: "AVSECM" u32 version u32 json_len, a JSON config
// echo (kind, recipe, hyperparameters, seed, layer sizes, classes), then the
// parameters as little-endian f64 arrays in a fixed order.
inline constexpr std::uint32_t kModelFormatVersion = 1;
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace avsec

#endif  // AVSEC_MODEL_HPP_
