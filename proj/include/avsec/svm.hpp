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

#ifndef AVSEC_SVM_HPP_
#define AVSEC_SVM_HPP_

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace avsec {

enum class SvmLoss { kSquaredHinge, kHinge };

struct SvmConfig {
  double C = 35.0;
  SvmLoss loss = SvmLoss::kSquaredHinge;
  // Newton stops once ||grad|| <= tol * ||grad_0|| per class.
  double tol = 1e-4;
  int max_iter = 100;
};

// One-vs-rest linear SVM. Row k scores class `classes[k]`; the bias is
// trained as the weight of a constant-1 feature and is regularized.
struct LinearSvmModel {
  Eigen::MatrixXd weights;  // [n_classes x dim]
  Eigen::VectorXd biases;   // [n_classes]
  std::vector<int> classes;  // sorted ascending
  SvmConfig config;

  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
};

// Per-iteration primal objective of every binary problem, for monotonicity
// checks.
struct SvmTrace {
  std::vector<Eigen::VectorXd> objectives;
};

// Squared hinge: all classes are solved in lockstep by Newton-CG on the
// primal, 1/2 ||w||^2 + C sum max(0, 1 - y w.x)^2, with Armijo backtracking
// so every objective is non-increasing. Hinge: dual coordinate descent in a
// fixed sample order.
LinearSvmModel train_linear_svm(const Eigen::MatrixXd& x, std::span<const int> y,
                                const SvmConfig& cfg = {}, SvmTrace* trace = nullptr);

// Binary primal objective of column `k` (for tests).
double svm_objective(const LinearSvmModel& m, std::size_t k, const Eigen::MatrixXd& x,
                     std::span<const int> y);

// [n x n_classes] decision values w.x + b.
Eigen::MatrixXd decision_scores(const LinearSvmModel& m, const Eigen::MatrixXd& x);

}  // namespace avsec

#endif  // AVSEC_SVM_HPP_
