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

#ifndef AVSEC_MLP_HPP_
#define AVSEC_MLP_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace avsec {

struct TrainConfig {
  double lr = 0.008;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {800, 500, 200};
  std::string init = "glorot_uniform";

  void validate() const;
};

// Fully connected tanh network with a softmax output. Samples are columns.
template <typename Scalar>
struct MlpParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<int> layer_sizes;  // [dim, hidden..., n_classes]
  std::vector<Matrix> weights;   // weights[l]: [layer_sizes[l+1] x layer_sizes[l]]
  std::vector<Vector> biases;

  std::size_t num_layers() const { return weights.size(); }
};

template <typename Scalar>
struct MlpGradients {
  std::vector<typename MlpParams<Scalar>::Matrix> weights;
  std::vector<typename MlpParams<Scalar>::Vector> biases;
  Scalar loss = 0;  // mean cross-entropy of the batch
};

// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
template <typename Scalar>
MlpParams<Scalar> init_mlp(std::span<const int> layer_sizes, std::uint64_t seed);

// Output probabilities [n_classes x batch].
template <typename Scalar>
typename MlpParams<Scalar>::Matrix mlp_forward(const MlpParams<Scalar>& p,
                                               const typename MlpParams<Scalar>::Matrix& x);

// Analytic gradients of the mean cross-entropy against soft targets
// [n_classes x batch] (columns sum to 1).
template <typename Scalar>
MlpGradients<Scalar> mlp_backward(const MlpParams<Scalar>& p,
                                  const typename MlpParams<Scalar>::Matrix& x,
                                  const typename MlpParams<Scalar>::Matrix& targets);

// Mean cross-entropy only (used by finite-difference checks).
template <typename Scalar>
Scalar mlp_loss(const MlpParams<Scalar>& p, const typename MlpParams<Scalar>::Matrix& x,
                const typename MlpParams<Scalar>::Matrix& targets);

// One-hot targets for class indices in [0, n_classes).
template <typename Scalar>
typename MlpParams<Scalar>::Matrix one_hot(std::span<const int> class_index, int n_classes);

struct MlpModel {
  MlpParams<float> params;
  std::vector<int> classes;  // row k of the output is classes[k]
  TrainConfig config;
  std::vector<double> epoch_losses;

  std::size_t dim() const { return static_cast<std::size_t>(params.layer_sizes.front()); }
};

// Called after every epoch with (epoch index, mean training loss).
using EpochCallback = std::function<void(int, double)>;

// Minibatch SGD, reshuffled every epoch from cfg.seed. Rows of `x` are
// samples. Throws NumericError naming the epoch and batch on a NaN loss.
MlpModel train_mlp(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

// [n x n_classes] softmax probabilities.
Eigen::MatrixXd mlp_probabilities(const MlpModel& m, const Eigen::MatrixXd& x);

}  // namespace avsec

#endif  // AVSEC_MLP_HPP_
