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

#include "avsec/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "avsec/error.hpp"
#include "avsec/rng.hpp"

namespace avsec {
namespace {

template <typename Scalar>
using Mat = typename MlpParams<Scalar>::Matrix;

// Column-wise log-softmax.
template <typename Scalar>
Mat<Scalar> log_softmax(const Mat<Scalar>& z) {
  Mat<Scalar> out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Scalar m = z.col(j).maxCoeff();
    const Scalar lse = m + std::log((z.col(j).array() - m).exp().sum());
    out.col(j) = z.col(j).array() - lse;
  }
  return out;
}

template <typename Scalar>
struct ForwardPass {
  std::vector<Mat<Scalar>> activations;  // input, hidden tanh outputs
  Mat<Scalar> logits;
};

template <typename Scalar>
ForwardPass<Scalar> run_forward(const MlpParams<Scalar>& p, const Mat<Scalar>& x) {
  if (x.rows() != p.layer_sizes.front()) {
    throw DataError("mlp: input dimension " + std::to_string(x.rows()) + ", model expects " +
                    std::to_string(p.layer_sizes.front()));
  }
  ForwardPass<Scalar> f;
  f.activations.push_back(x);
  const std::size_t last = p.num_layers() - 1;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Mat<Scalar> z = (p.weights[l] * f.activations.back()).colwise() + p.biases[l];
    if (l == last) {
      f.logits = std::move(z);
    } else {
      f.activations.push_back(z.array().tanh().matrix());
    }
  }
  return f;
}

template <typename Scalar>
Scalar cross_entropy(const Mat<Scalar>& log_probs, const Mat<Scalar>& targets) {
  return -(targets.array() * log_probs.array()).sum() / static_cast<Scalar>(targets.cols());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw UsageError("hidden layer sizes must be >= 1");
  }
  if (init != "glorot_uniform") throw UsageError("unknown init scheme '" + init + "'");
}

template <typename Scalar>
MlpParams<Scalar> init_mlp(std::span<const int> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw UsageError("mlp needs at least input and output sizes");
  MlpParams<Scalar> p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Mat<Scalar> w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = static_cast<Scalar>(uniform(rng, -bound, bound));
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(MlpParams<Scalar>::Vector::Zero(fan_out));
  }
  return p;
}

template <typename Scalar>
Mat<Scalar> mlp_forward(const MlpParams<Scalar>& p, const Mat<Scalar>& x) {
  return log_softmax<Scalar>(run_forward(p, x).logits).array().exp().matrix();
}

template <typename Scalar>
Scalar mlp_loss(const MlpParams<Scalar>& p, const Mat<Scalar>& x, const Mat<Scalar>& targets) {
  return cross_entropy<Scalar>(log_softmax<Scalar>(run_forward(p, x).logits), targets);
}

template <typename Scalar>
MlpGradients<Scalar> mlp_backward(const MlpParams<Scalar>& p, const Mat<Scalar>& x,
                                  const Mat<Scalar>& targets) {
  const ForwardPass<Scalar> f = run_forward(p, x);
  if (targets.rows() != f.logits.rows() || targets.cols() != x.cols()) {
    throw DataError("mlp: target matrix shape does not match the batch");
  }
  const Mat<Scalar> log_probs = log_softmax<Scalar>(f.logits);
  const auto batch = static_cast<Scalar>(x.cols());

  MlpGradients<Scalar> g;
  g.loss = cross_entropy<Scalar>(log_probs, targets);
  g.weights.resize(p.num_layers());
  g.biases.resize(p.num_layers());

  Mat<Scalar> delta = (log_probs.array().exp().matrix() - targets) / batch;
  for (std::size_t l = p.num_layers(); l-- > 0;) {
    g.weights[l] = delta * f.activations[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      const auto& h = f.activations[l];
      delta = ((p.weights[l].transpose() * delta).array() * (1 - h.array().square())).matrix();
    }
  }
  return g;
}

template <typename Scalar>
Mat<Scalar> one_hot(std::span<const int> class_index, int n_classes) {
  Mat<Scalar> t = Mat<Scalar>::Zero(n_classes, static_cast<Eigen::Index>(class_index.size()));
  for (std::size_t i = 0; i < class_index.size(); ++i) {
    t(class_index[i], static_cast<Eigen::Index>(i)) = 1;
  }
  return t;
}

template MlpParams<float> init_mlp<float>(std::span<const int>, std::uint64_t);
template MlpParams<double> init_mlp<double>(std::span<const int>, std::uint64_t);
template Mat<float> mlp_forward<float>(const MlpParams<float>&, const Mat<float>&);
template Mat<double> mlp_forward<double>(const MlpParams<double>&, const Mat<double>&);
template MlpGradients<float> mlp_backward<float>(const MlpParams<float>&, const Mat<float>&,
                                                 const Mat<float>&);
template MlpGradients<double> mlp_backward<double>(const MlpParams<double>&, const Mat<double>&,
                                                   const Mat<double>&);
template float mlp_loss<float>(const MlpParams<float>&, const Mat<float>&, const Mat<float>&);
template double mlp_loss<double>(const MlpParams<double>&, const Mat<double>&,
                                 const Mat<double>&);
template Mat<float> one_hot<float>(std::span<const int>, int);
template Mat<double> one_hot<double>(std::span<const int>, int);

MlpModel train_mlp(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  cfg.validate();
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw DataError("mlp: " + std::to_string(x.rows()) + " samples but " +
                    std::to_string(y.size()) + " labels");
  }
  if (x.rows() < 2) throw DataError("mlp: need at least 2 samples");
  if (!x.allFinite()) throw NumericError("mlp: non-finite feature values");
  const std::set<int> present(y.begin(), y.end());
  if (present.size() < 2) throw DataError("mlp: need at least 2 classes, got 1");

  MlpModel model;
  model.config = cfg;
  model.classes.assign(present.begin(), present.end());
  std::vector<int> index(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    index[i] = static_cast<int>(std::lower_bound(model.classes.begin(), model.classes.end(), y[i]) -
                                model.classes.begin());
  }
  const int n_classes = static_cast<int>(model.classes.size());

  std::vector<int> sizes = {static_cast<int>(x.cols())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(n_classes);
  // Separate streams for initialization and shuffling.
  model.params = init_mlp<float>(sizes, cfg.seed);
  Rng shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  const Mat<float> xf = x.cast<float>().transpose();
  const Mat<float> targets = one_hot<float>(index, n_classes);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto lr = static_cast<float>(cfg.lr);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double loss_sum = 0.0;
    int batch_no = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t len = std::min(n - start, static_cast<std::size_t>(cfg.batch_size));
      Mat<float> xb(xf.rows(), static_cast<Eigen::Index>(len));
      Mat<float> tb(n_classes, static_cast<Eigen::Index>(len));
      for (std::size_t i = 0; i < len; ++i) {
        xb.col(static_cast<Eigen::Index>(i)) = xf.col(static_cast<Eigen::Index>(order[start + i]));
        tb.col(static_cast<Eigen::Index>(i)) = targets.col(static_cast<Eigen::Index>(order[start + i]));
      }
      const MlpGradients<float> g = mlp_backward<float>(model.params, xb, tb);
      if (!std::isfinite(g.loss)) {
        throw NumericError("mlp: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_no));
      }
      for (std::size_t l = 0; l < model.params.num_layers(); ++l) {
        model.params.weights[l] -= lr * g.weights[l];
        model.params.biases[l] -= lr * g.biases[l];
      }
      loss_sum += static_cast<double>(g.loss) * static_cast<double>(len);
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    model.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return model;
}

Eigen::MatrixXd mlp_probabilities(const MlpModel& m, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != m.dim()) {
    throw DataError("mlp: input dimension " + std::to_string(x.cols()) + ", model expects " +
                    std::to_string(m.dim()));
  }
  const Mat<float> xf = x.cast<float>().transpose();
  return mlp_forward<float>(m.params, xf).cast<double>().transpose();
}

}  // namespace avsec
