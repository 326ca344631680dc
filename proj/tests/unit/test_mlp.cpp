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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "avsec/error.hpp"
#include "avsec/mlp.hpp"
#include "avsec/model.hpp"
#include "avsec/rng.hpp"

using namespace avsec;

namespace {

using MatD = MlpParams<double>::Matrix;

MatD random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal01(rng);
  return m;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden = {16, 8};
  cfg.epochs = 200;
  cfg.lr = 0.05;
  cfg.batch_size = 8;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  Rng rng(3);
  const std::vector<int> sizes = {6, 5, 4, 3};
  MlpParams<double> p = init_mlp<double>(sizes, 17);
  const MatD x = random_matrix(6, 5, rng);
  const std::vector<int> cls = {0, 2, 1, 1, 2};
  const MatD t = one_hot<double>(cls, 3);
  const MlpGradients<double> g = mlp_backward(p, x, t);
  CHECK(g.loss == doctest::Approx(mlp_loss(p, x, t)));

  const double h = 1e-5;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); };
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
      const double orig = p.weights[l](i);
      p.weights[l](i) = orig + h;
      const double up = mlp_loss(p, x, t);
      p.weights[l](i) = orig - h;
      const double down = mlp_loss(p, x, t);
      p.weights[l](i) = orig;
      CAPTURE(l);
      CAPTURE(i);
      CHECK(rel((up - down) / (2 * h), g.weights[l](i)) < 1e-4);
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
      const double orig = p.biases[l](i);
      p.biases[l](i) = orig + h;
      const double up = mlp_loss(p, x, t);
      p.biases[l](i) = orig - h;
      const double down = mlp_loss(p, x, t);
      p.biases[l](i) = orig;
      CHECK(rel((up - down) / (2 * h), g.biases[l](i)) < 1e-4);
    }
  }
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
  Rng rng(4);
  const std::vector<int> sizes = {4, 6, 3};
  const MlpParams<double> p = init_mlp<double>(sizes, 2);
  const MatD x = random_matrix(4, 3, rng);
  const MatD t = one_hot<double>(std::vector<int>{0, 1, 2}, 3);
  MatD x2(4, 6), t2(3, 6);
  x2 << x, x;
  t2 << t, t;
  const auto a = mlp_backward(p, x, t);
  const auto b = mlp_backward(p, x2, t2);
  CHECK(a.loss == doctest::Approx(b.loss));
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    CHECK(a.weights[l].isApprox(b.weights[l], 1e-12));
    CHECK(a.biases[l].isApprox(b.biases[l], 1e-12));
  }
}

TEST_CASE("forward pass yields distributions") {
  Rng rng(5);
  const std::vector<int> sizes = {10, 800, 500, 200, 7};
  const MlpParams<double> p = init_mlp<double>(sizes, 1);
  const double bound = std::sqrt(6.0 / (10 + 800));
  CHECK(p.weights[0].cwiseAbs().maxCoeff() <= bound);
  CHECK(p.biases[0].isZero());
  const MatD probs = mlp_forward(p, MatD(random_matrix(10, 9, rng) * 100.0));
  CHECK(probs.allFinite());
  CHECK((probs.array() >= 0).all());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) CHECK(probs.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("training fits a small problem and is deterministic") {
  Rng rng(6);
  Eigen::MatrixXd x(60, 3);
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    const int c = i % 3;
    for (int d = 0; d < 3; ++d) x(i, d) = (d == c ? 2.0 : 0.0) + 0.2 * normal01(rng);
    y.push_back(c + 10);
  }
  std::vector<double> seen;
  const MlpModel m = train_mlp(x, y, small_config(42), [&](int, double loss) { seen.push_back(loss); });
  CHECK(m.classes == std::vector<int>{10, 11, 12});
  CHECK(seen == m.epoch_losses);
  CHECK(m.epoch_losses.back() < m.epoch_losses.front());
  const Prediction p = predict(m, x);
  int hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += p.labels[i] == y[i];
  CHECK(hit >= 59);

  const MlpModel again = train_mlp(x, y, small_config(42));
  CHECK(again.epoch_losses == m.epoch_losses);
  CHECK(again.params.weights[0] == m.params.weights[0]);
  const MlpModel other = train_mlp(x, y, small_config(43));
  CHECK(other.params.weights[0] != m.params.weights[0]);
}

TEST_CASE("mlp configuration and input errors") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.hidden == std::vector<int>{800, 500, 200});
  CHECK(c.lr == 0.008);
  CHECK(c.epochs == 100);
  CHECK(c.batch_size == 32);
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.init = "he";
  CHECK_THROWS_AS(c.validate(), UsageError);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
  x(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_mlp(x, std::vector<int>{0, 1, 0, 1}, small_config(1)), NumericError);
  CHECK_THROWS_AS(train_mlp(Eigen::MatrixXd::Zero(4, 2), std::vector<int>{1, 1, 1, 1}, small_config(1)), DataError);
}
