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

#include "avsec/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "avsec/error.hpp"

namespace avsec {
namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktrack = 40;
constexpr double kCgRelTol = 0.1;
constexpr int kHingeMaxPasses = 1000;
constexpr double kHingeEps = 1e-3;

Eigen::MatrixXd augment(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd xa(x.rows(), x.cols() + 1);
  xa.leftCols(x.cols()) = x;
  xa.col(x.cols()).setOnes();
  return xa;
}

// Objective of every column given current margins Z = Xa W.
Eigen::VectorXd sq_hinge_objectives(const Eigen::MatrixXd& w, const Eigen::MatrixXd& z,
                                    const Eigen::MatrixXd& y, double c) {
  const Eigen::ArrayXXd slack = (1.0 - (y.array() * z.array())).max(0.0);
  return 0.5 * w.colwise().squaredNorm().transpose().array() +
         c * slack.square().colwise().sum().transpose();
}

void train_squared_hinge(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& y,
                         const SvmConfig& cfg, Eigen::MatrixXd& w, SvmTrace* trace) {
  const auto k_classes = y.cols();
  const double c = cfg.C;
  std::vector<bool> done(static_cast<std::size_t>(k_classes), false);
  Eigen::VectorXd g0(k_classes);

  for (int iter = 0; iter <= cfg.max_iter; ++iter) {
    const Eigen::MatrixXd z = xa * w;
    const Eigen::VectorXd f = sq_hinge_objectives(w, z, y, c);
    if (trace) trace->objectives.push_back(f);
    if (iter == cfg.max_iter) break;

    const Eigen::MatrixXd mask = ((y.array() * z.array()) < 1.0).cast<double>();
    const Eigen::MatrixXd g = w + 2.0 * c * (xa.transpose() * (mask.array() * (z - y).array()).matrix());
    const Eigen::VectorXd gnorm = g.colwise().norm().transpose();
    if (iter == 0) g0 = gnorm;
    bool any = false;
    for (Eigen::Index k = 0; k < k_classes; ++k) {
      auto ku = static_cast<std::size_t>(k);
      if (!done[ku] && gnorm[k] <= cfg.tol * g0[k]) done[ku] = true;
      any = any || !done[ku];
    }
    if (!any) break;

    // Conjugate gradient on the generalized Hessian I + 2C Xa_I^T Xa_I.
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(w.rows(), k_classes);
    Eigen::MatrixXd r = -g;
    Eigen::MatrixXd p = r;
    Eigen::VectorXd rr = r.colwise().squaredNorm().transpose();
    std::vector<bool> cg_active(done.size());
    for (std::size_t k = 0; k < done.size(); ++k) cg_active[k] = !done[k];
    for (Eigen::Index k = 0; k < k_classes; ++k) {
      if (!cg_active[static_cast<std::size_t>(k)]) p.col(k).setZero();
    }
    const int max_cg = static_cast<int>(std::min<Eigen::Index>(w.rows(), 500));
    for (int it = 0; it < max_cg; ++it) {
      if (std::none_of(cg_active.begin(), cg_active.end(), [](bool b) { return b; })) break;
      const Eigen::MatrixXd ap =
          p + 2.0 * c * (xa.transpose() * (mask.array() * (xa * p).array()).matrix());
      for (Eigen::Index k = 0; k < k_classes; ++k) {
        auto ku = static_cast<std::size_t>(k);
        if (!cg_active[ku]) continue;
        const double alpha = rr[k] / p.col(k).dot(ap.col(k));
        d.col(k) += alpha * p.col(k);
        r.col(k) -= alpha * ap.col(k);
        const double rr_new = r.col(k).squaredNorm();
        if (std::sqrt(rr_new) <= kCgRelTol * gnorm[k]) {
          cg_active[ku] = false;
          p.col(k).setZero();
        } else {
          p.col(k) = r.col(k) + (rr_new / rr[k]) * p.col(k);
        }
        rr[k] = rr_new;
      }
    }

    // Backtracking line search per class.
    const Eigen::MatrixXd zd = xa * d;
    for (Eigen::Index k = 0; k < k_classes; ++k) {
      auto ku = static_cast<std::size_t>(k);
      if (done[ku]) continue;
      const double slope = g.col(k).dot(d.col(k));
      double t = 1.0;
      bool accepted = false;
      for (int b = 0; b < kMaxBacktrack; ++b, t *= 0.5) {
        const Eigen::ArrayXd zt = z.col(k).array() + t * zd.col(k).array();
        const double reg = 0.5 * (w.col(k) + t * d.col(k)).squaredNorm();
        const double loss = (1.0 - y.col(k).array() * zt).max(0.0).square().sum();
        if (reg + c * loss <= f[k] + kArmijo * t * slope) {
          accepted = true;
          break;
        }
      }
      if (accepted) {
        w.col(k) += t * d.col(k);
      } else {
        done[ku] = true;  // no further descent possible at double precision
      }
    }
  }
}

void train_hinge(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& y, const SvmConfig& cfg,
                 Eigen::MatrixXd& w, SvmTrace* trace) {
  const auto n = xa.rows();
  const Eigen::VectorXd qii = xa.rowwise().squaredNorm();
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd wk = Eigen::VectorXd::Zero(xa.cols());
    for (int pass = 0; pass < kHingeMaxPasses; ++pass) {
      double pg_max = -std::numeric_limits<double>::infinity();
      double pg_min = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double yi = y(i, k);
        const double grad = yi * xa.row(i).dot(wk) - 1.0;
        double pg = grad;
        if (alpha[i] == 0.0) pg = std::min(grad, 0.0);
        else if (alpha[i] == cfg.C) pg = std::max(grad, 0.0);
        pg_max = std::max(pg_max, pg);
        pg_min = std::min(pg_min, pg);
        if (std::abs(pg) > 1e-12 && qii[i] > 0.0) {
          const double old = alpha[i];
          alpha[i] = std::clamp(old - grad / qii[i], 0.0, cfg.C);
          wk += (alpha[i] - old) * yi * xa.row(i).transpose();
        }
      }
      if (pg_max - pg_min <= kHingeEps) break;
    }
    w.col(k) = wk;
  }
  if (trace) {
    const Eigen::MatrixXd z = xa * w;
    const Eigen::ArrayXXd slack = (1.0 - (y.array() * z.array())).max(0.0);
    trace->objectives.push_back(0.5 * w.colwise().squaredNorm().transpose().array() +
                                cfg.C * slack.colwise().sum().transpose());
  }
}

}  // namespace

LinearSvmModel train_linear_svm(const Eigen::MatrixXd& x, std::span<const int> y,
                                const SvmConfig& cfg, SvmTrace* trace) {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw DataError("svm: " + std::to_string(x.rows()) + " samples but " +
                    std::to_string(y.size()) + " labels");
  }
  if (x.rows() < 2) throw DataError("svm: need at least 2 samples");
  if (!x.allFinite()) throw NumericError("svm: non-finite feature values");
  if (!(cfg.C > 0.0)) throw UsageError("svm: C must be positive");
  const std::set<int> present(y.begin(), y.end());
  if (present.size() < 2) throw DataError("svm: need at least 2 classes, got 1");

  LinearSvmModel model;
  model.config = cfg;
  model.classes.assign(present.begin(), present.end());
  const auto k_classes = static_cast<Eigen::Index>(model.classes.size());

  Eigen::MatrixXd yy(x.rows(), k_classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < k_classes; ++k) {
      yy(i, k) = y[static_cast<std::size_t>(i)] == model.classes[static_cast<std::size_t>(k)] ? 1.0 : -1.0;
    }
  }
  const Eigen::MatrixXd xa = augment(x);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(xa.cols(), k_classes);
  if (cfg.loss == SvmLoss::kSquaredHinge) {
    train_squared_hinge(xa, yy, cfg, w, trace);
  } else {
    train_hinge(xa, yy, cfg, w, trace);
  }
  if (!w.allFinite()) throw NumericError("svm: solver produced non-finite weights");

  model.weights = w.topRows(x.cols()).transpose();
  model.biases = w.row(x.cols()).transpose();
  return model;
}

double svm_objective(const LinearSvmModel& m, std::size_t k, const Eigen::MatrixXd& x,
                     std::span<const int> y) {
  const auto kk = static_cast<Eigen::Index>(k);
  const Eigen::VectorXd z = x * m.weights.row(kk).transpose() +
                            Eigen::VectorXd::Constant(x.rows(), m.biases[kk]);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)] == m.classes[k] ? 1.0 : -1.0;
    const double slack = std::max(0.0, 1.0 - yi * z[i]);
    loss += m.config.loss == SvmLoss::kSquaredHinge ? slack * slack : slack;
  }
  return 0.5 * (m.weights.row(kk).squaredNorm() + m.biases[kk] * m.biases[kk]) + m.config.C * loss;
}

Eigen::MatrixXd decision_scores(const LinearSvmModel& m, const Eigen::MatrixXd& x) {
  if (x.cols() != m.weights.cols()) {
    throw DataError("svm: input dimension " + std::to_string(x.cols()) + ", model expects " +
                    std::to_string(m.weights.cols()));
  }
  return (x * m.weights.transpose()).rowwise() + m.biases.transpose();
}

}  // namespace avsec
