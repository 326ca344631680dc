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

#include "avsec/av_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "avsec/csv.hpp"
#include "avsec/error.hpp"
#include "avsec/rng.hpp"

namespace avsec {

AvMap index_by_clip(std::span<const ActionVector> avs) {
  AvMap out;
  for (const ActionVector& av : avs) {
    if (!out.emplace(av.clip_id, av).second) {
      throw DataError("duplicate action vector for clip '" + av.clip_id + "'");
    }
  }
  return out;
}

std::size_t ClassAvMatrix::row_of(int target) const {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == target) return i;
  }
  throw DataError("class " + std::to_string(target) + " not in the class AV matrix");
}

ClassAvMatrix class_average_avs(const FoldedDataset& ds, const AvMap& avs) {
  ClassAvMatrix m;
  m.targets = ds.classes();
  for (int t : m.targets) m.class_names.push_back(ds.class_names().at(t));
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.targets.size()), kNumActions);
  std::vector<std::size_t> counts(m.targets.size(), 0);
  std::map<int, std::size_t> row;
  for (std::size_t i = 0; i < m.targets.size(); ++i) row[m.targets[i]] = i;

  for (const ClipMeta& c : ds.clips()) {
    auto it = avs.find(c.clip_id);
    if (it == avs.end()) throw DataError("clip '" + c.clip_id + "' has no action vector");
    if (it->second.scale != AvScale::kGraded) {
      throw DataError("class averages need graded action vectors");
    }
    const std::size_t r = row.at(c.target);
    for (std::size_t a = 0; a < kNumActions; ++a) {
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) += it->second.values[a];
    }
    ++counts[r];
  }
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r] == 0) {
      throw DataError("class " + std::to_string(m.targets[r]) + " has zero clips");
    }
    m.values.row(static_cast<Eigen::Index>(r)) /= static_cast<double>(counts[r]);
  }
  return m;
}

void write_class_avs(const ClassAvMatrix& m, std::ostream& out) {
  csv::Row header = {"target", "class_name"};
  for (auto name : ActionTaxonomy::standard().actions()) header.emplace_back(name);
  header.emplace_back("dominant");
  out << csv::join(header) << '\n';
  for (std::size_t r = 0; r < m.targets.size(); ++r) {
    csv::Row row = {std::to_string(m.targets[r]), m.class_names[r]};
    const Eigen::VectorXd v = m.values.row(static_cast<Eigen::Index>(r)).transpose();
    for (Eigen::Index a = 0; a < v.size(); ++a) row.push_back(csv::format_double(v[a]));
    row.push_back(action_label(dominant_actions(v)));
    out << csv::join(row) << '\n';
  }
}

std::vector<std::size_t> dominant_actions(std::span<const double> row) {
  if (row.empty()) return {};
  const double n = static_cast<double>(row.size());
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  std::vector<std::size_t> out;
  if (!(sd > 0.0)) return out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] >= mean + sd) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> dominant_actions(const Eigen::VectorXd& row) {
  return dominant_actions(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
}

std::string action_label(std::span<const std::size_t> actions) {
  std::string out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out += "+";
    out += ActionTaxonomy::standard().name(actions[i]);
  }
  return out;
}

namespace {

double sq_dist(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest centroid per point; returns the total squared distance.
double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, std::vector<int>& labels,
              std::vector<double>& dist) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = sq_dist(x, i, c, 0);
    for (Eigen::Index j = 1; j < c.rows(); ++j) {
      const double d = sq_dist(x, i, c, j);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist[static_cast<std::size_t>(i)] = best_d;
    total += best_d;
  }
  return total;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const auto n = x.rows();
  Eigen::MatrixXd c(k, x.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  auto first = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
  c.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = true;
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(x, i, c, 0);

  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double d : d2) total += d;
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc > target && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // rounding at the tail
        for (Eigen::Index i = n; i-- > 0;) {
          if (d2[static_cast<std::size_t>(i)] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      for (Eigen::Index i = 0; i < n && pick < 0; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) pick = i;
      }
    }
    c.row(j) = x.row(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, c, j));
    }
  }
  return c;
}

}  // namespace

ClusterResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter) {
  const auto n = points.rows();
  if (k < 1) throw UsageError("k-means: k must be >= 1");
  if (k > n) throw UsageError("k-means: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
  if (max_iter < 1) throw UsageError("k-means: max_iter must be >= 1");
  if (!points.allFinite()) throw NumericError("k-means: non-finite input");

  Rng rng(seed);
  ClusterResult r;
  r.k = k;
  r.seed = seed;
  r.centroids = plus_plus_seeds(points, k, rng);
  r.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (int iter = 0; iter < max_iter; ++iter) {
    r.inertia = assign(points, r.centroids, labels, dist);
    r.inertia_history.push_back(r.inertia);
    r.iterations = iter + 1;
    if (labels == r.assignments) {
      r.converged = true;
      break;
    }
    r.assignments = labels;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        r.centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      std::size_t far = 0;
      for (std::size_t i = 1; i < dist.size(); ++i) {
        if (dist[i] > dist[far]) far = i;
      }
      r.centroids.row(j) = points.row(static_cast<Eigen::Index>(far));
      dist[far] = 0.0;
    }
  }
  return r;
}

ClusterResult kmeans_restarts(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                              int restarts, int max_iter) {
  if (restarts < 1) throw UsageError("k-means: restarts must be >= 1");
  ClusterResult best = kmeans(points, k, seed, max_iter);
  for (int i = 1; i < restarts; ++i) {
    ClusterResult r = kmeans(points, k, seed + static_cast<std::uint64_t>(i), max_iter);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

std::vector<ClusterLabel> label_clusters(const ClusterResult& result) {
  std::vector<ClusterLabel> out;
  for (int j = 0; j < result.k; ++j) {
    ClusterLabel l;
    l.cluster = j;
    l.size = static_cast<std::size_t>(
        std::count(result.assignments.begin(), result.assignments.end(), j));
    l.actions = dominant_actions(Eigen::VectorXd(result.centroids.row(j).transpose()));
    l.label = action_label(l.actions);
    out.push_back(std::move(l));
  }
  return out;
}

void write_cluster_assignments(const ClusterResult& result, std::span<const ActionVector> avs,
                               std::ostream& out) {
  if (avs.size() != result.assignments.size()) {
    throw DataError("cluster assignments do not cover the action vectors");
  }
  csv::Row header = {"clip_id", "cluster"};
  for (auto name : ActionTaxonomy::standard().actions()) header.emplace_back(name);
  out << csv::join(header) << '\n';
  for (std::size_t i = 0; i < avs.size(); ++i) {
    csv::Row row = {avs[i].clip_id, std::to_string(result.assignments[i])};
    for (double v : avs[i].values) row.push_back(csv::format_double(v));
    out << csv::join(row) << '\n';
  }
}

}  // namespace avsec
