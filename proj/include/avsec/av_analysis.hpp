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

#ifndef AVSEC_AV_ANALYSIS_HPP_
#define AVSEC_AV_ANALYSIS_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avsec/annotation.hpp"
#include "avsec/dataset.hpp"

namespace avsec {

using AvMap = std::map<std::string, ActionVector, std::less<>>;
AvMap index_by_clip(std::span<const ActionVector> avs);

// Class-mean graded action vectors, one row per class in ascending target
// order.
struct ClassAvMatrix {
  std::vector<int> targets;
  std::vector<std::string> class_names;
  Eigen::MatrixXd values;  // [n_classes x 20]

  std::size_t row_of(int target) const;
};

ClassAvMatrix class_average_avs(const FoldedDataset& ds, const AvMap& avs);
void write_class_avs(const ClassAvMatrix& m, std::ostream& out);

// Indices of entries >= mean + population sd of the row. Constant rows give
// the empty set.
std::vector<std::size_t> dominant_actions(std::span<const double> row);
std::vector<std::size_t> dominant_actions(const Eigen::VectorXd& row);
std::string action_label(std::span<const std::size_t> actions);  // "rotating+vibrating"

struct ClusterResult {
  int k = 0;
  std::vector<int> assignments;   // per point
  Eigen::MatrixXd centroids;      // [k x dim]
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every assignment step
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
};

// Lloyd's algorithm with k-means++ seeding. Assignment ties go to the lowest
// centroid index. An empty cluster is re-seeded at the point farthest from
// its current centroid.
ClusterResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter = 300);

// Best (lowest inertia) of `restarts` runs seeded seed, seed+1, ...
ClusterResult kmeans_restarts(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                              int restarts, int max_iter = 300);

struct ClusterLabel {
  int cluster = 0;
  std::size_t size = 0;
  std::vector<std::size_t> actions;
  std::string label;
};

std::vector<ClusterLabel> label_clusters(const ClusterResult& result);

// clip_id,cluster,<20 action names>
void write_cluster_assignments(const ClusterResult& result, std::span<const ActionVector> avs,
                               std::ostream& out);

}  // namespace avsec

#endif  // AVSEC_AV_ANALYSIS_HPP_
