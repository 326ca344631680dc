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

#ifndef AVSEC_EVALUATION_HPP_
#define AVSEC_EVALUATION_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avsec/av_analysis.hpp"
#include "avsec/dataset.hpp"
#include "avsec/features.hpp"
#include "avsec/model.hpp"

namespace avsec {

// Feature blocks a recipe can draw on. `av` is graded; the binary variant is
// derived on demand.
enum class FeatureSource { kActionVector, kBinaryActionVector, kLogMel, kEmbedding };
std::string_view source_name(FeatureSource s);

struct FeatureRecipe {
  struct Part {
    FeatureSource source;
    PartRecipe norm;
  };
  std::vector<Part> parts;

  // Accepts "av+ae", "avq+ae", "logmel", "av:l2,std+ae:std", ... Parts
  // without an explicit normalization get the default policy: AV (graded or
  // binary) fused with AE is standardized only; everything else is L2
  // normalized then standardized.
  static FeatureRecipe parse(std::string_view text);
  // Round-trippable form with explicit normalization, e.g. "av:std+ae:std".
  std::string to_string() const;
  // Source names only, e.g. "av+ae".
  std::string short_name() const;
  bool uses(FeatureSource s) const;
};

struct FeatureSources {
  AvMap avs;  // graded
  FeatureMap logmel;
  FeatureMap embeddings;
};

struct DesignMatrix {
  Eigen::MatrixXd x;  // rows follow `clip_ids`
  std::vector<std::string> clip_ids;
  std::vector<int> labels;
  std::vector<int> folds;
  FeatureKind kind;
  std::vector<bool> standardize_mask;
};

// Fuses the recipe's parts for every clip of the dataset, in manifest order.
// Throws DataError naming the first clip that lacks a required block.
DesignMatrix build_design_matrix(const FoldedDataset& ds, const FeatureSources& src,
                                 const FeatureRecipe& recipe);

// Throws DataError if the recipe references a block with no data at all.
void check_sources(const FeatureRecipe& recipe, const FeatureSources& src);

struct CvSplit {
  int test_fold = 0;
  std::vector<std::size_t> train;  // row indices into the design matrix
  std::vector<std::size_t> test;
};

// The five folds, each the test set once.
std::vector<CvSplit> fold_splits(const DesignMatrix& dm);

struct CvResult {
  std::vector<double> per_fold_accuracy;
  double overall_accuracy = 0.0;
  Eigen::MatrixXi confusion;  // [label_space x label_space], rows = truth
  std::size_t n_test = 0;
  std::uint64_t run_seed = 0;
  std::string recipe;
  ClassifierSpec classifier;
};

struct CvOptions {
  int jobs = 1;  // parallel folds
};

// Trains on each split's training rows (standardizer fitted there only,
// with the leakage guard applied to the test rows) and accumulates the
// confusion matrix over all test predictions.
CvResult run_cv_splits(const DesignMatrix& dm, const std::vector<CvSplit>& splits,
                       int label_space, const ClassifierSpec& spec, std::uint64_t seed,
                       const CvOptions& opts = {});

CvResult run_cv(const FoldedDataset& ds, const FeatureSources& src, const FeatureRecipe& recipe,
                const ClassifierSpec& spec, std::uint64_t seed, const CvOptions& opts = {});

// Trains one model on the given folds (used by the `train` command).
TrainedModel train_on_folds(const DesignMatrix& dm, const std::set<int>& folds,
                            const ClassifierSpec& spec, std::uint64_t seed,
                            const std::string& recipe);

struct RepeatedRunSummary {
  int n_runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<CvResult> runs;
};

// Runs seeds base_seed, base_seed+1, ...; failures are rethrown with the
// run index. `jobs` runs execute concurrently.
RepeatedRunSummary repeated_runs(const FoldedDataset& ds, const FeatureSources& src,
                                 const FeatureRecipe& recipe, const ClassifierSpec& spec,
                                 std::uint64_t base_seed, int n_runs, int jobs = 1);

RepeatedRunSummary summarize(std::vector<CvResult> runs);

struct PairedResult {
  std::string label_a;
  std::string label_b;
  RepeatedRunSummary a;
  RepeatedRunSummary b;
  double delta() const { return b.mean - a.mean; }
};

// The `count` classes with the highest class-average rating of `action`.
std::set<int> top_classes_for_action(const FoldedDataset& ds, const AvMap& avs,
                                     std::string_view action, std::size_t count);

// Full dataset (a) against the dataset with `removed` classes dropped (b).
PairedResult ablate_classes(const FoldedDataset& ds, const std::set<int>& removed,
                            const FeatureSources& src, const FeatureRecipe& recipe,
                            const ClassifierSpec& spec, std::uint64_t seed, int n_runs,
                            int jobs = 1);

// Graded AV fused with AE (a) against binary AV fused with AE (b), identical
// seeds.
PairedResult quantization_ablation(const FoldedDataset& ds, const FeatureSources& src,
                                   const ClassifierSpec& spec, std::uint64_t seed, int n_runs,
                                   int jobs = 1);

struct ConfusionPair {
  int truth = 0;
  int predicted = 0;
  int count = 0;
  std::string truth_name;
  std::string predicted_name;
};

// Off-diagonal cells with count > 0, descending by count, ties by
// (truth, predicted).
std::vector<ConfusionPair> confusion_report(const CvResult& r,
                                           const std::map<int, std::string>& names);

// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first exception
// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace avsec

#endif  // AVSEC_EVALUATION_HPP_
