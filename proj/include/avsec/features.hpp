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

#ifndef AVSEC_FEATURES_HPP_
#define AVSEC_FEATURES_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avsec/annotation.hpp"
#include "avsec/dataset.hpp"

namespace avsec {

// Per-part normalization applied before a block enters a classifier. L2 is
// per-vector and stateless; standardization is fitted on training folds.
struct PartRecipe {
  bool l2 = false;
  bool standardize = true;

  bool operator==(const PartRecipe&) const = default;
};

enum class FeatureBase { kLogMel, kEmbedding, kActionVector, kFused };

struct FeatureKind;

struct FusedPart {
  FeatureBase base = FeatureBase::kLogMel;
  std::size_t dim = 0;
  PartRecipe recipe;

  bool operator==(const FusedPart&) const = default;
};

struct FeatureKind {
  FeatureBase base = FeatureBase::kLogMel;
  std::size_t dim = 0;
  std::vector<FusedPart> parts;  // only for kFused, in concatenation order

  static FeatureKind logmel(std::size_t dim = 128) { return {FeatureBase::kLogMel, dim, {}}; }
  static FeatureKind embedding(std::size_t dim) { return {FeatureBase::kEmbedding, dim, {}}; }
  static FeatureKind action_vector() { return {FeatureBase::kActionVector, kNumActions, {}}; }

  // e.g. "logmel:128", "fused[av:20{std}+embedding:6144{std}]".
  std::string tag() const;
  static FeatureKind parse(std::string_view tag);

  bool operator==(const FeatureKind&) const = default;
};

std::string_view base_name(FeatureBase b);

struct FeatureVector {
  std::string clip_id;
  FeatureKind kind;
  Eigen::VectorXd values;
};

// Throws DataError on length/kind mismatch or non-finite values.
void validate(const FeatureVector& v);

using FeatureMap = std::map<std::string, FeatureVector, std::less<>>;

FeatureVector from_action_vector(const ActionVector& av);

struct NormalizedVector {
  Eigen::VectorXd values;
  bool degenerate = false;  // norm below epsilon, returned unchanged
};

inline constexpr double kL2Epsilon = 1e-12;
NormalizedVector l2_normalize(const Eigen::VectorXd& v);

struct FusionInput {
  const FeatureVector* vector = nullptr;
  PartRecipe recipe;
};

// Concatenates parts in order, L2-normalizing parts whose recipe asks for
// it. Standardization is recorded in the kind and left to a Standardizer.
FeatureVector fuse(std::span<const FusionInput> parts);

// Per-dimension (v - mean) / scale fitted on training rows only.
class Standardizer {
 public:
  // Rows of `x` are samples. `active[d] == false` leaves dim d untouched
  // (mean 0, scale 1). Empty `active` means all dims.
  static Standardizer fit(const Eigen::MatrixXd& x, std::span<const std::string> clip_ids,
                          std::set<int> folds, const std::vector<bool>& active = {});

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;

  // Throws LeakageError naming the first clip of `test_ids` that was in the
  // fit set.
  void check_disjoint(std::span<const std::string> test_ids) const;

  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::VectorXd& scales() const { return scales_; }
  const std::vector<bool>& degenerate() const { return degenerate_; }
  const std::set<int>& fitted_folds() const { return folds_; }
  const std::set<std::string, std::less<>>& fitted_clips() const { return clips_; }
  std::size_t dim() const { return static_cast<std::size_t>(means_.size()); }

  // For model files: rebuilds a standardizer from stored parameters.
  static Standardizer from_parameters(Eigen::VectorXd means, Eigen::VectorXd scales,
                                      std::set<int> folds);

 private:
  Eigen::VectorXd means_;
  Eigen::VectorXd scales_;
  std::vector<bool> degenerate_;
  std::set<int> folds_;
  std::set<std::string, std::less<>> clips_;
};

// --- feature containers ---------------------------------------------------
//
// Binary layout, little-endian:
//   "AVSEC1" u32 dim u32 count { u16 id_len, id bytes, dim x f32 }*
//   "AVSEC2" u32 dim u32 count u16 tag_len tag bytes { same records }*
// A CSV fallback `clip_id,v1..vd` (optional header) is also read.

struct FeatureFile {
  std::string kind_tag;  // empty for AVSEC1 and CSV
  std::size_t dim = 0;
  std::vector<std::string> ids;  // file order
  std::vector<std::vector<float>> rows;
};

FeatureFile read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureFile& file);

// Loads precomputed embeddings; validates dimension, duplicates and
// non-finite values. When `required` is given, every clip of it must be
// present.
FeatureMap load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                           const FoldedDataset* required = nullptr);

// Feature cache written by extract-features (kind tag "logmel:<n_mels>").
FeatureMap load_feature_cache(const std::filesystem::path& path,
                              const FoldedDataset* required = nullptr);
void save_feature_cache(const std::filesystem::path& path, const FeatureMap& features,
                        const FeatureKind& kind);

}  // namespace avsec

#endif  // AVSEC_FEATURES_HPP_
