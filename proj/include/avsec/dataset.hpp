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

#ifndef AVSEC_DATASET_HPP_
#define AVSEC_DATASET_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace avsec {

inline constexpr std::size_t kNumActions = 20;
inline constexpr int kNumFolds = 5;
inline constexpr int kMaxClasses = 50;

// The 20 actions in row-major table order. Every 20-dim vector in the
// system (ratings, action vectors, class averages, centroids) is indexed by
// this order.
class ActionTaxonomy {
 public:
  static const ActionTaxonomy& standard();

  const std::array<std::string_view, kNumActions>& actions() const {
    return actions_;
  }
  std::string_view name(std::size_t index) const { return actions_.at(index); }

  // Index of an action name; std::nullopt when unknown.
  std::optional<std::size_t> index_of(std::string_view name) const;

 private:
  ActionTaxonomy();
  std::array<std::string_view, kNumActions> actions_;
};

// Broad ESC-50 categories; targets 0-9, 10-19, ... map onto them in order.
enum class Category {
  kAnimals,
  kNatural,
  kHuman,
  kInterior,
  kExterior,
};

std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view name);
inline Category category_for_target(int target) {
  return static_cast<Category>(target / 10);
}

struct ClipMeta {
  std::string clip_id;
  std::string filename;
  int fold = 0;
  int target = 0;
  std::string class_name;
  Category category = Category::kAnimals;
};

// Splits an ESC-50 style name `{fold}-{source}-{take}-{target}.wav`.
// clip_id is the filename stem. class_name/category are left empty.
ClipMeta parse_clip_filename(std::string_view name);

// Immutable clip registry with fold bookkeeping. Clips are kept in manifest
// order.
class FoldedDataset {
 public:
  FoldedDataset() = default;
  explicit FoldedDataset(std::vector<ClipMeta> clips);

  const std::vector<ClipMeta>& clips() const { return clips_; }
  std::size_t size() const { return clips_.size(); }
  bool empty() const { return clips_.empty(); }

  const ClipMeta* find(std::string_view clip_id) const;
  const ClipMeta& at(std::string_view clip_id) const;

  // Sorted distinct targets present.
  std::vector<int> classes() const;
  std::size_t num_classes() const { return class_names_.size(); }
  // Label dimension used for confusion matrices: max target + 1.
  int label_space() const;
  const std::map<int, std::string>& class_names() const { return class_names_; }

  std::vector<std::size_t> fold_indices(int fold) const;
  std::vector<std::size_t> indices_excluding_fold(int fold) const;

  // Keeps manifest order and fold membership; drops every clip whose target
  // is in `removed`.
  FoldedDataset without_classes(const std::set<int>& removed) const;

  // Clips whose filename parses under the ESC-50 convention but disagrees
  // with the manifest's fold or target.
  const std::vector<std::string>& filename_mismatches() const {
    return mismatches_;
  }

  // Throws DataError unless every class has `per_class` clips and every
  // (fold, class) cell has per_class / kNumFolds.
  void check_balanced(std::size_t per_class = 40) const;

 private:
  std::vector<ClipMeta> clips_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::map<int, std::string> class_names_;
  std::vector<std::string> mismatches_;
};

// Reads the manifest CSV. Required columns: filename, fold, target. The
// class name comes from `class_name` when present (then `category` holds the
// broad category); otherwise `category` is taken as the class name, which is
// the layout of the published ESC-50 meta file.
FoldedDataset load_manifest(const std::filesystem::path& path);
FoldedDataset parse_manifest(std::istream& in, std::string_view source = "");

void write_manifest(const FoldedDataset& ds, std::ostream& out);

}  // namespace avsec

#endif  // AVSEC_DATASET_HPP_
