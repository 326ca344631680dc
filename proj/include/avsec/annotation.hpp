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

#ifndef AVSEC_ANNOTATION_HPP_
#define AVSEC_ANNOTATION_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avsec/dataset.hpp"

namespace avsec {

inline constexpr int kLikertMax = 4;
inline constexpr int kRatersPerClip = 3;
inline constexpr double kGradedMax = kLikertMax * kRatersPerClip;  // 12

// One annotator's judgement of one clip: 20 Likert scores in taxonomy order.
struct ActionRating {
  std::string clip_id;
  std::string annotator_id;
  std::array<std::uint8_t, kNumActions> scores{};

  bool operator==(const ActionRating&) const = default;
};

// Throws DataError when any score is outside 0-4.
void validate_rating(const ActionRating& r);

enum class AvScale { kGraded, kUnit, kBinary };
std::string_view scale_name(AvScale s);
AvScale parse_scale(std::string_view name);

struct ActionVector {
  std::string clip_id;
  std::array<double, kNumActions> values{};
  AvScale scale = AvScale::kGraded;

  bool operator==(const ActionVector&) const = default;
};

// --- spam rejection -------------------------------------------------------

inline constexpr double kDefaultMajorityFraction = 0.8;

enum class RejectionScope {
  kPerClip,  // drop the flagged (annotator, clip) rating only
  kGlobal,   // drop every rating of an annotator flagged on any clip
};

struct RejectionResult {
  std::vector<ActionRating> kept;
  std::vector<std::pair<std::string, std::string>> discarded;  // (annotator, clip)
};

// True when (#scores >= 3) / 20 >= majority_fraction.
bool is_spam_rating(const ActionRating& r, double majority_fraction);

RejectionResult reject_spammers(std::span<const ActionRating> ratings,
                                double majority_fraction = kDefaultMajorityFraction,
                                RejectionScope scope = RejectionScope::kPerClip);

// --- agreement ------------------------------------------------------------

enum class AgreementBand { kPoor, kSlight, kFair, kModerate, kSubstantial, kAlmostPerfect };
std::string_view band_name(AgreementBand b);
// Landis-Koch bands.
AgreementBand interpret_kappa(double kappa);

struct AgreementReport {
  double kappa = 0.0;
  std::size_t n_items = 0;
  int n_raters = 0;
  std::size_t n_categories = 0;
  AgreementBand interpretation = AgreementBand::kPoor;
};

// Fleiss' kappa over an item x category count table. Every row must sum to
// n_raters; at least 2 items and 2 categories.
AgreementReport fleiss_kappa(const std::vector<std::vector<int>>& table, int n_raters);

enum class KappaGrouping { kPooled, kPerAction, kPerClip };

// Items are (clip, action) pairs, categories the 5 Likert points. Clips that
// do not carry exactly n_raters ratings are skipped. Keys: "all" for pooled,
// the action name or the clip id otherwise.
std::map<std::string, AgreementReport> agreement_from_ratings(
    std::span<const ActionRating> ratings, KappaGrouping grouping,
    int n_raters = kRatersPerClip);

// --- action vectors -------------------------------------------------------

// Element-wise sum of exactly three ratings of the same clip.
ActionVector build_action_vector(std::string_view clip_id,
                                 std::span<const ActionRating> ratings);

// Graded -> binary: 1 where value / 12 >= 0.5.
ActionVector quantize_av(const ActionVector& av);
// Graded -> unit: value / 12.
ActionVector to_unit_scale(const ActionVector& av);

// Mean count of nonzero dims per vector.
double av_sparsity(std::span<const ActionVector> avs);

enum class ShortfallPolicy {
  kRescale,  // sum of k < 3 ratings scaled by 3/k
  kExclude,
};

struct AvBuildReport {
  std::vector<std::pair<std::string, int>> shortfall;  // (clip, surviving k)
  std::vector<std::string> excluded;
};

// Groups ratings by clip (output sorted by clip_id) and builds graded AVs.
// Clips with more than 3 ratings are a DataError.
std::vector<ActionVector> build_action_vectors(std::span<const ActionRating> ratings,
                                               ShortfallPolicy policy,
                                               AvBuildReport* report = nullptr);

// --- file formats ---------------------------------------------------------

// Annotation CSV: clip_id,annotator_id,<20 action names in taxonomy order>.
std::vector<ActionRating> read_annotations(std::istream& in, std::string_view source = "");
std::vector<ActionRating> load_annotations(const std::filesystem::path& path);
void write_annotations(std::span<const ActionRating> ratings, std::ostream& out);
std::string annotation_header();

// AV CSV: clip_id,scale,<20 action names>. Values use the shortest
// round-trip decimal form.
std::vector<ActionVector> read_action_vectors(std::istream& in, std::string_view source = "");
std::vector<ActionVector> load_action_vectors(const std::filesystem::path& path);
void write_action_vectors(std::span<const ActionVector> avs, std::ostream& out);

}  // namespace avsec

#endif  // AVSEC_ANNOTATION_HPP_
