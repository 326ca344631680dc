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

#include "avsec/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "avsec/csv.hpp"
#include "avsec/error.hpp"

namespace avsec {

void validate_rating(const ActionRating& r) {
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (r.scores[i] > kLikertMax) {
      throw DataError("rating of clip '" + r.clip_id + "' by '" + r.annotator_id +
                      "': score " + std::to_string(r.scores[i]) + " for '" +
                      std::string(ActionTaxonomy::standard().name(i)) + "' outside 0-4");
    }
  }
}

std::string_view scale_name(AvScale s) {
  switch (s) {
    case AvScale::kGraded: return "graded";
    case AvScale::kUnit: return "unit";
    case AvScale::kBinary: return "binary";
  }
  return "graded";
}

AvScale parse_scale(std::string_view name) {
  if (name == "graded") return AvScale::kGraded;
  if (name == "unit") return AvScale::kUnit;
  if (name == "binary") return AvScale::kBinary;
  throw ParseError("unknown action vector scale '" + std::string(name) + "'");
}

bool is_spam_rating(const ActionRating& r, double majority_fraction) {
  const auto high = std::count_if(r.scores.begin(), r.scores.end(),
                                  [](std::uint8_t s) { return s >= 3; });
  // Compare counts rather than fractions so 16/20 >= 0.8 is exact.
  return static_cast<double>(high) >= majority_fraction * static_cast<double>(kNumActions) - 1e-9;
}

RejectionResult reject_spammers(std::span<const ActionRating> ratings,
                                double majority_fraction, RejectionScope scope) {
  if (!(majority_fraction > 0.5 && majority_fraction <= 1.0)) {
    throw UsageError("majority fraction must be in (0.5, 1], got " +
                     std::to_string(majority_fraction));
  }
  std::set<std::pair<std::string, std::string>> flagged;
  std::set<std::string> flagged_annotators;
  for (const ActionRating& r : ratings) {
    if (is_spam_rating(r, majority_fraction)) {
      flagged.emplace(r.annotator_id, r.clip_id);
      flagged_annotators.insert(r.annotator_id);
    }
  }

  RejectionResult out;
  std::set<std::pair<std::string, std::string>> discarded;
  for (const ActionRating& r : ratings) {
    const bool drop = scope == RejectionScope::kGlobal
                          ? flagged_annotators.contains(r.annotator_id)
                          : flagged.contains({r.annotator_id, r.clip_id});
    if (drop) {
      discarded.emplace(r.annotator_id, r.clip_id);
    } else {
      out.kept.push_back(r);
    }
  }
  out.discarded.assign(discarded.begin(), discarded.end());
  return out;
}

std::string_view band_name(AgreementBand b) {
  switch (b) {
    case AgreementBand::kPoor: return "poor";
    case AgreementBand::kSlight: return "slight";
    case AgreementBand::kFair: return "fair";
    case AgreementBand::kModerate: return "moderate";
    case AgreementBand::kSubstantial: return "substantial";
    case AgreementBand::kAlmostPerfect: return "almost-perfect";
  }
  return "poor";
}

AgreementBand interpret_kappa(double kappa) {
  if (kappa < 0.0) return AgreementBand::kPoor;
  if (kappa <= 0.20) return AgreementBand::kSlight;
  if (kappa <= 0.40) return AgreementBand::kFair;
  if (kappa <= 0.60) return AgreementBand::kModerate;
  if (kappa <= 0.80) return AgreementBand::kSubstantial;
  return AgreementBand::kAlmostPerfect;
}

AgreementReport fleiss_kappa(const std::vector<std::vector<int>>& table, int n_raters) {
  if (table.size() < 2) throw DataError("fleiss kappa needs at least 2 items");
  if (n_raters < 2) throw DataError("fleiss kappa needs at least 2 raters");
  const std::size_t n_cat = table.front().size();
  if (n_cat < 2) throw DataError("fleiss kappa needs at least 2 categories");

  const double n = n_raters;
  std::vector<double> column_totals(n_cat, 0.0);
  double p_bar = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table[i];
    if (row.size() != n_cat) {
      throw DataError("fleiss kappa row " + std::to_string(i) + " has " +
                      std::to_string(row.size()) + " categories, expected " +
                      std::to_string(n_cat));
    }
    long sum = 0;
    double sq = 0.0;
    for (std::size_t j = 0; j < n_cat; ++j) {
      if (row[j] < 0) throw DataError("fleiss kappa: negative count");
      sum += row[j];
      sq += static_cast<double>(row[j]) * row[j];
      column_totals[j] += row[j];
    }
    if (sum != n_raters) {
      throw DataError("fleiss kappa row " + std::to_string(i) + " sums to " +
                      std::to_string(sum) + ", expected " + std::to_string(n_raters));
    }
    p_bar += (sq - n) / (n * (n - 1.0));
  }
  const double n_items = static_cast<double>(table.size());
  p_bar /= n_items;

  double p_e = 0.0;
  for (double t : column_totals) {
    const double p = t / (n_items * n);
    p_e += p * p;
  }

  AgreementReport report;
  report.n_items = table.size();
  report.n_raters = n_raters;
  report.n_categories = n_cat;
  if (std::abs(1.0 - p_e) < 1e-15) {
    if (std::abs(1.0 - p_bar) > 1e-12) {
      throw NumericError("fleiss kappa undefined: chance agreement is 1 but observed is not");
    }
    report.kappa = 1.0;
  } else {
    report.kappa = (p_bar - p_e) / (1.0 - p_e);
  }
  report.interpretation = interpret_kappa(report.kappa);
  return report;
}

std::map<std::string, AgreementReport> agreement_from_ratings(
    std::span<const ActionRating> ratings, KappaGrouping grouping, int n_raters) {
  std::map<std::string, std::vector<const ActionRating*>> by_clip;
  for (const ActionRating& r : ratings) by_clip[r.clip_id].push_back(&r);

  // group key -> rows
  std::map<std::string, std::vector<std::vector<int>>> tables;
  const auto& taxonomy = ActionTaxonomy::standard();
  for (const auto& [clip, rs] : by_clip) {
    if (static_cast<int>(rs.size()) != n_raters) continue;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      std::vector<int> row(kLikertMax + 1, 0);
      for (const ActionRating* r : rs) ++row[r->scores[a]];
      std::string key;
      switch (grouping) {
        case KappaGrouping::kPooled: key = "all"; break;
        case KappaGrouping::kPerAction: key = std::string(taxonomy.name(a)); break;
        case KappaGrouping::kPerClip: key = clip; break;
      }
      tables[key].push_back(std::move(row));
    }
  }

  std::map<std::string, AgreementReport> out;
  for (const auto& [key, table] : tables) {
    if (table.size() < 2) continue;
    out.emplace(key, fleiss_kappa(table, n_raters));
  }
  return out;
}

ActionVector build_action_vector(std::string_view clip_id,
                                 std::span<const ActionRating> ratings) {
  if (ratings.size() != static_cast<std::size_t>(kRatersPerClip)) {
    throw DataError("clip '" + std::string(clip_id) + "' has " +
                    std::to_string(ratings.size()) + " ratings, expected 3");
  }
  ActionVector av;
  av.clip_id = std::string(clip_id);
  av.scale = AvScale::kGraded;
  for (const ActionRating& r : ratings) {
    if (r.clip_id != clip_id) {
      throw DataError("rating for clip '" + r.clip_id + "' passed while building '" +
                      std::string(clip_id) + "'");
    }
    validate_rating(r);
    for (std::size_t i = 0; i < kNumActions; ++i) av.values[i] += r.scores[i];
  }
  return av;
}

ActionVector quantize_av(const ActionVector& av) {
  if (av.scale != AvScale::kGraded) {
    throw DataError("quantize expects a graded action vector, got " +
                    std::string(scale_name(av.scale)));
  }
  ActionVector out = av;
  out.scale = AvScale::kBinary;
  for (double& v : out.values) v = (v / kGradedMax >= 0.5) ? 1.0 : 0.0;
  return out;
}

ActionVector to_unit_scale(const ActionVector& av) {
  if (av.scale != AvScale::kGraded) {
    throw DataError("unit scaling expects a graded action vector");
  }
  ActionVector out = av;
  out.scale = AvScale::kUnit;
  for (double& v : out.values) v /= kGradedMax;
  return out;
}

double av_sparsity(std::span<const ActionVector> avs) {
  if (avs.empty()) throw DataError("sparsity of an empty action vector set");
  double total = 0.0;
  for (const ActionVector& av : avs) {
    total += static_cast<double>(
        std::count_if(av.values.begin(), av.values.end(), [](double v) { return v != 0.0; }));
  }
  return total / static_cast<double>(avs.size());
}

std::vector<ActionVector> build_action_vectors(std::span<const ActionRating> ratings,
                                               ShortfallPolicy policy,
                                               AvBuildReport* report) {
  std::map<std::string, std::vector<ActionRating>> by_clip;
  for (const ActionRating& r : ratings) by_clip[r.clip_id].push_back(r);

  std::vector<ActionVector> out;
  for (const auto& [clip, rs] : by_clip) {
    const int k = static_cast<int>(rs.size());
    if (k == kRatersPerClip) {
      out.push_back(build_action_vector(clip, rs));
      continue;
    }
    if (k > kRatersPerClip) {
      throw DataError("clip '" + clip + "' has " + std::to_string(k) +
                      " surviving ratings, expected at most 3");
    }
    if (report) report->shortfall.emplace_back(clip, k);
    if (policy == ShortfallPolicy::kExclude) {
      if (report) report->excluded.push_back(clip);
      continue;
    }
    ActionVector av;
    av.clip_id = clip;
    av.scale = AvScale::kGraded;
    for (const ActionRating& r : rs) {
      validate_rating(r);
      for (std::size_t i = 0; i < kNumActions; ++i) av.values[i] += r.scores[i];
    }
    const double factor = static_cast<double>(kRatersPerClip) / k;
    for (double& v : av.values) v *= factor;
    out.push_back(std::move(av));
  }
  return out;
}

std::string annotation_header() {
  csv::Row header = {"clip_id", "annotator_id"};
  for (auto name : ActionTaxonomy::standard().actions()) header.emplace_back(name);
  return csv::join(header);
}

namespace {

void check_action_columns(const csv::Row& header, std::size_t offset, std::string_view where) {
  const auto& actions = ActionTaxonomy::standard().actions();
  if (header.size() != offset + kNumActions) {
    throw ParseError(std::string(where) + ": header has " + std::to_string(header.size()) +
                     " columns, expected " + std::to_string(offset + kNumActions));
  }
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (header[offset + i] != actions[i]) {
      throw ParseError(std::string(where) + ": column " + std::to_string(offset + i + 1) +
                       " is '" + header[offset + i] + "', expected action '" +
                       std::string(actions[i]) + "'");
    }
  }
}

}  // namespace

std::vector<ActionRating> read_annotations(std::istream& in, std::string_view source) {
  const std::string where = source.empty() ? std::string("annotations") : std::string(source);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw ParseError(where + ": missing header line");
  if (header->size() < 2 || (*header)[0] != "clip_id" || (*header)[1] != "annotator_id") {
    throw ParseError(where + ": header must start with clip_id,annotator_id");
  }
  check_action_columns(*header, 2, where);

  std::vector<ActionRating> out;
  std::set<std::pair<std::string, std::string>> seen;
  while (auto row = reader.next()) {
    const std::string loc = where + " line " + std::to_string(reader.line());
    if (row->size() != 2 + kNumActions) {
      throw ParseError(loc + ": expected " + std::to_string(2 + kNumActions) + " fields, got " +
                       std::to_string(row->size()));
    }
    ActionRating r;
    r.clip_id = (*row)[0];
    r.annotator_id = (*row)[1];
    for (std::size_t i = 0; i < kNumActions; ++i) {
      const long long s = csv::parse_int((*row)[2 + i], loc);
      if (s < 0 || s > kLikertMax) {
        throw DataError(loc + ": score " + std::to_string(s) + " outside 0-4");
      }
      r.scores[i] = static_cast<std::uint8_t>(s);
    }
    if (!seen.emplace(r.clip_id, r.annotator_id).second) {
      throw DataError(loc + ": second rating of '" + r.clip_id + "' by '" + r.annotator_id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ActionRating> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open annotations " + path.string());
  return read_annotations(in, path.string());
}

void write_annotations(std::span<const ActionRating> ratings, std::ostream& out) {
  out << annotation_header() << '\n';
  for (const ActionRating& r : ratings) {
    out << csv::escape(r.clip_id) << ',' << csv::escape(r.annotator_id);
    for (auto s : r.scores) out << ',' << static_cast<int>(s);
    out << '\n';
  }
}

std::vector<ActionVector> read_action_vectors(std::istream& in, std::string_view source) {
  const std::string where = source.empty() ? std::string("action vectors") : std::string(source);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw ParseError(where + ": missing header line");
  if (header->size() < 2 || (*header)[0] != "clip_id" || (*header)[1] != "scale") {
    throw ParseError(where + ": header must start with clip_id,scale");
  }
  check_action_columns(*header, 2, where);

  std::vector<ActionVector> out;
  std::set<std::string> seen;
  while (auto row = reader.next()) {
    const std::string loc = where + " line " + std::to_string(reader.line());
    if (row->size() != 2 + kNumActions) {
      throw ParseError(loc + ": expected " + std::to_string(2 + kNumActions) + " fields");
    }
    ActionVector av;
    av.clip_id = (*row)[0];
    av.scale = parse_scale((*row)[1]);
    for (std::size_t i = 0; i < kNumActions; ++i) {
      const double v = csv::parse_double((*row)[2 + i], loc);
      const double hi = av.scale == AvScale::kGraded ? kGradedMax : 1.0;
      if (!std::isfinite(v) || v < 0.0 || v > hi) {
        throw DataError(loc + ": value " + (*row)[2 + i] + " outside the " +
                        std::string(scale_name(av.scale)) + " range");
      }
      if (av.scale == AvScale::kBinary && v != 0.0 && v != 1.0) {
        throw DataError(loc + ": binary action vector value " + (*row)[2 + i]);
      }
      av.values[i] = v;
    }
    if (!seen.insert(av.clip_id).second) {
      throw DataError(loc + ": duplicate clip '" + av.clip_id + "'");
    }
    out.push_back(std::move(av));
  }
  return out;
}

std::vector<ActionVector> load_action_vectors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open action vectors " + path.string());
  return read_action_vectors(in, path.string());
}

void write_action_vectors(std::span<const ActionVector> avs, std::ostream& out) {
  csv::Row header = {"clip_id", "scale"};
  for (auto name : ActionTaxonomy::standard().actions()) header.emplace_back(name);
  out << csv::join(header) << '\n';
  for (const ActionVector& av : avs) {
    out << csv::escape(av.clip_id) << ',' << scale_name(av.scale);
    for (double v : av.values) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

}  // namespace avsec
