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

#include "avsec/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "avsec/csv.hpp"
#include "avsec/error.hpp"

namespace avsec {

ActionTaxonomy::ActionTaxonomy()
    : actions_{"dripping",  "splashing", "pouring",  "breaking",  "calling",
               "rolling",   "scraping",  "exhaling", "vibrating", "ringing",
               "groaning",  "gasping",   "singing",  "tapping",   "wailing",
               "crumpling", "blowing",   "exploding", "rotating", "sizzling"} {}

const ActionTaxonomy& ActionTaxonomy::standard() {
  static const ActionTaxonomy taxonomy;
  return taxonomy;
}

std::optional<std::size_t> ActionTaxonomy::index_of(std::string_view name) const {
  auto it = std::find(actions_.begin(), actions_.end(), name);
  if (it == actions_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - actions_.begin());
}

namespace {

constexpr std::array<std::string_view, 5> kCategoryNames = {
    "animals", "natural", "human", "interior", "exterior"};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool all_digits(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

std::string_view category_name(Category c) {
  return kCategoryNames.at(static_cast<std::size_t>(c));
}

std::optional<Category> parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  return std::nullopt;
}

ClipMeta parse_clip_filename(std::string_view name) {
  const auto slash = name.find_last_of("/\\");
  if (slash != std::string_view::npos) name.remove_prefix(slash + 1);
  std::string_view stem = name;
  const auto dot = stem.rfind('.');
  if (dot != std::string_view::npos) stem = stem.substr(0, dot);

  const auto tokens = split(stem, '-');
  if (tokens.size() != 4) {
    throw ParseError("clip filename '" + std::string(name) + "': expected 4 dash-separated tokens, got " +
                     std::to_string(tokens.size()));
  }
  if (!all_digits(tokens[0])) {
    throw ParseError("clip filename '" + std::string(name) + "': bad fold token '" +
                     std::string(tokens[0]) + "'");
  }
  if (tokens[1].empty() || tokens[2].empty()) {
    throw ParseError("clip filename '" + std::string(name) + "': empty source/take token");
  }
  if (!all_digits(tokens[3])) {
    throw ParseError("clip filename '" + std::string(name) + "': bad target token '" +
                     std::string(tokens[3]) + "'");
  }
  ClipMeta meta;
  meta.filename = std::string(name);
  meta.clip_id = std::string(stem);
  meta.fold = std::stoi(std::string(tokens[0]));
  meta.target = std::stoi(std::string(tokens[3]));
  if (meta.fold < 1 || meta.fold > kNumFolds) {
    throw ParseError("clip filename '" + std::string(name) + "': fold token '" +
                     std::string(tokens[0]) + "' outside 1-5");
  }
  if (meta.target < 0 || meta.target >= kMaxClasses) {
    throw ParseError("clip filename '" + std::string(name) + "': target token '" +
                     std::string(tokens[3]) + "' outside 0-49");
  }
  meta.category = category_for_target(meta.target);
  return meta;
}

FoldedDataset::FoldedDataset(std::vector<ClipMeta> clips) : clips_(std::move(clips)) {
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    const ClipMeta& c = clips_[i];
    if (c.fold < 1 || c.fold > kNumFolds) {
      throw DataError("clip '" + c.clip_id + "': fold " + std::to_string(c.fold) +
                      " outside 1-5");
    }
    if (c.target < 0 || c.target >= kMaxClasses) {
      throw DataError("clip '" + c.clip_id + "': target " + std::to_string(c.target) +
                      " outside 0-49");
    }
    if (!by_id_.emplace(c.clip_id, i).second) {
      throw DataError("duplicate clip '" + c.clip_id + "'");
    }
    auto [it, inserted] = class_names_.emplace(c.target, c.class_name);
    if (!inserted && it->second != c.class_name) {
      throw DataError("target " + std::to_string(c.target) + " has two class names: '" +
                      it->second + "' and '" + c.class_name + "'");
    }
    try {
      const ClipMeta parsed = parse_clip_filename(c.filename);
      if (parsed.fold != c.fold || parsed.target != c.target) {
        mismatches_.push_back(c.filename);
      }
    } catch (const ParseError&) {
      // Renamed files are allowed; the manifest is authoritative.
    }
  }
}

const ClipMeta* FoldedDataset::find(std::string_view clip_id) const {
  auto it = by_id_.find(clip_id);
  return it == by_id_.end() ? nullptr : &clips_[it->second];
}

const ClipMeta& FoldedDataset::at(std::string_view clip_id) const {
  const ClipMeta* c = find(clip_id);
  if (!c) throw DataError("unknown clip '" + std::string(clip_id) + "'");
  return *c;
}

std::vector<int> FoldedDataset::classes() const {
  std::vector<int> out;
  for (const auto& [target, name] : class_names_) out.push_back(target);
  return out;
}

int FoldedDataset::label_space() const {
  return class_names_.empty() ? 0 : class_names_.rbegin()->first + 1;
}

std::vector<std::size_t> FoldedDataset::fold_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    if (clips_[i].fold == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldedDataset::indices_excluding_fold(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    if (clips_[i].fold != fold) out.push_back(i);
  }
  return out;
}

FoldedDataset FoldedDataset::without_classes(const std::set<int>& removed) const {
  std::vector<ClipMeta> kept;
  for (const ClipMeta& c : clips_) {
    if (!removed.contains(c.target)) kept.push_back(c);
  }
  return FoldedDataset(std::move(kept));
}

void FoldedDataset::check_balanced(std::size_t per_class) const {
  std::map<int, std::size_t> per_target;
  std::map<std::pair<int, int>, std::size_t> per_cell;
  for (const ClipMeta& c : clips_) {
    ++per_target[c.target];
    ++per_cell[{c.fold, c.target}];
  }
  for (const auto& [target, n] : per_target) {
    if (n != per_class) {
      throw DataError("class " + std::to_string(target) + " has " + std::to_string(n) +
                      " clips, expected " + std::to_string(per_class));
    }
    for (int fold = 1; fold <= kNumFolds; ++fold) {
      const std::size_t cell = per_cell[{fold, target}];
      if (cell * kNumFolds != per_class) {
        throw DataError("class " + std::to_string(target) + " has " + std::to_string(cell) +
                        " clips in fold " + std::to_string(fold));
      }
    }
  }
}

FoldedDataset parse_manifest(std::istream& in, std::string_view source) {
  csv::Reader reader(in);
  const std::string where = source.empty() ? std::string("manifest") : std::string(source);
  auto header = reader.next();
  if (!header) throw ParseError(where + ": missing header line");

  auto require = [&](std::string_view name) {
    auto idx = csv::column(*header, name);
    if (!idx) throw ParseError(where + ": missing column '" + std::string(name) + "'");
    return *idx;
  };
  const std::size_t col_file = require("filename");
  const std::size_t col_fold = require("fold");
  const std::size_t col_target = require("target");
  const auto col_category = csv::column(*header, "category");
  const auto col_class = csv::column(*header, "class_name");
  if (!col_class && !col_category) {
    throw ParseError(where + ": missing column 'class_name' (or ESC-50 'category')");
  }

  std::vector<ClipMeta> clips;
  while (auto row = reader.next()) {
    const auto at = [&](std::size_t col) -> const std::string& {
      if (col >= row->size()) {
        throw ParseError(where + " line " + std::to_string(reader.line()) + ": too few fields");
      }
      return (*row)[col];
    };
    ClipMeta c;
    c.filename = at(col_file);
    std::string_view stem = c.filename;
    if (auto dot = stem.rfind('.'); dot != std::string_view::npos) stem = stem.substr(0, dot);
    c.clip_id = std::string(stem);
    c.fold = static_cast<int>(csv::parse_int(at(col_fold), "fold"));
    c.target = static_cast<int>(csv::parse_int(at(col_target), "target"));
    if (c.fold < 1 || c.fold > kNumFolds) {
      throw DataError(where + " line " + std::to_string(reader.line()) + ": fold " +
                      std::to_string(c.fold) + " outside 1-5");
    }
    if (c.target < 0 || c.target >= kMaxClasses) {
      throw DataError(where + " line " + std::to_string(reader.line()) + ": target " +
                      std::to_string(c.target) + " outside 0-49");
    }
    c.category = category_for_target(c.target);
    if (col_class) {
      c.class_name = at(*col_class);
      if (col_category) {
        auto cat = parse_category(at(*col_category));
        if (!cat) {
          throw ParseError(where + " line " + std::to_string(reader.line()) +
                           ": unknown category '" + at(*col_category) + "'");
        }
        c.category = *cat;
      }
    } else {
      c.class_name = at(*col_category);
    }
    clips.push_back(std::move(c));
  }
  return FoldedDataset(std::move(clips));
}

FoldedDataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

void write_manifest(const FoldedDataset& ds, std::ostream& out) {
  out << "filename,fold,target,category,class_name\n";
  for (const ClipMeta& c : ds.clips()) {
    out << csv::join({c.filename, std::to_string(c.fold), std::to_string(c.target),
                      std::string(category_name(c.category)), c.class_name})
        << '\n';
  }
}

}  // namespace avsec
