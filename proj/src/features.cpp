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

#include "avsec/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "avsec/csv.hpp"
#include "avsec/error.hpp"

namespace avsec {
namespace {

constexpr char kMagicPlain[] = "AVSEC1";
constexpr char kMagicTagged[] = "AVSEC2";
constexpr std::size_t kMagicLen = 6;

std::string recipe_tag(const PartRecipe& r) {
  if (r.l2 && r.standardize) return "l2,std";
  if (r.l2) return "l2";
  if (r.standardize) return "std";
  return "none";
}

PartRecipe parse_recipe_tag(std::string_view s) {
  PartRecipe r{false, false};
  if (s == "none") return r;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    const auto item = s.substr(start, comma - start);
    if (item == "l2") {
      r.l2 = true;
    } else if (item == "std") {
      r.standardize = true;
    } else {
      throw ParseError("unknown normalization step '" + std::string(item) + "'");
    }
    start = comma + 1;
  }
  return r;
}

FeatureBase parse_base(std::string_view name) {
  if (name == "logmel") return FeatureBase::kLogMel;
  if (name == "embedding") return FeatureBase::kEmbedding;
  if (name == "av") return FeatureBase::kActionVector;
  throw ParseError("unknown feature kind '" + std::string(name) + "'");
}

std::pair<FeatureBase, std::size_t> parse_simple(std::string_view tag) {
  const auto colon = tag.find(':');
  if (colon == std::string_view::npos) {
    throw ParseError("feature kind tag '" + std::string(tag) + "' lacks ':<dim>'");
  }
  const auto base = parse_base(tag.substr(0, colon));
  const auto dim = csv::parse_int(tag.substr(colon + 1), "feature dimension");
  if (dim <= 0) throw ParseError("feature dimension must be positive");
  return {base, static_cast<std::size_t>(dim)};
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string where)
      : bytes_(bytes), where_(std::move(where)) {}

  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError(where_ + ": truncated feature file");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string where_;
  std::size_t pos_ = 0;
};

FeatureFile read_csv_features(std::istream& in, const std::string& where) {
  FeatureFile file;
  csv::Reader reader(in);
  bool first = true;
  while (auto row = reader.next()) {
    const std::string loc = where + " line " + std::to_string(reader.line());
    if (row->size() < 2) throw ParseError(loc + ": expected clip_id plus values");
    if (first) {
      first = false;
      if ((*row)[0] == "clip_id") continue;  // header
    }
    if (file.dim == 0) file.dim = row->size() - 1;
    if (row->size() - 1 != file.dim) {
      throw DataError(loc + ": " + std::to_string(row->size() - 1) + " values, expected " +
                      std::to_string(file.dim));
    }
    std::vector<float> values(file.dim);
    for (std::size_t i = 0; i < file.dim; ++i) {
      values[i] = static_cast<float>(csv::parse_double((*row)[i + 1], loc));
    }
    file.ids.push_back((*row)[0]);
    file.rows.push_back(std::move(values));
  }
  return file;
}

FeatureMap to_feature_map(const FeatureFile& file, const FeatureKind& kind,
                          const std::string& where, const FoldedDataset* required) {
  FeatureMap out;
  for (std::size_t r = 0; r < file.ids.size(); ++r) {
    FeatureVector v;
    v.clip_id = file.ids[r];
    v.kind = kind;
    v.values.resize(static_cast<Eigen::Index>(file.dim));
    for (std::size_t i = 0; i < file.dim; ++i) {
      const float x = file.rows[r][i];
      if (!std::isfinite(x)) {
        throw DataError(where + ": non-finite value in clip '" + v.clip_id + "' dim " +
                        std::to_string(i));
      }
      v.values[static_cast<Eigen::Index>(i)] = x;
    }
    if (!out.emplace(v.clip_id, std::move(v)).second) {
      throw DataError(where + ": duplicate clip '" + file.ids[r] + "'");
    }
  }
  if (required) {
    for (const ClipMeta& c : required->clips()) {
      if (!out.contains(c.clip_id)) {
        throw DataError(where + ": missing clip '" + c.clip_id + "' referenced by the manifest");
      }
    }
  }
  return out;
}

}  // namespace

std::string_view base_name(FeatureBase b) {
  switch (b) {
    case FeatureBase::kLogMel: return "logmel";
    case FeatureBase::kEmbedding: return "embedding";
    case FeatureBase::kActionVector: return "av";
    case FeatureBase::kFused: return "fused";
  }
  return "fused";
}

std::string FeatureKind::tag() const {
  if (base != FeatureBase::kFused) {
    return std::string(base_name(base)) + ":" + std::to_string(dim);
  }
  std::string out = "fused[";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "+";
    out += std::string(base_name(parts[i].base)) + ":" + std::to_string(parts[i].dim) + "{" +
           recipe_tag(parts[i].recipe) + "}";
  }
  return out + "]";
}

FeatureKind FeatureKind::parse(std::string_view tag) {
  if (tag.rfind("fused[", 0) != 0) {
    auto [base, dim] = parse_simple(tag);
    return {base, dim, {}};
  }
  if (tag.back() != ']') throw ParseError("unterminated fused kind tag '" + std::string(tag) + "'");
  std::string_view body = tag.substr(6, tag.size() - 7);
  FeatureKind kind{FeatureBase::kFused, 0, {}};
  std::size_t start = 0;
  while (start < body.size()) {
    auto plus = body.find('+', start);
    if (plus == std::string_view::npos) plus = body.size();
    std::string_view item = body.substr(start, plus - start);
    const auto brace = item.find('{');
    if (brace == std::string_view::npos || item.back() != '}') {
      throw ParseError("fused part '" + std::string(item) + "' lacks a {recipe}");
    }
    auto [base, dim] = parse_simple(item.substr(0, brace));
    const auto recipe = parse_recipe_tag(item.substr(brace + 1, item.size() - brace - 2));
    kind.parts.push_back({base, dim, recipe});
    kind.dim += dim;
    start = plus + 1;
  }
  if (kind.parts.empty()) throw ParseError("fused kind tag without parts");
  return kind;
}

void validate(const FeatureVector& v) {
  if (static_cast<std::size_t>(v.values.size()) != v.kind.dim) {
    throw DataError("feature vector of clip '" + v.clip_id + "' has " +
                    std::to_string(v.values.size()) + " values, kind " + v.kind.tag());
  }
  if (v.kind.base == FeatureBase::kFused) {
    std::size_t sum = 0;
    for (const auto& p : v.kind.parts) sum += p.dim;
    if (sum != v.kind.dim) throw DataError("fused kind dimension does not match its parts");
  }
  if (!v.values.allFinite()) {
    throw DataError("feature vector of clip '" + v.clip_id + "' has non-finite values");
  }
}

FeatureVector from_action_vector(const ActionVector& av) {
  FeatureVector v;
  v.clip_id = av.clip_id;
  v.kind = FeatureKind::action_vector();
  v.values = Eigen::Map<const Eigen::VectorXd>(av.values.data(), kNumActions);
  return v;
}

NormalizedVector l2_normalize(const Eigen::VectorXd& v) {
  const double norm = v.norm();
  if (!(norm > kL2Epsilon)) return {v, true};
  return {v / norm, false};
}

FeatureVector fuse(std::span<const FusionInput> parts) {
  if (parts.empty()) throw DataError("fuse needs at least one part");
  FeatureVector out;
  out.clip_id = parts.front().vector->clip_id;
  out.kind.base = FeatureBase::kFused;
  std::size_t total = 0;
  for (const FusionInput& p : parts) {
    if (p.vector->clip_id != out.clip_id) {
      throw DataError("fuse: clip mismatch '" + out.clip_id + "' vs '" + p.vector->clip_id + "'");
    }
    if (p.vector->kind.base == FeatureBase::kFused) {
      throw DataError("fuse: parts must not themselves be fused");
    }
    total += static_cast<std::size_t>(p.vector->values.size());
  }
  out.values.resize(static_cast<Eigen::Index>(total));
  Eigen::Index offset = 0;
  for (const FusionInput& p : parts) {
    const auto n = p.vector->values.size();
    out.values.segment(offset, n) = p.recipe.l2 ? l2_normalize(p.vector->values).values
                                                : p.vector->values;
    out.kind.parts.push_back({p.vector->kind.base, static_cast<std::size_t>(n), p.recipe});
    offset += n;
  }
  out.kind.dim = total;
  return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x, std::span<const std::string> clip_ids,
                               std::set<int> folds, const std::vector<bool>& active) {
  if (x.rows() == 0) throw DataError("cannot fit a standardizer on an empty set");
  if (!active.empty() && active.size() != static_cast<std::size_t>(x.cols())) {
    throw DataError("standardizer mask length does not match the feature dimension");
  }
  Standardizer s;
  const auto d = x.cols();
  s.means_ = Eigen::VectorXd::Zero(d);
  s.scales_ = Eigen::VectorXd::Ones(d);
  s.degenerate_.assign(static_cast<std::size_t>(d), false);
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!active.empty() && !active[static_cast<std::size_t>(j)]) continue;
    const double mean = x.col(j).sum() / n;
    const double var = (x.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    s.means_[j] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      s.scales_[j] = sd;
    } else {
      s.degenerate_[static_cast<std::size_t>(j)] = true;
    }
  }
  s.folds_ = std::move(folds);
  s.clips_.insert(clip_ids.begin(), clip_ids.end());
  return s;
}

Standardizer Standardizer::from_parameters(Eigen::VectorXd means, Eigen::VectorXd scales,
                                           std::set<int> folds) {
  if (means.size() != scales.size()) throw DataError("standardizer parameter size mismatch");
  if ((scales.array() <= 0.0).any()) throw DataError("standardizer scales must be positive");
  Standardizer s;
  s.means_ = std::move(means);
  s.scales_ = std::move(scales);
  s.degenerate_.assign(static_cast<std::size_t>(s.means_.size()), false);
  s.folds_ = std::move(folds);
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  if (v.size() != means_.size()) {
    throw DataError("standardizer dimension " + std::to_string(means_.size()) +
                    " does not match input " + std::to_string(v.size()));
  }
  return (v - means_).cwiseQuotient(scales_);
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& x) const {
  if (x.cols() != means_.size()) {
    throw DataError("standardizer dimension " + std::to_string(means_.size()) +
                    " does not match input " + std::to_string(x.cols()));
  }
  return (x.rowwise() - means_.transpose()).array().rowwise() / scales_.transpose().array();
}

void Standardizer::check_disjoint(std::span<const std::string> test_ids) const {
  for (const std::string& id : test_ids) {
    if (clips_.contains(id)) {
      throw LeakageError("leakage: test clip '" + id + "' was in the standardizer fit set");
    }
  }
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::string where = path.string();
  const bool plain = bytes.size() >= kMagicLen && std::memcmp(bytes.data(), kMagicPlain, kMagicLen) == 0;
  const bool tagged = bytes.size() >= kMagicLen && std::memcmp(bytes.data(), kMagicTagged, kMagicLen) == 0;
  if (!plain && !tagged) {
    in.clear();
    in.seekg(0);
    return read_csv_features(in, where);
  }

  ByteReader r(bytes, where);
  r.take(kMagicLen);
  FeatureFile file;
  file.dim = r.u32();
  const std::uint32_t count = r.u32();
  if (tagged) {
    const auto len = r.u16();
    const auto* p = r.take(len);
    file.kind_tag.assign(reinterpret_cast<const char*>(p), len);
  }
  file.ids.reserve(count);
  file.rows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u16();
    const auto* p = r.take(len);
    file.ids.emplace_back(reinterpret_cast<const char*>(p), len);
    std::vector<float> row(file.dim);
    for (auto& x : row) x = r.f32();
    file.rows.push_back(std::move(row));
  }
  if (!r.done()) throw ParseError(where + ": trailing bytes after " + std::to_string(count) + " records");
  return file;
}

void write_feature_file(const std::filesystem::path& path, const FeatureFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path.string());
  out.write(file.kind_tag.empty() ? kMagicPlain : kMagicTagged, kMagicLen);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.dim));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.ids.size()));
  if (!file.kind_tag.empty()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(file.kind_tag.size()));
    out.write(file.kind_tag.data(), static_cast<std::streamsize>(file.kind_tag.size()));
  }
  for (std::size_t i = 0; i < file.ids.size(); ++i) {
    if (file.rows[i].size() != file.dim) throw DataError("feature row length mismatch");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(file.ids[i].size()));
    out.write(file.ids[i].data(), static_cast<std::streamsize>(file.ids[i].size()));
    for (float x : file.rows[i]) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

FeatureMap load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                           const FoldedDataset* required) {
  const FeatureFile file = read_feature_file(path);
  if (!file.ids.empty() && file.dim != expected_dim) {
    throw DataError(path.string() + ": embedding dimension " + std::to_string(file.dim) +
                    ", expected " + std::to_string(expected_dim));
  }
  return to_feature_map(file, FeatureKind::embedding(expected_dim), path.string(), required);
}

FeatureMap load_feature_cache(const std::filesystem::path& path, const FoldedDataset* required) {
  const FeatureFile file = read_feature_file(path);
  FeatureKind kind = file.kind_tag.empty() ? FeatureKind::logmel(file.dim)
                                           : FeatureKind::parse(file.kind_tag);
  if (!file.ids.empty() && kind.dim != file.dim) {
    throw DataError(path.string() + ": kind tag " + kind.tag() + " disagrees with dimension " +
                    std::to_string(file.dim));
  }
  return to_feature_map(file, kind, path.string(), required);
}

void save_feature_cache(const std::filesystem::path& path, const FeatureMap& features,
                        const FeatureKind& kind) {
  FeatureFile file;
  file.kind_tag = kind.tag();
  file.dim = kind.dim;
  for (const auto& [id, v] : features) {
    if (static_cast<std::size_t>(v.values.size()) != kind.dim) {
      throw DataError("clip '" + id + "' feature length does not match " + kind.tag());
    }
    file.ids.push_back(id);
    std::vector<float> row(kind.dim);
    for (std::size_t i = 0; i < kind.dim; ++i) row[i] = static_cast<float>(v.values[static_cast<Eigen::Index>(i)]);
    file.rows.push_back(std::move(row));
  }
  write_feature_file(path, file);
}

}  // namespace avsec
