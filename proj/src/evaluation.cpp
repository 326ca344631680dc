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

#include "avsec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "avsec/error.hpp"

namespace avsec {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  return splitmix64(seed * 8 + static_cast<std::uint64_t>(fold));
}

std::optional<FeatureSource> parse_source(std::string_view name) {
  if (name == "av" || name == "avs") return FeatureSource::kActionVector;
  if (name == "avq" || name == "av-binary") return FeatureSource::kBinaryActionVector;
  if (name == "logmel" || name == "log-mel" || name == "mel") return FeatureSource::kLogMel;
  if (name == "ae" || name == "aes" || name == "embedding") return FeatureSource::kEmbedding;
  return std::nullopt;
}

PartRecipe parse_norm(std::string_view steps) {
  PartRecipe r{false, false};
  if (steps == "none") return r;
  std::size_t start = 0;
  while (start <= steps.size()) {
    auto comma = steps.find(',', start);
    if (comma == std::string_view::npos) comma = steps.size();
    const auto item = steps.substr(start, comma - start);
    if (item == "l2") {
      r.l2 = true;
    } else if (item == "std") {
      r.standardize = true;
    } else {
      throw UsageError("unknown normalization step '" + std::string(item) + "' (l2|std|none)");
    }
    start = comma + 1;
  }
  return r;
}

std::string norm_string(const PartRecipe& r) {
  if (r.l2 && r.standardize) return "l2,std";
  if (r.l2) return "l2";
  if (r.standardize) return "std";
  return "none";
}

bool is_av(FeatureSource s) {
  return s == FeatureSource::kActionVector || s == FeatureSource::kBinaryActionVector;
}

// Re-throws the current exception with a prefix, keeping its category.
[[noreturn]] void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const LeakageError& e) {
    throw LeakageError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const UsageError& e) {
    throw UsageError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

std::string_view source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::kActionVector: return "av";
    case FeatureSource::kBinaryActionVector: return "avq";
    case FeatureSource::kLogMel: return "logmel";
    case FeatureSource::kEmbedding: return "ae";
  }
  return "av";
}

FeatureRecipe FeatureRecipe::parse(std::string_view text) {
  FeatureRecipe recipe;
  std::vector<std::optional<PartRecipe>> explicit_norms;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto plus = text.find('+', start);
    if (plus == std::string_view::npos) plus = text.size();
    std::string_view item = text.substr(start, plus - start);
    std::optional<PartRecipe> norm;
    if (auto colon = item.find(':'); colon != std::string_view::npos) {
      norm = parse_norm(item.substr(colon + 1));
      item = item.substr(0, colon);
    }
    const auto source = parse_source(item);
    if (!source) {
      throw UsageError("unknown feature '" + std::string(item) + "' in recipe '" +
                       std::string(text) + "' (av|avq|logmel|ae)");
    }
    for (const auto& p : recipe.parts) {
      if (p.source == *source) {
        throw UsageError("feature '" + std::string(item) + "' repeated in recipe");
      }
    }
    recipe.parts.push_back({*source, {}});
    explicit_norms.push_back(norm);
    start = plus + 1;
  }
  if (recipe.parts.empty()) throw UsageError("empty recipe");
  if (recipe.uses(FeatureSource::kActionVector) && recipe.uses(FeatureSource::kBinaryActionVector)) {
    throw UsageError("recipe cannot use both graded and binary action vectors");
  }

  const bool av_ae_only = recipe.parts.size() == 2 && recipe.uses(FeatureSource::kEmbedding) &&
                          (is_av(recipe.parts[0].source) || is_av(recipe.parts[1].source));
  for (std::size_t i = 0; i < recipe.parts.size(); ++i) {
    if (explicit_norms[i]) {
      recipe.parts[i].norm = *explicit_norms[i];
    } else {
      recipe.parts[i].norm = av_ae_only ? PartRecipe{false, true} : PartRecipe{true, true};
    }
  }
  return recipe;
}

std::string FeatureRecipe::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "+";
    out += std::string(source_name(parts[i].source)) + ":" + norm_string(parts[i].norm);
  }
  return out;
}

std::string FeatureRecipe::short_name() const {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "+";
    out += source_name(parts[i].source);
  }
  return out;
}

bool FeatureRecipe::uses(FeatureSource s) const {
  return std::any_of(parts.begin(), parts.end(), [&](const Part& p) { return p.source == s; });
}

void check_sources(const FeatureRecipe& recipe, const FeatureSources& src) {
  for (const auto& p : recipe.parts) {
    const bool empty = is_av(p.source) ? src.avs.empty()
                       : p.source == FeatureSource::kLogMel ? src.logmel.empty()
                                                            : src.embeddings.empty();
    if (empty) {
      throw DataError("recipe '" + recipe.short_name() + "' needs '" +
                      std::string(source_name(p.source)) + "' features but none were supplied");
    }
  }
}

DesignMatrix build_design_matrix(const FoldedDataset& ds, const FeatureSources& src,
                                 const FeatureRecipe& recipe) {
  check_sources(recipe, src);
  DesignMatrix dm;
  std::vector<FeatureVector> rows;
  rows.reserve(ds.size());
  for (const ClipMeta& c : ds.clips()) {
    std::vector<FeatureVector> parts;
    for (const auto& p : recipe.parts) {
      if (is_av(p.source)) {
        auto it = src.avs.find(c.clip_id);
        if (it == src.avs.end()) throw DataError("clip '" + c.clip_id + "' has no action vector");
        if (it->second.scale != AvScale::kGraded) {
          throw DataError("clip '" + c.clip_id + "': recipes expect graded action vectors");
        }
        parts.push_back(from_action_vector(p.source == FeatureSource::kBinaryActionVector
                                               ? quantize_av(it->second)
                                               : it->second));
      } else {
        const FeatureMap& m = p.source == FeatureSource::kLogMel ? src.logmel : src.embeddings;
        auto it = m.find(c.clip_id);
        if (it == m.end()) {
          throw DataError("clip '" + c.clip_id + "' has no '" + std::string(source_name(p.source)) +
                          "' features");
        }
        parts.push_back(it->second);
      }
    }
    std::vector<FusionInput> inputs;
    for (std::size_t i = 0; i < parts.size(); ++i) inputs.push_back({&parts[i], recipe.parts[i].norm});
    rows.push_back(fuse(inputs));
    validate(rows.back());
    dm.clip_ids.push_back(c.clip_id);
    dm.labels.push_back(c.target);
    dm.folds.push_back(c.fold);
  }

  if (rows.empty()) throw DataError("dataset is empty");
  dm.kind = rows.front().kind;
  dm.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dm.kind.dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].kind != dm.kind) {
      throw DataError("clip '" + rows[i].clip_id + "' has feature kind " + rows[i].kind.tag() +
                      ", expected " + dm.kind.tag());
    }
    dm.x.row(static_cast<Eigen::Index>(i)) = rows[i].values.transpose();
  }
  for (const auto& part : dm.kind.parts) {
    dm.standardize_mask.insert(dm.standardize_mask.end(), part.dim, part.recipe.standardize);
  }
  return dm;
}

std::vector<CvSplit> fold_splits(const DesignMatrix& dm) {
  std::vector<CvSplit> splits;
  for (int fold = 1; fold <= kNumFolds; ++fold) {
    CvSplit s;
    s.test_fold = fold;
    for (std::size_t i = 0; i < dm.folds.size(); ++i) {
      (dm.folds[i] == fold ? s.test : s.train).push_back(i);
    }
    splits.push_back(std::move(s));
  }
  return splits;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

TrainedModel fit_split(const DesignMatrix& dm, const std::vector<std::size_t>& train,
                       const ClassifierSpec& spec, std::uint64_t model_seed,
                       const std::string& recipe) {
  const Eigen::MatrixXd xtr = take_rows(dm.x, train);
  const auto ids = take(dm.clip_ids, train);
  const auto folds = take(dm.folds, train);
  TrainedModel model;
  model.kind = dm.kind;
  model.recipe = recipe;
  model.standardizer = Standardizer::fit(xtr, ids, std::set<int>(folds.begin(), folds.end()),
                                         dm.standardize_mask);
  const Eigen::MatrixXd z = model.standardizer->apply_rows(xtr);
  const auto y = take(dm.labels, train);
  if (spec.kind == ClassifierKind::kSvm) {
    model.classifier = train_linear_svm(z, y, spec.svm);
  } else {
    TrainConfig cfg = spec.dnn;
    cfg.seed = model_seed;
    model.classifier = train_mlp(z, y, cfg);
  }
  return model;
}

}  // namespace

CvResult run_cv_splits(const DesignMatrix& dm, const std::vector<CvSplit>& splits,
                       int label_space, const ClassifierSpec& spec, std::uint64_t seed,
                       const CvOptions& opts) {
  CvResult result;
  result.run_seed = seed;
  result.classifier = spec;
  result.confusion = Eigen::MatrixXi::Zero(label_space, label_space);
  result.per_fold_accuracy.assign(splits.size(), 0.0);
  std::vector<Eigen::MatrixXi> fold_conf(splits.size());

  parallel_for(splits.size(), opts.jobs, [&](std::size_t s) {
    const CvSplit& split = splits[s];
    try {
      if (split.train.empty() || split.test.empty()) {
        throw DataError("empty train or test set");
      }
      TrainedModel model = fit_split(dm, split.train, spec, fold_seed(seed, split.test_fold), "");
      model.standardizer->check_disjoint(take(dm.clip_ids, split.test));
      const Prediction pred = model.predict(take_rows(dm.x, split.test));
      Eigen::MatrixXi conf = Eigen::MatrixXi::Zero(label_space, label_space);
      int correct = 0;
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        const int truth = dm.labels[split.test[i]];
        const int guess = pred.labels[i];
        ++conf(truth, guess);
        correct += truth == guess;
      }
      result.per_fold_accuracy[s] = static_cast<double>(correct) / static_cast<double>(split.test.size());
      fold_conf[s] = std::move(conf);
    } catch (...) {
      rethrow_with_context("fold " + std::to_string(split.test_fold) + ": ");
    }
  });

  for (const auto& c : fold_conf) result.confusion += c;
  const auto total = result.confusion.sum();
  result.n_test = static_cast<std::size_t>(total);
  result.overall_accuracy =
      total == 0 ? 0.0 : static_cast<double>(result.confusion.trace()) / static_cast<double>(total);
  return result;
}

CvResult run_cv(const FoldedDataset& ds, const FeatureSources& src, const FeatureRecipe& recipe,
                const ClassifierSpec& spec, std::uint64_t seed, const CvOptions& opts) {
  const DesignMatrix dm = build_design_matrix(ds, src, recipe);
  CvResult r = run_cv_splits(dm, fold_splits(dm), ds.label_space(), spec, seed, opts);
  r.recipe = recipe.to_string();
  return r;
}

TrainedModel train_on_folds(const DesignMatrix& dm, const std::set<int>& folds,
                            const ClassifierSpec& spec, std::uint64_t seed,
                            const std::string& recipe) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dm.folds.size(); ++i) {
    if (folds.contains(dm.folds[i])) rows.push_back(i);
  }
  if (rows.empty()) throw DataError("no clips in the requested training folds");
  return fit_split(dm, rows, spec, seed, recipe);
}

RepeatedRunSummary summarize(std::vector<CvResult> runs) {
  RepeatedRunSummary s;
  s.n_runs = static_cast<int>(runs.size());
  if (runs.empty()) return s;
  double sum = 0.0;
  for (const auto& r : runs) sum += r.overall_accuracy;
  s.mean = sum / static_cast<double>(runs.size());
  double var = 0.0;
  for (const auto& r : runs) var += (r.overall_accuracy - s.mean) * (r.overall_accuracy - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(runs.size()));
  s.runs = std::move(runs);
  return s;
}

RepeatedRunSummary repeated_runs(const FoldedDataset& ds, const FeatureSources& src,
                                 const FeatureRecipe& recipe, const ClassifierSpec& spec,
                                 std::uint64_t base_seed, int n_runs, int jobs) {
  if (n_runs < 2) throw UsageError("repeated runs need n >= 2");
  const DesignMatrix dm = build_design_matrix(ds, src, recipe);
  const auto splits = fold_splits(dm);
  std::vector<CvResult> runs(static_cast<std::size_t>(n_runs));
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    try {
      runs[i] = run_cv_splits(dm, splits, ds.label_space(), spec, base_seed + i);
      runs[i].recipe = recipe.to_string();
    } catch (...) {
      rethrow_with_context("run " + std::to_string(i) + ": ");
    }
  });
  return summarize(std::move(runs));
}

namespace {

RepeatedRunSummary runs_or_single(const FoldedDataset& ds, const FeatureSources& src,
                                  const FeatureRecipe& recipe, const ClassifierSpec& spec,
                                  std::uint64_t seed, int n_runs, int jobs) {
  if (n_runs < 1) throw UsageError("need at least one run");
  if (n_runs == 1) {
    return summarize({run_cv(ds, src, recipe, spec, seed, CvOptions{jobs})});
  }
  return repeated_runs(ds, src, recipe, spec, seed, n_runs, jobs);
}

}  // namespace

std::set<int> top_classes_for_action(const FoldedDataset& ds, const AvMap& avs,
                                     std::string_view action, std::size_t count) {
  const auto a = ActionTaxonomy::standard().index_of(action);
  if (!a) throw UsageError("unknown action '" + std::string(action) + "'");
  const ClassAvMatrix m = class_average_avs(ds, avs);
  std::vector<std::size_t> order(m.targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return m.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(*a)) >
           m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*a));
  });
  std::set<int> out;
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) out.insert(m.targets[order[i]]);
  return out;
}

PairedResult ablate_classes(const FoldedDataset& ds, const std::set<int>& removed,
                            const FeatureSources& src, const FeatureRecipe& recipe,
                            const ClassifierSpec& spec, std::uint64_t seed, int n_runs,
                            int jobs) {
  const auto classes = ds.classes();
  for (int c : removed) {
    if (!std::binary_search(classes.begin(), classes.end(), c)) {
      throw UsageError("class " + std::to_string(c) + " is not in the dataset");
    }
  }
  if (classes.size() - removed.size() < 2) {
    throw UsageError("ablation must leave at least 2 classes");
  }
  const FoldedDataset reduced = ds.without_classes(removed);
  PairedResult p;
  p.label_a = std::to_string(classes.size()) + " classes";
  p.label_b = std::to_string(classes.size() - removed.size()) + " classes";
  p.a = runs_or_single(ds, src, recipe, spec, seed, n_runs, jobs);
  p.b = runs_or_single(reduced, src, recipe, spec, seed, n_runs, jobs);
  return p;
}

PairedResult quantization_ablation(const FoldedDataset& ds, const FeatureSources& src,
                                   const ClassifierSpec& spec, std::uint64_t seed, int n_runs,
                                   int jobs) {
  PairedResult p;
  p.label_a = "av+ae";
  p.label_b = "avq+ae";
  p.a = runs_or_single(ds, src, FeatureRecipe::parse("av+ae"), spec, seed, n_runs, jobs);
  p.b = runs_or_single(ds, src, FeatureRecipe::parse("avq+ae"), spec, seed, n_runs, jobs);
  return p;
}

std::vector<ConfusionPair> confusion_report(const CvResult& r,
                                           const std::map<int, std::string>& names) {
  std::vector<ConfusionPair> out;
  for (Eigen::Index t = 0; t < r.confusion.rows(); ++t) {
    for (Eigen::Index p = 0; p < r.confusion.cols(); ++p) {
      if (t == p || r.confusion(t, p) == 0) continue;
      ConfusionPair c;
      c.truth = static_cast<int>(t);
      c.predicted = static_cast<int>(p);
      c.count = r.confusion(t, p);
      if (auto it = names.find(c.truth); it != names.end()) c.truth_name = it->second;
      if (auto it = names.find(c.predicted); it != names.end()) c.predicted_name = it->second;
      out.push_back(std::move(c));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ConfusionPair& a, const ConfusionPair& b) { return a.count > b.count; });
  return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard lock(m);
            if (next >= n) return;
            i = next++;
          }
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace avsec
