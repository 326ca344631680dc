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

#include "avsec/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>

#include "avsec/csv.hpp"
#include "avsec/error.hpp"

namespace avsec {

using json = nlohmann::json;

std::string to_json_line(const ResultRecord& r) {
  json j;
  j["recipe"] = r.recipe;
  j["recipe_spec"] = r.recipe_spec;
  j["classifier"] = r.classifier;
  j["tag"] = r.tag;
  j["run"] = r.run;
  j["seed"] = r.seed;
  j["n_classes"] = r.n_classes;
  j["n_test"] = r.n_test;
  j["overall_accuracy"] = r.overall_accuracy;
  j["per_fold_accuracy"] = r.per_fold_accuracy;
  j["inputs"] = r.inputs;
  return j.dump();
}

ResultRecord parse_result_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    ResultRecord r;
    r.recipe = j.at("recipe").get<std::string>();
    r.recipe_spec = j.value("recipe_spec", r.recipe);
    r.classifier = j.at("classifier").get<std::string>();
    r.tag = j.value("tag", "main");
    r.run = j.value("run", 0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.n_classes = j.value("n_classes", 0);
    r.n_test = j.value("n_test", std::size_t{0});
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    r.per_fold_accuracy = j.value("per_fold_accuracy", std::vector<double>{});
    r.inputs = j.value("inputs", std::map<std::string, std::string>{});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad result record: ") + e.what());
  }
}

std::vector<ResultRecord> read_results(std::istream& in, std::string_view source) {
  std::vector<ResultRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_result_line(line));
    } catch (const ParseError& e) {
      throw ParseError(std::string(source) + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ResultRecord> load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_results(in, path.string());
}

void write_results(const std::vector<ResultRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<ResultRecord> records_from(const RepeatedRunSummary& s, const FeatureRecipe& recipe,
                                       int n_classes, const std::string& tag) {
  std::vector<ResultRecord> out;
  for (std::size_t i = 0; i < s.runs.size(); ++i) {
    const CvResult& cv = s.runs[i];
    ResultRecord r;
    r.recipe = recipe.short_name();
    r.recipe_spec = recipe.to_string();
    r.classifier = std::string(classifier_name(cv.classifier.kind));
    r.tag = tag;
    r.run = static_cast<int>(i);
    r.seed = cv.run_seed;
    r.n_classes = n_classes;
    r.n_test = cv.n_test;
    r.overall_accuracy = cv.overall_accuracy;
    r.per_fold_accuracy = cv.per_fold_accuracy;
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct RowSpec {
  const char* label;
  const char* recipe;
};

constexpr RowSpec kRows[] = {
    {"log-mel spectrograms", "logmel"},
    {"AVs (Action Vectors)", "av"},
    {"AEs (Audio Embeddings)", "ae"},
    {"AEs + log-mel", "ae+logmel"},
    {"AVs + log-mel", "av+logmel"},
    {"AVs + AEs", "av+ae"},
    {"AVs + AEs + log-mel", "av+ae+logmel"},
};

// Order-insensitive key: "logmel+ae" and "ae+logmel" name the same row.
std::string canonical(std::string_view recipe) {
  const FeatureRecipe r = FeatureRecipe::parse(recipe);
  std::vector<std::string> names;
  for (const auto& p : r.parts) names.emplace_back(source_name(p.source));
  std::sort(names.begin(), names.end());
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
  return out;
}

std::optional<TableCell> cell(const std::vector<ResultRecord>& records, const std::string& key,
                              std::string_view classifier) {
  std::vector<double> acc;
  for (const auto& r : records) {
    if (r.tag != "main" || r.classifier != classifier) continue;
    if (canonical(r.recipe) == key) acc.push_back(r.overall_accuracy);
  }
  if (acc.empty()) return std::nullopt;
  TableCell c;
  c.n_runs = acc.size();
  for (double a : acc) c.mean += a;
  c.mean /= static_cast<double>(acc.size());
  for (double a : acc) c.stddev += (a - c.mean) * (a - c.mean);
  c.stddev = std::sqrt(c.stddev / static_cast<double>(acc.size()));
  return c;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

std::string cell_text(const std::optional<TableCell>& c) {
  if (!c) return "-";
  std::string s = percent(c->mean);
  if (c->n_runs > 1) s += " (sd " + percent(c->stddev) + ")";
  return s;
}

}  // namespace

std::vector<TableRow> accuracy_table(const std::vector<ResultRecord>& records) {
  std::vector<TableRow> rows;
  for (const auto& spec : kRows) {
    TableRow row;
    row.label = spec.label;
    row.recipe = spec.recipe;
    const std::string key = canonical(spec.recipe);
    row.svm = cell(records, key, "svm");
    row.dnn = cell(records, key, "dnn");
    rows.push_back(std::move(row));
  }
  return rows;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "table") return ReportFormat::kTable;
  if (s == "csv") return ReportFormat::kCsv;
  throw UsageError("unknown report format '" + std::string(s) + "' (table|csv)");
}

void write_report(const std::vector<TableRow>& rows, ReportFormat fmt, std::ostream& out) {
  if (fmt == ReportFormat::kCsv) {
    out << "input_features,recipe,linear_svm,svm_runs,dnn,dnn_sd,dnn_runs\n";
    for (const auto& r : rows) {
      csv::Row f = {r.label, r.recipe};
      f.push_back(r.svm ? csv::format_double(r.svm->mean) : "");
      f.push_back(r.svm ? std::to_string(r.svm->n_runs) : "0");
      f.push_back(r.dnn ? csv::format_double(r.dnn->mean) : "");
      f.push_back(r.dnn ? csv::format_double(r.dnn->stddev) : "");
      f.push_back(r.dnn ? std::to_string(r.dnn->n_runs) : "0");
      out << csv::join(f) << '\n';
    }
    return;
  }
  std::size_t w0 = std::string_view("Input Features").size();
  std::size_t w1 = std::string_view("linear SVM").size();
  for (const auto& r : rows) {
    w0 = std::max(w0, r.label.size());
    w1 = std::max(w1, cell_text(r.svm).size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  out << pad("Input Features", w0) << " | " << pad("linear SVM", w1) << " | DNN\n";
  out << std::string(w0, '-') << "-+-" << std::string(w1, '-') << "-+-" << std::string(12, '-') << '\n';
  for (const auto& r : rows) {
    out << pad(r.label, w0) << " | " << pad(cell_text(r.svm), w1) << " | " << cell_text(r.dnn) << '\n';
  }
}

}  // namespace avsec
