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

#ifndef AVSEC_LEDGER_HPP_
#define AVSEC_LEDGER_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avsec/evaluation.hpp"

namespace avsec {

// One line of the results ledger (JSON lines): a single CV run.
struct ResultRecord {
  std::string recipe;       // short name, "av+ae"
  std::string recipe_spec;  // with normalization, "av:std+ae:std"
  std::string classifier;   // "svm" | "dnn"
  std::string tag = "main";  // "main" rows feed the accuracy table
  int run = 0;
  std::uint64_t seed = 0;
  int n_classes = 0;
  std::size_t n_test = 0;
  double overall_accuracy = 0.0;
  std::vector<double> per_fold_accuracy;
  std::map<std::string, std::string> inputs;  // path -> sha256

  bool operator==(const ResultRecord&) const = default;
};

std::string to_json_line(const ResultRecord& r);
ResultRecord parse_result_line(std::string_view line);  // throws ParseError

std::vector<ResultRecord> read_results(std::istream& in, std::string_view source = "");
std::vector<ResultRecord> load_results(const std::filesystem::path& path);
void write_results(const std::vector<ResultRecord>& records, std::ostream& out);

std::vector<ResultRecord> records_from(const RepeatedRunSummary& s, const FeatureRecipe& recipe,
                                       int n_classes, const std::string& tag);

struct TableCell {
  std::size_t n_runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct TableRow {
  std::string label;
  std::string recipe;
  std::optional<TableCell> svm;
  std::optional<TableCell> dnn;
};

// Seven rows in the published order; runs tagged "main" are averaged per
// (recipe, classifier). Missing cells stay empty.
std::vector<TableRow> accuracy_table(const std::vector<ResultRecord>& records);

enum class ReportFormat { kTable, kCsv };
ReportFormat parse_report_format(std::string_view s);
void write_report(const std::vector<TableRow>& rows, ReportFormat fmt, std::ostream& out);

}  // namespace avsec

#endif  // AVSEC_LEDGER_HPP_
