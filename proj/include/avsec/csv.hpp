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

#ifndef AVSEC_CSV_HPP_
#define AVSEC_CSV_HPP_

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avsec::csv {

using Row = std::vector<std::string>;

// Minimal RFC 4180 reader: comma separator, double-quote quoting, CRLF or LF
// line endings. A leading UTF-8 BOM on the first line is dropped.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Returns std::nullopt at end of input. Blank lines are skipped.
  std::optional<Row> next();

  // 1-based line number of the most recently returned row.
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t next_line_ = 1;
  bool first_ = true;
};

// Quotes a field only when it contains a separator, quote or newline.
std::string escape(std::string_view field);

// Joins fields with commas, escaping as needed. No trailing newline.
std::string join(const Row& fields);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

// Strict numeric parsing of a whole field; throws ParseError naming `what`.
double parse_double(std::string_view field, std::string_view what);
long long parse_int(std::string_view field, std::string_view what);

// Index of `name` in a header row, or std::nullopt.
std::optional<std::size_t> column(const Row& header, std::string_view name);

}  // namespace avsec::csv

#endif  // AVSEC_CSV_HPP_
