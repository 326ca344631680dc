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

#include "avsec/csv.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "avsec/error.hpp"

namespace avsec::csv {

std::optional<Row> Reader::next() {
  std::string line;
  while (true) {
    if (!std::getline(in_, line)) return std::nullopt;
    line_ = next_line_++;
    if (first_) {
      first_ = false;
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) break;
  }

  Row row;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (true) {
    if (i == line.size()) {
      if (!quoted) break;
      // Quoted field spans a newline.
      std::string more;
      if (!std::getline(in_, more)) {
        throw ParseError("csv line " + std::to_string(line_) +
                         ": unterminated quoted field");
      }
      ++next_line_;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      field.push_back('\n');
      line = std::move(more);
      i = 0;
      continue;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
    ++i;
  }
  row.push_back(std::move(field));
  return row;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const Row& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(std::string_view field, std::string_view what) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw ParseError("invalid number for " + std::string(what) + ": '" +
                     std::string(field) + "'");
  }
  return v;
}

long long parse_int(std::string_view field, std::string_view what) {
  long long v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw ParseError("invalid integer for " + std::string(what) + ": '" +
                     std::string(field) + "'");
  }
  return v;
}

std::optional<std::size_t> column(const Row& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace avsec::csv
