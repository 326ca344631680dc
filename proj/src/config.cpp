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

#include "avsec/config.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>
#include <toml.hpp>

#include "avsec/csv.hpp"
#include "avsec/error.hpp"

namespace avsec {
namespace {

void flatten(const toml::table& t, const std::string& prefix,
             std::map<std::string, std::string, std::less<>>& out) {
  for (const auto& [k, node] : t) {
    const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
    if (const auto* sub = node.as_table()) {
      flatten(*sub, key, out);
    } else if (const auto* s = node.as_string()) {
      out[key] = s->get();
    } else if (const auto* i = node.as_integer()) {
      out[key] = std::to_string(i->get());
    } else if (const auto* f = node.as_floating_point()) {
      out[key] = csv::format_double(f->get());
    } else if (const auto* b = node.as_boolean()) {
      out[key] = b->get() ? "true" : "false";
    } else {
      throw UsageError("config key '" + key + "' must be a scalar");
    }
  }
}


}  // namespace

Settings::Settings() : env_(process_env()) {}

Settings::EnvLookup Settings::process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

std::string Settings::env_name(std::string_view key) {
  std::string out = "AVSEC_";
  for (char c : key) {
    out.push_back(c == '.' || c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

Settings Settings::from_file(const std::filesystem::path& path, EnvLookup env) {
  try {
    const toml::table t = toml::parse_file(path.string());
    Settings s;
    flatten(t, "", s.file_);
    if (env) s.env_ = std::move(env);
    s.source_ = path.string();
    return s;
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
    throw UsageError(msg.str());
  }
}

Settings Settings::from_string(std::string_view text, std::string_view source, EnvLookup env) {
  try {
    const toml::table t = toml::parse(text, source);
    Settings s;
    flatten(t, "", s.file_);
    if (env) s.env_ = std::move(env);
    s.source_ = source;
    return s;
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw UsageError(msg.str());
  }
}

std::optional<std::string> Settings::raw(std::string_view key) const {
  if (env_) {
    if (auto v = env_(env_name(key))) return v;
  }
  if (auto it = file_.find(key); it != file_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::string> Settings::get_string(std::string_view key) const { return raw(key); }

std::optional<long long> Settings::get_int(std::string_view key) const {
  auto v = raw(key);
  if (!v) return std::nullopt;
  try {
    return csv::parse_int(*v, key);
  } catch (const ParseError& e) {
    throw UsageError(std::string("config ") + e.what());
  }
}

std::optional<double> Settings::get_double(std::string_view key) const {
  auto v = raw(key);
  if (!v) return std::nullopt;
  try {
    return csv::parse_double(*v, key);
  } catch (const ParseError& e) {
    throw UsageError(std::string("config ") + e.what());
  }
}

std::optional<bool> Settings::get_bool(std::string_view key) const {
  auto v = raw(key);
  if (!v) return std::nullopt;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw UsageError("config " + std::string(key) + ": expected a boolean, got '" + *v + "'");
}

DspConfig dsp_config_from(const Settings& s, DspConfig cfg) {
  if (auto v = s.get_int("dsp.target_sample_rate")) cfg.target_sample_rate = static_cast<int>(*v);
  if (auto v = s.get_int("dsp.fft_size")) cfg.fft_size = static_cast<int>(*v);
  if (auto v = s.get_int("dsp.hop")) cfg.hop = static_cast<int>(*v);
  if (auto v = s.get_int("dsp.n_mels")) cfg.n_mels = static_cast<int>(*v);
  if (auto v = s.get_string("dsp.mel_scale")) {
    if (*v == "slaney") {
      cfg.mel_scale = MelScale::kSlaney;
    } else if (*v == "htk") {
      cfg.mel_scale = MelScale::kHtk;
    } else {
      throw UsageError("dsp.mel_scale must be slaney or htk");
    }
  }
  if (auto v = s.get_double("dsp.f_min")) cfg.f_min = *v;
  if (auto v = s.get_double("dsp.f_max")) cfg.f_max = *v;
  if (auto v = s.get_double("dsp.power")) cfg.power = *v;
  if (auto v = s.get_double("dsp.log_floor")) cfg.log_floor = *v;
  if (auto v = s.get_string("dsp.db_ref")) {
    if (*v == "unity") {
      cfg.db_ref = DbReference::kUnity;
    } else if (*v == "max") {
      cfg.db_ref = DbReference::kMax;
    } else {
      throw UsageError("dsp.db_ref must be unity or max");
    }
  }
  if (auto v = s.get_double("dsp.top_db")) cfg.top_db = *v;
  cfg.validate();
  return cfg;
}

}  // namespace avsec
