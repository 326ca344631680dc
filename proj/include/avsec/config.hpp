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

#ifndef AVSEC_CONFIG_HPP_
#define AVSEC_CONFIG_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "avsec/dsp.hpp"

namespace avsec {

// Layered key/value settings: environment over TOML file. Keys are dotted
// ("dsp.hop"); the environment name is AVSEC_ + key upper-cased with dots
// replaced by underscores ("AVSEC_DSP_HOP"). Command-line flags are applied
// by the caller on top.
class Settings {
 public:
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  Settings();  // no file; process environment
  static Settings from_file(const std::filesystem::path& path, EnvLookup env = {});
  static Settings from_string(std::string_view toml, std::string_view source = "<string>",
                              EnvLookup env = {});

  std::optional<std::string> get_string(std::string_view key) const;
  std::optional<long long> get_int(std::string_view key) const;
  std::optional<double> get_double(std::string_view key) const;
  std::optional<bool> get_bool(std::string_view key) const;

  static std::string env_name(std::string_view key);
  static EnvLookup process_env();

 private:
  std::map<std::string, std::string, std::less<>> file_;  // flattened scalars
  EnvLookup env_;
  std::string source_;

  std::optional<std::string> raw(std::string_view key) const;
};

// [dsp] section: target_sample_rate, fft_size, hop, n_mels, mel_scale
// (slaney|htk), f_min, f_max, power, log_floor, db_ref (unity|max), top_db.
DspConfig dsp_config_from(const Settings& s, DspConfig base = {});

}  // namespace avsec

#endif  // AVSEC_CONFIG_HPP_
