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

#ifndef AVSEC_WAV_HPP_
#define AVSEC_WAV_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace avsec {

struct MonoSignal {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;
};

// Decodes RIFF/WAVE with PCM 16/24/32-bit integer or 32-bit IEEE float data,
// including WAVE_FORMAT_EXTENSIBLE. Channels are averaged to mono.
MonoSignal decode_wav(std::span<const std::uint8_t> bytes);
MonoSignal decode_wav(const std::filesystem::path& path);

// Rebuilds the file with only its "fmt " and "data" chunks, dropping LIST,
// INFO and any other metadata. Throws DataError on a non-WAV input.
std::vector<std::uint8_t> strip_wav_metadata(std::span<const std::uint8_t> bytes);

// Interleaved samples in [-1, 1], written as 16-bit PCM.
std::vector<std::uint8_t> encode_wav16(std::span<const double> interleaved, int channels,
                                       int sample_rate);
void write_wav16(const std::filesystem::path& path, std::span<const double> interleaved,
                 int channels, int sample_rate);

}  // namespace avsec

#endif  // AVSEC_WAV_HPP_
