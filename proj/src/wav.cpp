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

#include "avsec/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "avsec/error.hpp"

namespace avsec {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

double read_sample(const std::uint8_t* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatFloat) {
    const std::uint32_t raw = le32(p);
    return static_cast<double>(std::bit_cast<float>(raw));
  }
  switch (bits) {
    case 16:
      return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
  return 0.0;
}

}  // namespace

MonoSignal decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw DataError("truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      block_align = le16(f + 12);
      bits = le16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40 || avail < 40) throw DataError("truncated extensible fmt chunk");
        format = le16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Some writers leave the size field unset when streaming.
      data_size = std::min<std::size_t>(size, avail);
      break;
    }
    pos = body + size + (size & 1);
  }

  if (!have_fmt) throw DataError("WAV file has no fmt chunk");
  if (!data) throw DataError("WAV file has no data chunk");
  const bool int_ok = format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && bits == 32;
  if (!int_ok && !float_ok) {
    throw DataError("unsupported WAV codec: format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits");
  }
  if (channels == 0 || rate == 0) throw DataError("WAV header has zero channels or rate");
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != channels * bytes_per_sample) {
    throw DataError("WAV block alignment " + std::to_string(block_align) +
                    " inconsistent with format");
  }

  const std::size_t frames = data_size / block_align;
  MonoSignal out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* frame = data + i * block_align;
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      acc += read_sample(frame + c * bytes_per_sample, format, bits);
    }
    out.samples[i] = acc / channels;
  }
  return out;
}

MonoSignal decode_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav16(std::span<const double> interleaved, int channels,
                                       int sample_rate) {
  if (channels < 1) throw DataError("channels must be >= 1");
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put16(out, static_cast<std::uint16_t>(channels * 2));
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (double x : interleaved) {
    const double scaled = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav16(const std::filesystem::path& path, std::span<const double> interleaved,
                 int channels, int sample_rate) {
  const auto bytes = encode_wav16(interleaved, channels, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> strip_wav_metadata(std::span<const std::uint8_t> bytes) {
  decode_wav(bytes);  // validates the layout
  std::vector<std::uint8_t> out = {'R', 'I', 'F', 'F', 0, 0, 0, 0, 'W', 'A', 'V', 'E'};
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = std::min<std::size_t>(le32(chunk + 4), bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0 || std::memcmp(chunk, "data", 4) == 0) {
      out.insert(out.end(), chunk, chunk + 4);
      put32(out, static_cast<std::uint32_t>(size));
      out.insert(out.end(), chunk + 8, chunk + 8 + size);
      if (size % 2) out.push_back(0);
    }
    pos += 8 + size + (size % 2);
  }
  const auto riff = static_cast<std::uint32_t>(out.size() - 8);
  for (int i = 0; i < 4; ++i) out[4 + i] = static_cast<std::uint8_t>((riff >> (8 * i)) & 0xFF);
  return out;
}

}  // namespace avsec
