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

#include <doctest.h>

#include <cmath>
#include <bit>
#include <numbers>

#include "avsec/dsp.hpp"
#include "avsec/error.hpp"
#include "avsec/rng.hpp"
#include "avsec/wav.hpp"
#include "../support/synthetic.hpp"

using namespace avsec;

namespace {

std::vector<double> tone(double hz, int rate, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return x;
}

// Frequency of the largest DFT magnitude (naive DFT over a band).
double peak_hz(const std::vector<double>& x, int rate, double lo, double hi) {
  const double n = static_cast<double>(x.size());
  double best = 0, best_hz = 0;
  for (double hz = lo; hz <= hi; hz += rate / n) {
    double re = 0, im = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ph = 2 * std::numbers::pi * hz * static_cast<double>(i) / rate;
      re += x[i] * std::cos(ph);
      im -= x[i] * std::sin(ph);
    }
    const double mag = re * re + im * im;
    if (mag > best) {
      best = mag;
      best_hz = hz;
    }
  }
  return best_hz;
}

}  // namespace

TEST_CASE("mel scale conversions match the reference implementation") {
  CHECK(hz_to_mel(1000.0, MelScale::kSlaney) == doctest::Approx(15.0));
  CHECK(hz_to_mel(440.0, MelScale::kSlaney) == doctest::Approx(6.6));
  CHECK(hz_to_mel(6000.0, MelScale::kSlaney) == doctest::Approx(41.06128214340672));
  CHECK(hz_to_mel(1000.0, MelScale::kHtk) == doctest::Approx(999.9855371396244));
  for (double hz : {0.0, 100.0, 999.0, 1000.0, 4000.0, 11025.0}) {
    CHECK(mel_to_hz(hz_to_mel(hz, MelScale::kSlaney), MelScale::kSlaney) == doctest::Approx(hz));
    CHECK(mel_to_hz(hz_to_mel(hz, MelScale::kHtk), MelScale::kHtk) == doctest::Approx(hz));
  }
}

TEST_CASE("slaney filterbank matches librosa defaults") {
  const Eigen::MatrixXd fb = mel_filterbank(DspConfig{});
  REQUIRE(fb.rows() == 128);
  REQUIRE(fb.cols() == 1025);
  // librosa stores float32 filters; tolerances cover that rounding.
  CHECK(fb(0, 1) == doctest::Approx(0.016182853).epsilon(1e-6));
  CHECK(fb.row(10).maxCoeff() == doctest::Approx(0.033060946).epsilon(1e-6));
  Eigen::Index arg;
  fb.row(10).maxCoeff(&arg);
  CHECK(arg == 26);
  CHECK(fb.sum() == doctest::Approx(11.886681).epsilon(1e-6));
  CHECK(fb.colwise().sum().maxCoeff() == doctest::Approx(0.038769327).epsilon(1e-6));

  DspConfig htk;
  htk.n_mels = 40;
  htk.mel_scale = MelScale::kHtk;
  const Eigen::MatrixXd fh = mel_filterbank(htk);
  CHECK(fh.sum() == doctest::Approx(3.7146942615509033).epsilon(1e-6));
  fh.row(5).maxCoeff(&arg);
  CHECK(arg == 33);
}

TEST_CASE("log-mel of a three-tone signal matches librosa (reflect padding)") {
  const int sr = 22050;
  std::vector<double> y(22050);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    y[i] = 0.5 * std::sin(2 * std::numbers::pi * 440 * t) + 0.25 * std::sin(2 * std::numbers::pi * 3000 * t) +
           0.1 * std::cos(2 * std::numbers::pi * 7000 * t);
  }
  const Eigen::MatrixXd db = log_mel(y, DspConfig{});
  REQUIRE(db.rows() == 128);
  REQUIRE(db.cols() == 44);
  const Eigen::VectorXd m = temporal_mean(db);
  const std::pair<int, double> expected[] = {
      {0, -67.72900499300609},  {5, -58.806008469690966}, {20, -33.11718204943149},
      {38, -76.76808396636935}, {60, -92.66339539182232}, {90, -89.92694815002923},
      {127, -93.45356848981733}};
  for (const auto& [band, value] : expected) {
    CAPTURE(band);
    CHECK(m[band] == doctest::Approx(value).epsilon(2e-5));
  }
  CHECK(m.mean() == doctest::Approx(-69.51898760035319).epsilon(2e-6));
  CHECK(db(20, 0) == doctest::Approx(13.311436479498333).epsilon(2e-6));
}

TEST_CASE("signals shorter than the window pad by repeated reflection") {
  const auto y = tone(1000, 22050, 1000);
  const Eigen::MatrixXd db = log_mel(y, DspConfig{});
  CHECK(db.cols() == 2);
  CHECK(db.mean() == doctest::Approx(-5.894283653682237).epsilon(1e-5));
  Eigen::Index arg;
  temporal_mean(db).maxCoeff(&arg);
  CHECK(arg == 38);
}

TEST_CASE("1 kHz tone peaks in the band centred nearest 1 kHz") {
  const Eigen::VectorXd m = temporal_mean(log_mel(tone(1000, 22050, 22050), DspConfig{}));
  Eigen::Index arg;
  m.maxCoeff(&arg);
  const auto edges = mel_band_edges(128, 0, 11025, MelScale::kSlaney);
  std::size_t nearest = 0;
  for (std::size_t b = 0; b < 128; ++b) {
    if (std::abs(edges[b + 1] - 1000) < std::abs(edges[nearest + 1] - 1000)) nearest = b;
  }
  CHECK(nearest == 38);  // 1006.15 Hz
  CHECK(arg == static_cast<Eigen::Index>(nearest));
}

TEST_CASE("log-mel invariants") {
  const DspConfig cfg;
  SUBCASE("silence sits at the floor") {
    const Eigen::MatrixXd db = log_mel(std::vector<double>(5000, 0.0), cfg);
    CHECK(db.cols() == 1 + 5000 / 512);
    CHECK((db.array() == -100.0).all());
  }
  SUBCASE("gain shifts every cell by 20 log10(g)") {
    Rng rng(4);
    std::vector<double> x(8000);
    for (auto& v : x) v = normal01(rng) * 0.1;
    std::vector<double> g = x;
    for (auto& v : g) v *= 3.0;
    const Eigen::MatrixXd d = log_mel(g, cfg) - log_mel(x, cfg);
    CHECK(d.minCoeff() == doctest::Approx(20 * std::log10(3.0)).epsilon(1e-9));
    CHECK(d.maxCoeff() == doctest::Approx(20 * std::log10(3.0)).epsilon(1e-9));
  }
  SUBCASE("white noise: mel energy does not exceed spectrogram energy") {
    Rng rng(8);
    std::vector<double> x(4096);
    for (auto& v : x) v = normal01(rng);
    const Eigen::MatrixXd p = power_spectrogram(x, cfg);
    const Eigen::MatrixXd mel = mel_filterbank(cfg) * p;
    CHECK(mel.sum() <= p.sum());
  }
  SUBCASE("empty signal is an error") {
    CHECK_THROWS(log_mel(std::vector<double>{}, cfg));
  }
  SUBCASE("top_db clips below the peak") {
    DspConfig c = cfg;
    c.top_db = 80.0;
    const Eigen::MatrixXd db = log_mel(tone(440, 22050, 4096), c);
    CHECK(db.minCoeff() >= db.maxCoeff() - 80.0 - 1e-9);
  }
}

TEST_CASE("temporal mean") {
  Eigen::MatrixXd one(3, 1);
  one << 1, 2, 3;
  CHECK(temporal_mean(one) == one.col(0));
  Eigen::MatrixXd two(2, 2);
  two << 1, 3, -2, 4;
  CHECK(temporal_mean(two) == Eigen::Vector2d(2, 1));
  CHECK(temporal_mean(Eigen::MatrixXd::Constant(4, 7, 2.5)) == Eigen::VectorXd::Constant(4, 2.5));
  CHECK_THROWS(temporal_mean(Eigen::MatrixXd(3, 0)));
}

TEST_CASE("config validation") {
  DspConfig c;
  CHECK_NOTHROW(c.validate());
  c.fft_size = 1000;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = DspConfig{};
  c.hop = 4096;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = DspConfig{};
  c.f_max = 20000;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("resampling") {
  const auto x = tone(1000, 44100, 44100);
  CHECK(resample(x, 44100, 44100) == x);
  const auto y = resample(x, 44100, 22050);
  CHECK(y.size() == 22050);
  CHECK(peak_hz(std::vector<double>(y.begin(), y.begin() + 4410), 22050, 500, 2000) == doctest::Approx(1000.0));
  // Passband amplitude survives, away from the edges.
  double peak = 0;
  for (std::size_t i = 1000; i < 21000; ++i) peak = std::max(peak, std::abs(y[i]));
  CHECK(peak == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(resample(x, 44100, 16000).size() == 16000);
  CHECK(resample(std::vector<double>(10, 0.0), 3, 7).size() == 23);  // round(70 / 3)
  // Tones above the new Nyquist are removed.
  const auto alias = resample(tone(15000, 44100, 44100), 44100, 22050);
  double e = 0;
  for (std::size_t i = 1000; i < 21000; ++i) e = std::max(e, std::abs(alias[i]));
  CHECK(e < 1e-3);
}

TEST_CASE("wav decoding") {
  testing::TempDir dir;
  SUBCASE("16-bit constants") {
    write_wav16(dir / "z.wav", std::vector<double>(100, 0.0), 1, 8000);
    const MonoSignal z = decode_wav(dir / "z.wav");
    CHECK(z.sample_rate == 8000);
    CHECK(z.samples.size() == 100);
    for (double v : z.samples) CHECK(v == 0.0);
    write_wav16(dir / "f.wav", std::vector<double>(10, 1.0), 1, 8000);
    for (double v : decode_wav(dir / "f.wav").samples) CHECK(v == doctest::Approx(32767.0 / 32768.0));
  }
  SUBCASE("stereo channels are averaged") {
    std::vector<double> inter;
    for (int i = 0; i < 50; ++i) {
      inter.push_back(0.25 * (i % 4));
      inter.push_back(-0.25 * (i % 4));
    }
    const MonoSignal m = decode_wav(encode_wav16(inter, 2, 22050));
    CHECK(m.samples.size() == 50);
    for (double v : m.samples) CHECK(v == 0.0);
  }
  SUBCASE("24-bit and float formats") {
    auto header = [](std::uint16_t fmt, std::uint16_t bits, std::size_t data_bytes) {
      std::vector<std::uint8_t> b;
      auto put = [&](std::uint32_t v, int n) {
        for (int i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
      };
      b.insert(b.end(), {'R', 'I', 'F', 'F'});
      put(static_cast<std::uint32_t>(36 + data_bytes), 4);
      b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
      put(16, 4);
      put(fmt, 2);
      put(1, 2);
      put(8000, 4);
      put(8000u * bits / 8, 4);
      put(bits / 8, 2);
      put(bits, 2);
      b.insert(b.end(), {'d', 'a', 't', 'a'});
      put(static_cast<std::uint32_t>(data_bytes), 4);
      return b;
    };
    auto b24 = header(1, 24, 6);
    b24.insert(b24.end(), {0x00, 0x00, 0x40, 0x00, 0x00, 0xC0});  // +0.5, -0.5
    const MonoSignal s24 = decode_wav(b24);
    REQUIRE(s24.samples.size() == 2);
    CHECK(s24.samples[0] == 0.5);
    CHECK(s24.samples[1] == -0.5);

    auto bf = header(3, 32, 4);
    const float v = -0.375f;
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) bf.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
    CHECK(decode_wav(bf).samples.at(0) == -0.375);

    auto alaw = header(6, 8, 1);
    alaw.push_back(0);
    CHECK_THROWS_AS(decode_wav(alaw), DataError);
  }
  SUBCASE("non-WAV input") {
    const std::vector<std::uint8_t> junk = {'O', 'g', 'g', 'S', 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(decode_wav(junk), DataError);
  }
  SUBCASE("metadata chunks are stripped") {
    auto bytes = encode_wav16(std::vector<double>{0.5, -0.5, 0.25}, 1, 8000);
    const std::string info("LIST\x0c\x00\x00\x00INFOINAMdog_", 20);
    bytes.insert(bytes.begin() + 12, info.begin(), info.end());
    bytes[4] = static_cast<std::uint8_t>(bytes.size() - 8);
    const auto clean = strip_wav_metadata(bytes);
    const std::string text(clean.begin(), clean.end());
    CHECK(text.find("LIST") == std::string::npos);
    CHECK(text.find("dog") == std::string::npos);
    CHECK(decode_wav(clean).samples == decode_wav(bytes).samples);
  }
}
