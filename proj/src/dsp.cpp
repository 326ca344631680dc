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

#include "avsec/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include "avsec/error.hpp"
#include "avsec/wav.hpp"

namespace avsec {
namespace {

constexpr double kSlaneyFsp = 200.0 / 3.0;
constexpr double kSlaneyMinLogHz = 1000.0;
constexpr double kSlaneyMinLogMel = kSlaneyMinLogHz / kSlaneyFsp;  // 15
const double kSlaneyLogStep = std::log(6.4) / 27.0;

constexpr int kResampleZeroCrossings = 32;
constexpr double kResampleRolloff = 0.95;
constexpr double kResampleBeta = 8.6;

// FFTW's planner is not thread-safe; execution on distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffers {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit FftwBuffers(int n) {
    std::lock_guard lock(fftw_planner_mutex());
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftwBuffers() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
};

// numpy-style "reflect" (edge sample not repeated), applied repeatedly for
// pads longer than the signal.
std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void DspConfig::validate() const {
  if (target_sample_rate <= 0) throw UsageError("target_sample_rate must be positive");
  if (!is_power_of_two(fft_size)) throw UsageError("fft_size must be a power of two");
  if (hop < 1 || hop > fft_size) throw UsageError("hop must be in [1, fft_size]");
  if (n_mels < 1) throw UsageError("n_mels must be >= 1");
  if (!(power > 0.0)) throw UsageError("power must be positive");
  if (!(log_floor > 0.0)) throw UsageError("log_floor must be positive");
  const double hi = effective_f_max();
  if (!(f_min >= 0.0 && f_min < hi && hi <= nyquist())) {
    throw UsageError("need 0 <= f_min < f_max <= Nyquist");
  }
  if (top_db && !(*top_db >= 0.0)) throw UsageError("top_db must be non-negative");
}

std::vector<double> resample(std::span<const double> signal, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw UsageError("sample rates must be positive");
  if (from_rate == to_rate) return {signal.begin(), signal.end()};

  const long long g = std::gcd(from_rate, to_rate);
  const long long up = to_rate / g;      // output samples per period
  const long long down = from_rate / g;  // input samples per period
  const auto n = static_cast<long long>(signal.size());
  const long long out_len = (n * up + down / 2) / down;

  const double bandwidth = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const double cutoff = kResampleRolloff * bandwidth;  // fraction of input Nyquist
  const double half_width = kResampleZeroCrossings / bandwidth;  // input samples
  const double i0_beta = std::cyl_bessel_i(0.0, kResampleBeta);
  auto kernel = [&](double x) {
    const double r = x / half_width;
    if (std::abs(r) > 1.0) return 0.0;
    const double window = std::cyl_bessel_i(0.0, kResampleBeta * std::sqrt(1.0 - r * r)) / i0_beta;
    const double u = cutoff * x;
    const double sinc = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
    return cutoff * sinc * window;
  };

  // Output sample i sits at input position (i * down) / up; its fractional
  // part cycles through `up` phases, so the taps are computed once per phase.
  struct Phase {
    long long first = 0;
    std::vector<double> taps;
  };
  const bool tabulate = up <= 4096;
  std::vector<Phase> phases;
  auto make_phase = [&](double frac) {
    Phase p;
    p.first = static_cast<long long>(std::ceil(frac - half_width));
    const auto last = static_cast<long long>(std::floor(frac + half_width));
    for (long long o = p.first; o <= last; ++o) p.taps.push_back(kernel(static_cast<double>(o) - frac));
    return p;
  };
  if (tabulate) {
    phases.reserve(static_cast<std::size_t>(up));
    for (long long r = 0; r < up; ++r) phases.push_back(make_phase(static_cast<double>(r) / up));
  }

  std::vector<double> out(static_cast<std::size_t>(out_len));
  for (long long i = 0; i < out_len; ++i) {
    const long long q = (i * down) / up;
    const long long r = (i * down) % up;
    const Phase local = tabulate ? Phase{} : make_phase(static_cast<double>(r) / up);
    const Phase& p = tabulate ? phases[static_cast<std::size_t>(r)] : local;
    double acc = 0.0;
    for (std::size_t k = 0; k < p.taps.size(); ++k) {
      const long long j = q + p.first + static_cast<long long>(k);
      if (j >= 0 && j < n) acc += signal[static_cast<std::size_t>(j)] * p.taps[k];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

double hz_to_mel(double hz, MelScale scale) {
  if (scale == MelScale::kHtk) return 2595.0 * std::log10(1.0 + hz / 700.0);
  if (hz < kSlaneyMinLogHz) return hz / kSlaneyFsp;
  return kSlaneyMinLogMel + std::log(hz / kSlaneyMinLogHz) / kSlaneyLogStep;
}

double mel_to_hz(double mel, MelScale scale) {
  if (scale == MelScale::kHtk) return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  if (mel < kSlaneyMinLogMel) return kSlaneyFsp * mel;
  return kSlaneyMinLogHz * std::exp(kSlaneyLogStep * (mel - kSlaneyMinLogMel));
}

std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max, MelScale scale) {
  const double lo = hz_to_mel(f_min, scale);
  const double hi = hz_to_mel(f_max, scale);
  const int n = n_mels + 2;
  std::vector<double> edges(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double mel = lo + (hi - lo) * i / (n - 1);
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel, scale);
  }
  return edges;
}

Eigen::MatrixXd mel_filterbank(const DspConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.fft_size / 2 + 1;
  const auto edges = mel_band_edges(cfg.n_mels, cfg.f_min, cfg.effective_f_max(), cfg.mel_scale);
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double centre = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    const double norm = 2.0 / (right - left);
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.target_sample_rate / cfg.fft_size;
      const double rising = (f - left) / (centre - left);
      const double falling = (right - f) / (right - centre);
      weights(m, k) = std::max(0.0, std::min(rising, falling)) * norm;
    }
  }
  return weights;
}

Eigen::MatrixXd power_spectrogram(std::span<const double> signal, const DspConfig& cfg) {
  cfg.validate();
  if (signal.empty()) throw DataError("cannot compute a spectrogram of an empty signal");
  const int n_fft = cfg.fft_size;
  const int n_bins = n_fft / 2 + 1;
  const auto len = static_cast<long long>(signal.size());
  const long long n_frames = 1 + len / cfg.hop;
  const long long pad = n_fft / 2;

  std::vector<double> window(static_cast<std::size_t>(n_fft));
  for (int k = 0; k < n_fft; ++k) {
    window[static_cast<std::size_t>(k)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / n_fft);
  }

  FftwBuffers fft(n_fft);
  Eigen::MatrixXd spec(n_bins, n_frames);
  for (long long t = 0; t < n_frames; ++t) {
    const long long start = t * cfg.hop - pad;
    for (int k = 0; k < n_fft; ++k) {
      const long long idx = start + k;
      const std::size_t src = (idx >= 0 && idx < len) ? static_cast<std::size_t>(idx)
                                                       : reflect_index(idx, signal.size());
      fft.in[k] = signal[src] * window[static_cast<std::size_t>(k)];
    }
    fftw_execute(fft.plan);
    for (int b = 0; b < n_bins; ++b) {
      const double mag2 = fft.out[b][0] * fft.out[b][0] + fft.out[b][1] * fft.out[b][1];
      spec(b, t) = cfg.power == 2.0 ? mag2 : std::pow(mag2, cfg.power / 2.0);
    }
  }
  return spec;
}

Eigen::MatrixXd log_mel(std::span<const double> signal, const DspConfig& cfg) {
  const Eigen::MatrixXd mel = mel_filterbank(cfg) * power_spectrogram(signal, cfg);
  const double ref = cfg.db_ref == DbReference::kMax ? mel.maxCoeff() : 1.0;
  const double ref_db = 10.0 * std::log10(std::max(cfg.log_floor, ref));
  Eigen::MatrixXd db = mel.unaryExpr(
      [&](double x) { return 10.0 * std::log10(std::max(x, cfg.log_floor)) - ref_db; });
  if (cfg.top_db) {
    const double lo = db.maxCoeff() - *cfg.top_db;
    db = db.cwiseMax(lo);
  }
  return db;
}

Eigen::VectorXd temporal_mean(const Eigen::MatrixXd& m) {
  if (m.cols() == 0) throw DataError("temporal mean of a matrix with zero frames");
  return m.rowwise().mean();
}

Eigen::VectorXd logmel_mean_from_file(const std::filesystem::path& wav, const DspConfig& cfg) {
  const MonoSignal sig = decode_wav(wav);
  const std::vector<double> x = resample(sig.samples, sig.sample_rate, cfg.target_sample_rate);
  if (x.empty()) throw DataError(wav.string() + ": empty audio");
  return temporal_mean(log_mel(x, cfg));
}

}  // namespace avsec
