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

#ifndef AVSEC_DSP_HPP_
#define AVSEC_DSP_HPP_

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace avsec {

enum class MelScale { kSlaney, kHtk };
enum class DbReference { kUnity, kMax };

// Front-end settings. Defaults reproduce the usual librosa melspectrogram
// call: 22.05 kHz, 2048-point Hann STFT with hop 512, 128 Slaney mels,
// power spectrum, 1e-10 floor.
struct DspConfig {
  int target_sample_rate = 22050;
  int fft_size = 2048;
  int hop = 512;
  int n_mels = 128;
  MelScale mel_scale = MelScale::kSlaney;
  double f_min = 0.0;
  std::optional<double> f_max;  // defaults to target_sample_rate / 2
  double power = 2.0;
  double log_floor = 1e-10;
  DbReference db_ref = DbReference::kUnity;
  // Clip to (peak - top_db) after the dB conversion; disabled by default.
  std::optional<double> top_db;

  double nyquist() const { return target_sample_rate / 2.0; }
  double effective_f_max() const { return f_max.value_or(nyquist()); }
  // Throws UsageError on an invalid combination.
  void validate() const;
};

// Kaiser-windowed sinc interpolation: 32 zero crossings of the lower-rate
// lowpass, cutoff at 0.95 of the lower Nyquist, Kaiser beta 8.6 (about
// 90 dB stopband). Output length is round(n * to / from).
std::vector<double> resample(std::span<const double> signal, int from_rate, int to_rate);

double hz_to_mel(double hz, MelScale scale);
double mel_to_hz(double mel, MelScale scale);

// n_mels + 2 band edges equally spaced on the mel axis, in Hz.
std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max, MelScale scale);

// Triangular filterbank [n_mels x (fft_size/2 + 1)] with Slaney area
// normalization (each filter scaled by 2 / bandwidth in Hz).
Eigen::MatrixXd mel_filterbank(const DspConfig& cfg);

// Power STFT with centred, reflect-padded frames: [fft_size/2+1 x n_frames],
// n_frames = 1 + len / hop.
Eigen::MatrixXd power_spectrogram(std::span<const double> signal, const DspConfig& cfg);

// Log-mel spectrogram in dB, [n_mels x n_frames].
Eigen::MatrixXd log_mel(std::span<const double> signal, const DspConfig& cfg);

// Per-row mean over time frames.
Eigen::VectorXd temporal_mean(const Eigen::MatrixXd& m);

// decode -> resample -> log_mel -> temporal_mean.
Eigen::VectorXd logmel_mean_from_file(const std::filesystem::path& wav, const DspConfig& cfg);

}  // namespace avsec

#endif  // AVSEC_DSP_HPP_
