// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "danas/audiofeat/wav.hpp"
#include "danas/common/data_config.hpp"

namespace danas::audio {

inline constexpr double kLogFloor = 1e-10;
inline constexpr double kMelHighHz = 8000.0;

// Dense row-major matrix; rows x cols.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// frames x coefficients, frame-major.
struct FeatureMap {
  std::size_t frames = 0;
  std::size_t coefficients = 0;
  std::vector<double> values;
  DataConfig source;

  double at(std::size_t f, std::size_t c) const { return values[f * coefficients + c]; }
  bool operator==(const FeatureMap&) const = default;
};

struct MfccOptions {
  // Permit mel counts outside {40, 80} and windows outside the enumerated space.
  bool allow_any_mels = false;
};

// 1 + floor((samples - window) / hop), no centering.
std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop);

// Smallest power of two >= window.
std::size_t fft_size(std::size_t window);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x fft_bins triangular filters with peak 1, centres equally spaced on
// the HTK mel scale between 0 Hz and 8 kHz. fft_bins = nfft / 2 + 1.
Matrix mel_filterbank(std::size_t fft_bins, std::size_t n_mels, int sample_rate, bool allow_override = false);

// Orthonormal DCT-II, n x n; row k is basis function k.
Matrix dct_matrix(std::size_t n);

// Framing -> Hann -> |FFT| -> mel -> log(max(e, floor)) -> DCT-II, keeping all
// mel coefficients. Input must already be padded to one second.
FeatureMap mfcc(const Waveform& w, const DataConfig& c, const MfccOptions& options = {});

}  // namespace danas::audio
