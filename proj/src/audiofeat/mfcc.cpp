// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/audiofeat/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::audio {
namespace {

// FFTW's planner is not re-entrant; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Magnitudes of bins 0..n/2 of the current input.
  void magnitude(std::vector<double>& mag) {
    fftw_execute(plan_);
    mag.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) {
      mag[k] = std::hypot(out_[k][0], out_[k][1]);
    }
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

bool enumerated_mels(std::size_t n) { return n == 40 || n == 80; }

}  // namespace

std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop) {
  require(window > 0 && hop > 0, "frame_count: window and hop must be positive");
  require(samples >= window, "frame_count: signal shorter than one window");
  return 1 + (samples - window) / hop;
}

std::size_t fft_size(std::size_t window) {
  require(window > 0, "fft_size: empty window");
  std::size_t n = 1;
  while (n < window) n <<= 1;
  return n;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
  }
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(std::size_t fft_bins, std::size_t n_mels, int sample_rate, bool allow_override) {
  if (!enumerated_mels(n_mels) && !allow_override) {
    throw ContractViolation(fmt::format("mel_filterbank: {} mel filters is outside {{40, 80}}", n_mels));
  }
  require(n_mels > 0 && fft_bins >= 2, "mel_filterbank: degenerate size");
  require(sample_rate >= 2 * kMelHighHz, "mel_filterbank: 8 kHz upper edge exceeds Nyquist");
  const double nfft = 2.0 * double(fft_bins - 1);
  const double top = hz_to_mel(kMelHighHz);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * double(i) / double(n_mels + 1));
  }
  Matrix fb{n_mels, fft_bins, std::vector<double>(n_mels * fft_bins, 0.0)};
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < fft_bins; ++k) {
      const double f = double(k) * sample_rate / nfft;
      double v = 0.0;
      if (f > lo && f <= mid) {
        v = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        v = (hi - f) / (hi - mid);
      }
      fb(m, k) = v;
    }
  }
  return fb;
}

Matrix dct_matrix(std::size_t n) {
  require(n > 0, "dct_matrix: empty");
  Matrix d{n, n, std::vector<double>(n * n)};
  const double s0 = std::sqrt(1.0 / double(n));
  const double s = std::sqrt(2.0 / double(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      d(k, i) = (k == 0 ? s0 : s) * std::cos(std::numbers::pi * double(k) * (2.0 * double(i) + 1.0) / (2.0 * double(n)));
    }
  }
  return d;
}

FeatureMap mfcc(const Waveform& w, const DataConfig& c, const MfccOptions& options) {
  if (w.samples.size() != kClipSamples) {
    throw ContractViolation(fmt::format("mfcc: waveform has {} samples, pad to {} first", w.samples.size(),
                                        kClipSamples));
  }
  require(w.sample_rate == kSampleRate, "mfcc: sample rate must be 16 kHz");
  require(c.window > 0 && c.hop > 0 && c.mels > 0, "mfcc: non-positive config field " + c.str());
  require(c.hop <= c.window, "mfcc: hop longer than window " + c.str());

  const std::size_t win = c.window, hop = c.hop, mels = c.mels;
  const std::size_t nfft = fft_size(win);
  const std::size_t bins = nfft / 2 + 1;
  const std::size_t frames = frame_count(w.samples.size(), win, hop);
  const std::vector<double> hann = hann_window(win);
  const Matrix fb = mel_filterbank(bins, mels, w.sample_rate, options.allow_any_mels);
  const Matrix dct = dct_matrix(mels);

  FeatureMap out{frames, mels, std::vector<double>(frames * mels), c};
  RealFft fft(nfft);
  std::vector<double> mag, logmel(mels);
  for (std::size_t f = 0; f < frames; ++f) {
    double* buf = fft.input();
    const double* src = w.samples.data() + f * hop;
    for (std::size_t i = 0; i < win; ++i) buf[i] = src[i] * hann[i];
    std::fill(buf + win, buf + nfft, 0.0);
    fft.magnitude(mag);
    for (std::size_t m = 0; m < mels; ++m) {
      double e = 0.0;
      const double* row = fb.values.data() + m * bins;
      for (std::size_t k = 0; k < bins; ++k) e += row[k] * mag[k];
      logmel[m] = std::log(std::max(e, kLogFloor));
    }
    double* dst = out.values.data() + f * mels;
    for (std::size_t k = 0; k < mels; ++k) {
      double acc = 0.0;
      const double* row = dct.values.data() + k * mels;
      for (std::size_t m = 0; m < mels; ++m) acc += row[m] * logmel[m];
      dst[k] = acc;
    }
  }
  return out;
}

}  // namespace danas::audio
