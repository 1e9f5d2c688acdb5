// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace danas::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 16000;

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

// Reads PCM 16-bit little-endian mono 16 kHz RIFF/WAVE. Anything else is a
// FormatError; there is no resampling or down-mixing. Samples are value / 32768.
Waveform load_wav(const std::filesystem::path& path);

// Writes the same format back. Samples are scaled by 32768, rounded and clamped
// to int16, so load_wav(write_wav(w)) is exact for values on the int16 grid.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Appends zeros up to exactly one second. Longer input is a ContractViolation.
Waveform pad_to_one_second(Waveform w);

}  // namespace danas::audio
