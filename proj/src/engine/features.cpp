// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/engine/features.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "danas/audiofeat/mfcc.hpp"
#include "danas/audiofeat/wav.hpp"
#include "danas/common/error.hpp"

namespace danas::engine {

std::size_t RawFeatures::clips() const {
  const std::size_t per = shape.frames * shape.coefficients;
  return per == 0 ? 0 : values.size() / per;
}

RawFeatures compute_features(std::span<const Clip> clips, const DataConfig& config, const Dataset& dataset,
                             unsigned threads) {
  RawFeatures raw;
  raw.config = config;
  raw.shape = data::analytic_shape(config);
  const std::size_t per = raw.shape.frames * raw.shape.coefficients;
  raw.values.assign(clips.size() * per, 0.0);

  const auto decoys = dataset.decoys.find(config);
  audio::MfccOptions options;
  options.allow_any_mels = !data::in_table(config);

  auto work = [&](std::size_t i) {
    std::filesystem::path source = clips[i].path;
    if (decoys != dataset.decoys.end()) {
      if (auto it = decoys->second.find(source); it != decoys->second.end()) source = it->second;
    }
    const audio::FeatureMap m = audio::mfcc(audio::pad_to_one_second(audio::load_wav(source)), config, options);
    require(m.frames == raw.shape.frames && m.coefficients == raw.shape.coefficients,
            "compute_features: unexpected feature shape for " + source.string());
    std::copy(m.values.begin(), m.values.end(), raw.values.begin() + static_cast<long>(i * per));
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(clips.size(), 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) work(i);
    return raw;
  }
  // Each worker writes a disjoint slice, so the result is independent of scheduling.
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < clips.size(); i += threads) work(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return raw;
}

Standardiser fit_standardiser(const RawFeatures& raw) {
  const std::size_t C = raw.shape.coefficients;
  const std::size_t rows = C == 0 ? 0 : raw.values.size() / C;
  require(rows > 0, "fit_standardiser: no features");
  Standardiser s;
  s.mean.assign(C, 0.0);
  s.stddev.assign(C, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) s.mean[c] += raw.values[r * C + c];
  }
  for (double& m : s.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = raw.values[r * C + c] - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  // A constant coefficient (e.g. all-silent input) is centred but not scaled.
  for (double& v : s.stddev) {
    v = std::sqrt(v / static_cast<double>(rows));
    if (v < 1e-8) v = 1.0;
  }
  return s;
}

FeatureBank::FeatureBank(const RawFeatures& raw, const Standardiser& s)
    : config_(raw.config), shape_(raw.shape), clips_(raw.clips()) {
  const std::size_t C = shape_.coefficients;
  require(s.mean.size() == C && s.stddev.size() == C, "FeatureBank: standardiser width mismatch");
  values_.resize(raw.values.size());
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    const std::size_t c = i % C;
    values_[i] = static_cast<float>((raw.values[i] - s.mean[c]) / s.stddev[c]);
  }
}

diff::Tensor<float> FeatureBank::batch(std::span<const std::size_t> indices) const {
  const std::size_t per = shape_.frames * shape_.coefficients;
  diff::Tensor<float> out(diff::Shape{indices.size(), 1, shape_.frames, shape_.coefficients});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < clips_, "FeatureBank::batch: clip index out of range");
    std::copy_n(values_.begin() + static_cast<long>(indices[i] * per), per, out.data() + i * per);
  }
  return out;
}

std::vector<int> labels_of(std::span<const Clip> clips) {
  std::vector<int> out;
  out.reserve(clips.size());
  for (const Clip& c : clips) out.push_back(c.label);
  return out;
}

}  // namespace danas::engine
