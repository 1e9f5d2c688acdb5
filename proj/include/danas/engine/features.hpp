// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Precomputed, standardised MFCC features for one data config over a clip list.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "danas/common/data_config.hpp"
#include "danas/dataspace/configs.hpp"
#include "danas/diffcore/tensor.hpp"
#include "danas/engine/dataset.hpp"

namespace danas::engine {

// Per-coefficient mean and standard deviation over every frame of a clip set.
struct Standardiser {
  std::vector<double> mean;
  std::vector<double> stddev;
  bool operator==(const Standardiser&) const = default;
};

// Raw features, clip-major: values[(clip * frames + f) * coefficients + c].
struct RawFeatures {
  DataConfig config;
  data::FeatureShape shape;
  std::vector<double> values;
  std::size_t clips() const;
};

// Computes MFCCs for every clip (decoy substitutions applied). Clips are
// processed on `threads` workers; the result does not depend on the count.
RawFeatures compute_features(std::span<const Clip> clips, const DataConfig& config, const Dataset& dataset,
                             unsigned threads = 0);

Standardiser fit_standardiser(const RawFeatures& raw);

class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(const RawFeatures& raw, const Standardiser& s);

  const DataConfig& config() const { return config_; }
  data::FeatureShape shape() const { return shape_; }
  std::size_t clips() const { return clips_; }

  // [indices.size(), 1, frames, coefficients]
  diff::Tensor<float> batch(std::span<const std::size_t> indices) const;

 private:
  DataConfig config_;
  data::FeatureShape shape_;
  std::size_t clips_ = 0;
  std::vector<float> values_;
};

std::vector<int> labels_of(std::span<const Clip> clips);

}  // namespace danas::engine
