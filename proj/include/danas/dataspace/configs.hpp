// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "danas/common/data_config.hpp"

namespace danas::data {

// Either a product space (window x hop divisor x mels, in that nesting order)
// or an explicit list. Every resulting config must be one of the eight MFCC
// table rows unless allow_override is set.
struct SpaceDescription {
  std::vector<int> windows;
  std::vector<int> hop_divisors;  // hop = window / divisor; 4 before 2 gives the table's order
  std::vector<int> mels;
  std::vector<DataConfig> explicit_configs;
  bool allow_override = false;
};

// The eight-row MFCC space: {400, 640} x {quarter, half} x {40, 80}.
SpaceDescription table_space();
const std::vector<DataConfig>& table_configs();
bool in_table(const DataConfig& c);

// Rejects non-positive fields, hop > window, and (without override) non-table rows.
void validate_config(const DataConfig& c, bool allow_override);

// ConfigError on an empty space or duplicates.
std::vector<DataConfig> enumerate_configs(const SpaceDescription& space);

struct FeatureShape {
  std::size_t frames = 0;
  std::size_t coefficients = 0;
  bool operator==(const FeatureShape&) const = default;
};

// Shape of mfcc() output for a one-second clip.
FeatureShape analytic_shape(const DataConfig& c);

}  // namespace danas::data
