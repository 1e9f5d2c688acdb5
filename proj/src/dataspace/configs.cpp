// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/dataspace/configs.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "danas/audiofeat/mfcc.hpp"
#include "danas/common/error.hpp"

namespace danas::data {

SpaceDescription table_space() {
  SpaceDescription s;
  s.windows = {400, 640};
  s.hop_divisors = {4, 2};
  s.mels = {40, 80};
  return s;
}

const std::vector<DataConfig>& table_configs() {
  static const std::vector<DataConfig> rows = enumerate_configs(table_space());
  return rows;
}

bool in_table(const DataConfig& c) {
  static const std::vector<DataConfig> rows = {{400, 100, 40}, {400, 100, 80}, {400, 200, 40}, {400, 200, 80},
                                               {640, 160, 40}, {640, 160, 80}, {640, 320, 40}, {640, 320, 80}};
  return std::find(rows.begin(), rows.end(), c) != rows.end();
}

void validate_config(const DataConfig& c, bool allow_override) {
  if (c.window <= 0 || c.hop <= 0 || c.mels <= 0) {
    throw ConfigError(fmt::format("data config {}: fields must be positive", c.str()));
  }
  if (c.hop > c.window) {
    throw ConfigError(fmt::format("data config {}: hop exceeds window", c.str()));
  }
  if (static_cast<std::size_t>(c.window) > audio::kClipSamples) {
    throw ConfigError(fmt::format("data config {}: window longer than a one-second clip", c.str()));
  }
  if (!allow_override && !in_table(c)) {
    throw ConfigError(fmt::format("data config {} is not in the MFCC search space (set allow_override)", c.str()));
  }
}

std::vector<DataConfig> enumerate_configs(const SpaceDescription& space) {
  std::vector<DataConfig> out;
  if (!space.explicit_configs.empty()) {
    out = space.explicit_configs;
  } else {
    for (int w : space.windows) {
      for (int d : space.hop_divisors) {
        if (d <= 0 || w % d != 0) {
          throw ConfigError(fmt::format("hop divisor {} does not divide window {}", d, w));
        }
        for (int m : space.mels) {
          out.push_back(DataConfig{w, w / d, m});
        }
      }
    }
  }
  if (out.empty()) {
    throw ConfigError("data space is empty");
  }
  std::set<DataConfig> seen;
  for (const DataConfig& c : out) {
    validate_config(c, space.allow_override);
    if (!seen.insert(c).second) {
      throw ConfigError(fmt::format("data config {} listed twice", c.str()));
    }
  }
  return out;
}

FeatureShape analytic_shape(const DataConfig& c) {
  return FeatureShape{audio::frame_count(audio::kClipSamples, c.window, c.hop), static_cast<std::size_t>(c.mels)};
}

}  // namespace danas::data
