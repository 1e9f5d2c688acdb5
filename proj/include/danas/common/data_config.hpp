// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <string>

namespace danas {

// One MFCC front-end setting: analysis window and hop in samples, mel filter count.
struct DataConfig {
  int window = 0;
  int hop = 0;
  int mels = 0;

  auto operator<=>(const DataConfig&) const = default;

  std::string str() const {
    return "(" + std::to_string(window) + "," + std::to_string(hop) + "," + std::to_string(mels) + ")";
  }
};

}  // namespace danas
