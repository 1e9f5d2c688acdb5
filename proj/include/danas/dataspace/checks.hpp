// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "danas/diffcore/gradcheck.hpp"

namespace danas::data {

// Gradient checks for the gamma mixing path, d/d(gamma) and d/d(reducer kernels),
// under both alignment strategies.
std::vector<diff::CheckCase> mixing_checks();

}  // namespace danas::data
