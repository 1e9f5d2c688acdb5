// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "danas/diffcore/gradcheck.hpp"

namespace danas::arch {

// Gradient checks through the mixed-op path: a single partial-channel mixed op
// (d/d alpha row, d/d input) and whole normal and reduction search cells
// (d/d alpha, d/d beta, d/d inputs).
std::vector<diff::CheckCase> mixed_op_checks();

}  // namespace danas::arch
