// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <unordered_map>

#include "danas/diffcore/tape.hpp"

namespace danas::diff {

template <typename T>
struct OptimizerState {
  T learning_rate{};
  T momentum{0};
  T weight_decay{0};
  std::unordered_map<const Parameter<T>*, Tensor<T>> velocity;
};

// Velocity-form SGD: v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v.
// Parameters without an entry in grads are left untouched.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const Gradients<T>& grads, OptimizerState<T>& state);

}  // namespace danas::diff
