// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Image tensors are NCHW. Every function appends one
// node to the tape of its first argument.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>
#include <type_traits>

#include "danas/diffcore/tape.hpp"

namespace danas::diff {

// Optional operand that does not take part in template argument deduction.
template <typename T>
using OptVar = std::optional<std::type_identity_t<Var<T>>>;

struct PrimitiveInfo {
  std::string name;
  std::string description;
};

// Every primitive the architecture and data spaces are built from.
std::vector<PrimitiveInfo> primitive_set();

struct Conv2dSpec {
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> padding{0, 0};
  int dilation = 1;
  int groups = 1;
};

struct Pool2dSpec {
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

enum class NormMode {
  kTrain,        // batch statistics, running statistics updated
  kTrainFrozen,  // batch statistics, running statistics left untouched
  kEval,         // running statistics
};

template <typename T>
struct NormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> relu(Var<T> x);

// Softmax over the last axis.
template <typename T>
Var<T> softmax(Var<T> x);
// Row r of a matrix as a vector.
template <typename T>
Var<T> select_row(Var<T> x, std::size_t row);
// Contiguous range of a vector.
template <typename T>
Var<T> slice(Var<T> x, std::size_t begin, std::size_t count);
// Sum_i weights[i] * xs[i]; weights is a vector with one entry per input.
template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> xs, Var<T> weights);

// Weight shape [out, in / groups, kh, kw]; optional bias shape [out].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, const Conv2dSpec& spec, OptVar<T> bias = std::nullopt);
template <typename T>
Var<T> max_pool2d(Var<T> x, const Pool2dSpec& spec);
// Padding cells are excluded from the average.
template <typename T>
Var<T> avg_pool2d(Var<T> x, const Pool2dSpec& spec);
template <typename T>
Var<T> global_avg_pool(Var<T> x);

// Per-channel normalisation; weight and bias are optional affine terms.
template <typename T>
Var<T> batch_norm(Var<T> x, OptVar<T> weight, OptVar<T> bias, std::type_identity_t<NormStats<T>>* stats,
                  NormMode mode, T eps = T(1e-5), T momentum = T(0.1));

// x [N, F], weight [O, F], bias [O].
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs);
template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t end);
// Interleaves channel groups: [g0c0, g1c0, ..., g0c1, g1c1, ...].
template <typename T>
Var<T> channel_shuffle(Var<T> x, std::size_t groups);
// y[h][w] = x[h + dy][w + dx], zero outside.
template <typename T>
Var<T> shift2d(Var<T> x, int dy, int dx);
// Zeros with x's spatial shape after a stride (ceil rounding); gradient to x is zero.
template <typename T>
Var<T> zero_op(Var<T> x, int stride);

// Mean cross-entropy of logits [N, C] against integer labels.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels);

// Output extent of a strided window: floor((in + 2p - d(k-1) - 1) / s) + 1.
inline std::size_t conv_out_extent(std::size_t in, int kernel, int stride, int padding, int dilation) {
  const long span = static_cast<long>(dilation) * (kernel - 1) + 1;
  const long num = static_cast<long>(in) + 2L * padding - span;
  require(num >= 0, "conv_out_extent: window larger than padded input");
  return static_cast<std::size_t>(num / stride + 1);
}

}  // namespace danas::diff
