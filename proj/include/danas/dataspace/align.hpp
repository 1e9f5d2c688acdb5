// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "danas/audiofeat/mfcc.hpp"
#include "danas/dataspace/configs.hpp"
#include "danas/diffcore/ops.hpp"
#include "danas/diffcore/parameters.hpp"

namespace danas::data {

using diff::Shape;
using diff::Tensor;

enum class AlignStrategy { kZeroPad, kPreProcess };

std::string_view to_string(AlignStrategy s);
AlignStrategy parse_strategy(std::string_view s);  // ConfigError on unknown names

// Strided valid convolution taking one feature map to a smaller one.
// stride = floor((in - 1) / (out - 1)), kernel = in - stride * (out - 1), so the
// output extent is exact. Axes that already match get stride 1, kernel 1.
struct ReducerSpec {
  FeatureShape in;
  FeatureShape out;
  int stride_h = 1, stride_w = 1;
  int kernel_h = 1, kernel_w = 1;
  bool identity() const { return in == out; }
};

ReducerSpec reducer_for(FeatureShape in, FeatureShape out);

template <typename T>
struct AlignmentPlan {
  AlignStrategy strategy = AlignStrategy::kZeroPad;
  FeatureShape target;
  std::vector<FeatureShape> shapes;     // analytic per-config shapes
  std::vector<ReducerSpec> reducers;    // pre_process only
  std::vector<diff::Parameter<T>*> reducer_weights;  // null for identity; owned by the weight store
};

// zero_pad targets the elementwise max, pre_process the elementwise min.
// Reducer kernels are added to store as "reducer.<d>.weight" and initialised to
// a box average. store may be null for zero_pad.
template <typename T>
AlignmentPlan<T> make_plan(std::span<const DataConfig> configs, AlignStrategy strategy,
                           diff::ParameterStore<T>* store);

// Top-left placement of x [N, 1, F, C] into zeros [N, 1, tf, tc].
template <typename T>
Tensor<T> zero_pad(const Tensor<T>& x, FeatureShape target);

// inputs[d] is [N, 1, F_d, C_d] and must match the plan's analytic shape.
// Returns one [N, 1, target] tensor per config. With pre_process the reducer
// kernels are bound with train_reducers as requires_grad.
template <typename T>
std::vector<diff::Var<T>> align(diff::Tape<T>& tape, std::span<const Tensor<T>> inputs, const AlignmentPlan<T>& plan,
                                bool train_reducers);

// Sum_d weights[d] * aligned[d]. weights is a vector of length |aligned|.
template <typename T>
diff::Var<T> mix_inputs(std::span<const diff::Var<T>> aligned, diff::Var<T> weights);

// FeatureMap helpers for one clip (N = 1).
Tensor<double> feature_tensor(const audio::FeatureMap& m);
std::vector<Tensor<double>> align_maps(std::span<const audio::FeatureMap> maps, const AlignmentPlan<double>& plan);

}  // namespace danas::data
