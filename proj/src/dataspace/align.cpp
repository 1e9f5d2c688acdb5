// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/dataspace/align.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::data {

std::string_view to_string(AlignStrategy s) { return s == AlignStrategy::kZeroPad ? "zero_pad" : "pre_process"; }

AlignStrategy parse_strategy(std::string_view s) {
  if (s == "zero_pad") return AlignStrategy::kZeroPad;
  if (s == "pre_process") return AlignStrategy::kPreProcess;
  throw ConfigError(fmt::format("alignment '{}': expected zero_pad or pre_process", s));
}

namespace {

void reduce_axis(std::size_t in, std::size_t out, int& stride, int& kernel) {
  require(out >= 1 && out <= in, "reducer: target larger than input");
  if (in == out) {
    stride = 1;
    kernel = 1;
    return;
  }
  stride = out == 1 ? 1 : static_cast<int>((in - 1) / (out - 1));
  kernel = static_cast<int>(in - static_cast<std::size_t>(stride) * (out - 1));
}

}  // namespace

ReducerSpec reducer_for(FeatureShape in, FeatureShape out) {
  ReducerSpec r{in, out};
  reduce_axis(in.frames, out.frames, r.stride_h, r.kernel_h);
  reduce_axis(in.coefficients, out.coefficients, r.stride_w, r.kernel_w);
  return r;
}

template <typename T>
AlignmentPlan<T> make_plan(std::span<const DataConfig> configs, AlignStrategy strategy,
                           diff::ParameterStore<T>* store) {
  require(!configs.empty(), "make_plan: no data configs");
  AlignmentPlan<T> plan;
  plan.strategy = strategy;
  for (const DataConfig& c : configs) plan.shapes.push_back(analytic_shape(c));
  plan.target = plan.shapes.front();
  for (const FeatureShape& s : plan.shapes) {
    if (strategy == AlignStrategy::kZeroPad) {
      plan.target.frames = std::max(plan.target.frames, s.frames);
      plan.target.coefficients = std::max(plan.target.coefficients, s.coefficients);
    } else {
      plan.target.frames = std::min(plan.target.frames, s.frames);
      plan.target.coefficients = std::min(plan.target.coefficients, s.coefficients);
    }
  }
  if (strategy == AlignStrategy::kPreProcess) {
    for (std::size_t d = 0; d < plan.shapes.size(); ++d) {
      ReducerSpec r = reducer_for(plan.shapes[d], plan.target);
      plan.reducers.push_back(r);
      if (r.identity()) {
        plan.reducer_weights.push_back(nullptr);
        continue;
      }
      require(store != nullptr, "make_plan: pre_process needs a parameter store for its reducers");
      const std::size_t taps = static_cast<std::size_t>(r.kernel_h) * r.kernel_w;
      Tensor<T> box(Shape{1, 1, std::size_t(r.kernel_h), std::size_t(r.kernel_w)}, T(1.0 / double(taps)));
      plan.reducer_weights.push_back(&store->add(fmt::format("reducer.{}.weight", d), std::move(box)));
    }
  }
  return plan;
}

template <typename T>
Tensor<T> zero_pad(const Tensor<T>& x, FeatureShape target) {
  require(x.rank() == 4 && x.dim(1) == 1, "zero_pad: expected [N, 1, F, C], got " + diff::shape_str(x.shape()));
  const std::size_t n = x.dim(0), f = x.dim(2), c = x.dim(3);
  require(f <= target.frames && c <= target.coefficients, "zero_pad: input larger than target");
  Tensor<T> out(Shape{n, 1, target.frames, target.coefficients}, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < f; ++r) {
      const T* src = x.data() + (i * f + r) * c;
      std::copy(src, src + c, out.data() + (i * target.frames + r) * target.coefficients);
    }
  }
  return out;
}

template <typename T>
std::vector<diff::Var<T>> align(diff::Tape<T>& tape, std::span<const Tensor<T>> inputs, const AlignmentPlan<T>& plan,
                                bool train_reducers) {
  if (inputs.size() != plan.shapes.size()) {
    throw ContractViolation(fmt::format("align: {} inputs for {} configs", inputs.size(), plan.shapes.size()));
  }
  std::vector<diff::Var<T>> out;
  std::size_t batch = 0;
  for (std::size_t d = 0; d < inputs.size(); ++d) {
    const Tensor<T>& x = inputs[d];
    const FeatureShape want = plan.shapes[d];
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != want.frames || x.dim(3) != want.coefficients) {
      throw ContractViolation(fmt::format("align: config {} features {} do not match analytic shape {}x{}", d,
                                          diff::shape_str(x.shape()), want.frames, want.coefficients));
    }
    if (d == 0) batch = x.dim(0);
    require(x.dim(0) == batch, "align: batch sizes differ across configs");
    if (plan.strategy == AlignStrategy::kZeroPad) {
      out.push_back(want == plan.target ? tape.constant(x) : tape.constant(zero_pad(x, plan.target)));
      continue;
    }
    const ReducerSpec& r = plan.reducers[d];
    if (r.identity()) {
      out.push_back(tape.constant(x));
      continue;
    }
    diff::Conv2dSpec spec;
    spec.stride = {r.stride_h, r.stride_w};
    out.push_back(diff::conv2d(tape.constant(x), tape.parameter(*plan.reducer_weights[d], train_reducers), spec));
  }
  return out;
}

template <typename T>
diff::Var<T> mix_inputs(std::span<const diff::Var<T>> aligned, diff::Var<T> weights) {
  require(!aligned.empty(), "mix_inputs: nothing to mix");
  require(weights.shape() == Shape{aligned.size()}, "mix_inputs: need one weight per aligned input");
  for (const diff::Var<T>& a : aligned) {
    if (a.shape() != aligned.front().shape()) {
      throw ContractViolation("mix_inputs: shape mismatch " + diff::shape_str(a.shape()) + " vs " +
                              diff::shape_str(aligned.front().shape()));
    }
  }
  return diff::weighted_sum(aligned, weights);
}

Tensor<double> feature_tensor(const audio::FeatureMap& m) {
  return Tensor<double>(Shape{1, 1, m.frames, m.coefficients}, m.values);
}

std::vector<Tensor<double>> align_maps(std::span<const audio::FeatureMap> maps, const AlignmentPlan<double>& plan) {
  std::vector<Tensor<double>> inputs;
  for (const audio::FeatureMap& m : maps) inputs.push_back(feature_tensor(m));
  diff::Tape<double> tape;
  std::vector<Tensor<double>> out;
  for (const diff::Var<double>& v : align<double>(tape, inputs, plan, false)) out.push_back(v.value());
  return out;
}

#define DANAS_INSTANTIATE_ALIGN(T)                                                                             \
  template AlignmentPlan<T> make_plan<T>(std::span<const DataConfig>, AlignStrategy, diff::ParameterStore<T>*); \
  template Tensor<T> zero_pad<T>(const Tensor<T>&, FeatureShape);                                              \
  template std::vector<diff::Var<T>> align<T>(diff::Tape<T>&, std::span<const Tensor<T>>,                      \
                                              const AlignmentPlan<T>&, bool);                                  \
  template diff::Var<T> mix_inputs<T>(std::span<const diff::Var<T>>, diff::Var<T>);

DANAS_INSTANTIATE_ALIGN(float)
DANAS_INSTANTIATE_ALIGN(double)

}  // namespace danas::data
