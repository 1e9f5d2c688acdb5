// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <deque>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "danas/common/rng.hpp"
#include "danas/diffcore/ops.hpp"

namespace danas::diff {

// Owns a group of parameters and normalisation statistics with stable addresses,
// so Parameter pointers can key gradient and optimizer maps.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<T>& add(std::string name, Tensor<T> init) {
    require(names_.insert(name).second, "ParameterStore: duplicate parameter '" + name + "'");
    params_.push_back(Parameter<T>{std::move(name), std::move(init)});
    return params_.back();
  }

  NormStats<T>& add_norm_stats(std::size_t channels) {
    stats_.push_back(NormStats<T>{Tensor<T>(Shape{channels}, T{0}), Tensor<T>(Shape{channels}, T{1})});
    return stats_.back();
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (Parameter<T>& p : params_) {
      out.push_back(&p);
    }
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const Parameter<T>& p : params_) {
      out.push_back(&p);
    }
    return out;
  }

  std::deque<NormStats<T>>& norm_stats() { return stats_; }
  const std::deque<NormStats<T>>& norm_stats() const { return stats_; }

  // Number of trainable scalars.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Parameter<T>& p : params_) {
      n += p.value.size();
    }
    return n;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::deque<NormStats<T>> stats_;
  std::unordered_set<std::string> names_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> out(std::move(shape));
  for (T& v : out.values()) {
    v = static_cast<T>(dist(rng));
  }
  return out;
}

template <typename T>
Tensor<T> gaussian(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> out(std::move(shape));
  for (T& v : out.values()) {
    v = static_cast<T>(dist(rng));
  }
  return out;
}

}  // namespace danas::diff
