// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "danas/archspace/modules.hpp"

namespace danas::arch {

// Cells at floor(n/3) and floor(2n/3) are reductions.
std::vector<int> reduction_indices(int num_cells);

struct NetworkShape {
  int num_cells = 8;
  std::size_t channels = 16;  // initial cell channels C
  std::size_t classes = 2;
  std::size_t in_channels = 1;
  std::size_t stem_multiplier = 3;
};

// Stem conv3x3 + bn, a stack of search cells, global average pool and a linear head.
template <typename T>
class Supernet {
 public:
  // Weights go into `weights`; alpha and beta are owned here. ContractViolation when
  // num_cells < 3 or a cell width is not divisible by K.
  Supernet(const CellTopology& topo, const NetworkShape& shape, diff::ParameterStore<T>& weights, Rng& weight_rng,
           Rng& arch_rng, double arch_sigma = 1e-3);

  // x [N, in_channels, H, W] -> logits [N, classes].
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const;
  // Output of the last cell, before pooling and the head.
  Var<T> features(Ctx<T>& ctx, Var<T> x) const;

  ArchParams<T>& arch() { return arch_; }
  const ArchParams<T>& arch() const { return arch_; }
  const CellTopology& topology() const { return topo_; }
  const NetworkShape& shape() const { return shape_; }
  Genotype genotype() const { return discretize(arch_, topo_); }

 private:
  CellTopology topo_;
  NetworkShape shape_;
  ArchParams<T> arch_;
  Parameter<T>* stem_w_;
  std::unique_ptr<BatchNorm<T>> stem_bn_;
  std::vector<SearchCell<T>> cells_;
  Parameter<T>* head_w_;
  Parameter<T>* head_b_;
};

template <typename T>
class DiscreteNet {
 public:
  DiscreteNet(const Genotype& g, const NetworkShape& shape, diff::ParameterStore<T>& weights, Rng& rng);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const;
  Var<T> features(Ctx<T>& ctx, Var<T> x) const;
  std::size_t head_features() const { return head_features_; }

 private:
  NetworkShape shape_;
  Parameter<T>* stem_w_;
  std::unique_ptr<BatchNorm<T>> stem_bn_;
  std::vector<DiscreteCell<T>> cells_;
  Parameter<T>* head_w_;
  Parameter<T>* head_b_;
  std::size_t head_features_ = 0;
};

struct ParamBreakdown {
  std::size_t stem = 0;
  std::size_t cells = 0;
  std::size_t head = 0;
  std::size_t total() const { return stem + cells + head; }
};

// Trainable scalars of the instantiated discrete network (running statistics excluded).
ParamBreakdown param_breakdown(const Genotype& g, const NetworkShape& shape);
std::size_t param_count(const Genotype& g, const NetworkShape& shape);

}  // namespace danas::arch
