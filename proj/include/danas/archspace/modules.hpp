// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Building blocks shared by the supernet and the discrete network.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "danas/archspace/genotype.hpp"
#include "danas/archspace/topology.hpp"
#include "danas/diffcore/ops.hpp"
#include "danas/diffcore/parameters.hpp"

namespace danas::arch {

using diff::NormMode;
using diff::Tape;
using diff::Var;

// How a forward pass binds parameters. Weights and architecture parameters are
// bound with requires_grad only when that group is being updated.
template <typename T>
struct Ctx {
  Tape<T>& tape;
  NormMode norm = NormMode::kTrain;
  bool grad_weights = true;
  bool grad_arch = false;

  Var<T> weight(const Parameter<T>& p) { return tape.parameter(p, grad_weights); }
  Var<T> arch(const Parameter<T>& p) { return tape.parameter(p, grad_arch); }
};

// Creates named parameters in a store under a dotted prefix.
template <typename T>
class Builder {
 public:
  Builder(diff::ParameterStore<T>& store, Rng& rng, std::string prefix = {})
      : store_(store), rng_(rng), prefix_(std::move(prefix)) {}

  Builder child(const std::string& name) const { return Builder(store_, rng_, join(name)); }

  Parameter<T>& conv(const std::string& name, std::size_t out, std::size_t in_per_group, std::size_t kh,
                     std::size_t kw) {
    return store_.add(join(name), diff::fan_in_uniform<T>(Shape{out, in_per_group, kh, kw}, in_per_group * kh * kw,
                                                          rng_));
  }
  Parameter<T>& dense(const std::string& name, Shape shape, std::size_t fan_in) {
    return store_.add(join(name), diff::fan_in_uniform<T>(std::move(shape), fan_in, rng_));
  }
  Parameter<T>& constant(const std::string& name, Shape shape, T value) {
    return store_.add(join(name), Tensor<T>(std::move(shape), value));
  }
  diff::NormStats<T>& norm_stats(std::size_t channels) { return store_.add_norm_stats(channels); }

 private:
  std::string join(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

  diff::ParameterStore<T>& store_;
  Rng& rng_;
  std::string prefix_;
};

template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Var<T> forward(Ctx<T>& ctx, Var<T> x) const = 0;
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

// Batch norm with optional affine terms; always tracks running statistics.
template <typename T>
class BatchNorm : public Module<T> {
 public:
  BatchNorm(Builder<T>& b, std::size_t channels, bool affine);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const override;

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  diff::NormStats<T>* stats_ = nullptr;
};

// relu -> conv -> bn
template <typename T>
class ReluConvBn : public Module<T> {
 public:
  ReluConvBn(Builder<T> b, std::size_t c_in, std::size_t c_out, int kernel, int stride, int padding, bool affine);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const override;

 private:
  Parameter<T>* w_;
  diff::Conv2dSpec spec_;
  BatchNorm<T> bn_;
};

// relu -> depthwise (dilated) conv -> pointwise conv -> bn
template <typename T>
class DilConv : public Module<T> {
 public:
  DilConv(Builder<T> b, std::size_t c_in, std::size_t c_out, int kernel, int stride, int padding, int dilation,
          bool affine);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const override;

 private:
  Parameter<T>* depthwise_;
  Parameter<T>* pointwise_;
  diff::Conv2dSpec spec_;
  BatchNorm<T> bn_;
};

// Two stacked DilConvs with dilation 1; only the first carries the stride.
template <typename T>
class SepConv : public Module<T> {
 public:
  SepConv(Builder<T> b, std::size_t c_in, std::size_t c_out, int kernel, int stride, int padding, bool affine);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const override;

 private:
  DilConv<T> first_;
  DilConv<T> second_;
};

// Stride-2 reduction: relu, two 1x1 stride-2 convs on x and on x shifted by one
// pixel, concatenated, then bn. Output extent is ceil(in / 2).
template <typename T>
class FactorizedReduce : public Module<T> {
 public:
  FactorizedReduce(Builder<T> b, std::size_t c_in, std::size_t c_out, bool affine);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const override;

 private:
  Parameter<T>* a_;
  Parameter<T>* b_;
  BatchNorm<T> bn_;
};

template <typename T>
class Identity : public Module<T> {
 public:
  Var<T> forward(Ctx<T>&, Var<T> x) const override { return x; }
};

template <typename T>
class Zero : public Module<T> {
 public:
  explicit Zero(int stride) : stride_(stride) {}
  Var<T> forward(Ctx<T>&, Var<T> x) const override { return diff::zero_op(x, stride_); }

 private:
  int stride_;
};

// 3x3 max or average pool, padding 1, optionally followed by a non-affine bn.
template <typename T>
class Pool : public Module<T> {
 public:
  Pool(Builder<T> b, std::size_t channels, bool max, int stride, bool bn_after);
  Var<T> forward(Ctx<T>& ctx, Var<T> x) const override;

 private:
  bool max_;
  diff::Pool2dSpec spec_;
  std::optional<BatchNorm<T>> bn_;
};

// search_mode: pools get a trailing bn, as in the supernet.
template <typename T>
ModulePtr<T> make_op(OpKind op, Builder<T> b, std::size_t channels, int stride, bool affine, bool search_mode);

// Partial-channel mixed op: the first C/K channels go through every candidate op
// and are combined with the op weights; the rest bypass (max-pooled when the edge
// has stride 2). The result is channel-shuffled with K groups.
template <typename T>
class MixedOp {
 public:
  MixedOp(Builder<T> b, const CellTopology& topo, std::size_t channels, int stride);
  // op_weights: vector of length |ops| (already softmaxed).
  Var<T> forward(Ctx<T>& ctx, Var<T> x, Var<T> op_weights) const;

 private:
  std::vector<ModulePtr<T>> ops_;
  std::size_t channels_;
  std::size_t k_;
  int stride_;
};

// Supernet cell. Both inputs are preprocessed to C channels, every intermediate
// node sums beta-weighted mixed ops over all earlier states, and the cell output
// concatenates the intermediate nodes.
template <typename T>
class SearchCell {
 public:
  SearchCell(Builder<T> b, const CellTopology& topo, std::size_t c_prev_prev, std::size_t c_prev, std::size_t c,
             bool reduction, bool reduction_prev);
  // alpha: [edges, ops] raw, beta: [edges] raw (softmaxes are applied here).
  Var<T> forward(Ctx<T>& ctx, Var<T> s0, Var<T> s1, Var<T> alpha, Var<T> beta) const;
  bool reduction() const { return reduction_; }
  std::size_t out_channels() const { return c_ * static_cast<std::size_t>(topo_.intermediate_nodes); }

 private:
  CellTopology topo_;
  std::size_t c_;
  bool reduction_;
  ModulePtr<T> pre0_;
  ModulePtr<T> pre1_;
  std::vector<MixedOp<T>> edges_;
};

// Cell of the discovered network: each node sums its two chosen ops.
template <typename T>
class DiscreteCell {
 public:
  DiscreteCell(Builder<T> b, const Genotype& g, std::size_t c_prev_prev, std::size_t c_prev, std::size_t c,
               bool reduction, bool reduction_prev);
  Var<T> forward(Ctx<T>& ctx, Var<T> s0, Var<T> s1) const;
  std::size_t out_channels() const { return c_ * concat_.size(); }

 private:
  std::size_t c_;
  std::vector<GeneEdge> genes_;
  std::vector<int> concat_;
  ModulePtr<T> pre0_;
  ModulePtr<T> pre1_;
  std::vector<ModulePtr<T>> ops_;
};

}  // namespace danas::arch
