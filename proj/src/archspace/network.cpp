// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/archspace/network.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::arch {

std::vector<int> reduction_indices(int num_cells) {
  require(num_cells >= 3, fmt::format("network: {} cells, need at least 3", num_cells));
  return {num_cells / 3, 2 * num_cells / 3};
}

namespace {

bool is_reduction(const std::vector<int>& reds, int i) { return std::find(reds.begin(), reds.end(), i) != reds.end(); }

diff::Conv2dSpec stem_spec() {
  diff::Conv2dSpec s;
  s.padding = {1, 1};
  return s;
}

}  // namespace

template <typename T>
Supernet<T>::Supernet(const CellTopology& topo, const NetworkShape& shape, diff::ParameterStore<T>& weights,
                      Rng& weight_rng, Rng& arch_rng, double arch_sigma)
    : topo_(topo), shape_(shape) {
  topo_.validate();
  const std::vector<int> reds = reduction_indices(shape.num_cells);
  require(shape.channels > 0 && shape.classes > 0 && shape.in_channels > 0, "supernet: empty dimension");
  arch_ = ArchParams<T>::init(topo_, arch_rng, arch_sigma);

  Builder<T> b(weights, weight_rng);
  const std::size_t c_stem = shape.stem_multiplier * shape.channels;
  Builder<T> stem = b.child("stem");
  stem_w_ = &stem.conv("conv", c_stem, shape.in_channels, 3, 3);
  stem_bn_ = std::make_unique<BatchNorm<T>>(stem, c_stem, true);

  std::size_t c_pp = c_stem, c_p = c_stem, c = shape.channels;
  bool reduction_prev = false;
  for (int i = 0; i < shape.num_cells; ++i) {
    const bool reduction = is_reduction(reds, i);
    if (reduction) c *= 2;
    cells_.emplace_back(b.child(fmt::format("cell{}", i)), topo_, c_pp, c_p, c, reduction, reduction_prev);
    reduction_prev = reduction;
    c_pp = c_p;
    c_p = cells_.back().out_channels();
  }
  head_w_ = &b.dense("head.weight", Shape{shape.classes, c_p}, c_p);
  head_b_ = &b.dense("head.bias", Shape{shape.classes}, c_p);
}

template <typename T>
Var<T> Supernet<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  return diff::linear(diff::global_avg_pool(features(ctx, x)), ctx.weight(*head_w_), ctx.weight(*head_b_));
}

template <typename T>
Var<T> Supernet<T>::features(Ctx<T>& ctx, Var<T> x) const {
  require(x.shape().size() == 4 && x.shape()[1] == shape_.in_channels,
          "supernet: input must be [N, " + std::to_string(shape_.in_channels) + ", H, W]");
  Var<T> s0 = stem_bn_->forward(ctx, diff::conv2d(x, ctx.weight(*stem_w_), stem_spec()));
  Var<T> s1 = s0;
  const Var<T> an = ctx.arch(arch_.alpha_normal), ar = ctx.arch(arch_.alpha_reduce);
  const Var<T> bn = ctx.arch(arch_.beta_normal), br = ctx.arch(arch_.beta_reduce);
  for (const SearchCell<T>& cell : cells_) {
    Var<T> s = cell.reduction() ? cell.forward(ctx, s0, s1, ar, br) : cell.forward(ctx, s0, s1, an, bn);
    s0 = s1;
    s1 = s;
  }
  return s1;
}

template <typename T>
DiscreteNet<T>::DiscreteNet(const Genotype& g, const NetworkShape& shape, diff::ParameterStore<T>& weights, Rng& rng)
    : shape_(shape) {
  g.validate();
  const std::vector<int> reds = reduction_indices(shape.num_cells);
  require(shape.channels > 0 && shape.classes > 0 && shape.in_channels > 0, "network: empty dimension");
  Builder<T> b(weights, rng);
  const std::size_t c_stem = shape.stem_multiplier * shape.channels;
  Builder<T> stem = b.child("stem");
  stem_w_ = &stem.conv("conv", c_stem, shape.in_channels, 3, 3);
  stem_bn_ = std::make_unique<BatchNorm<T>>(stem, c_stem, true);

  std::size_t c_pp = c_stem, c_p = c_stem, c = shape.channels;
  bool reduction_prev = false;
  for (int i = 0; i < shape.num_cells; ++i) {
    const bool reduction = is_reduction(reds, i);
    if (reduction) c *= 2;
    cells_.emplace_back(b.child(fmt::format("cell{}", i)), g, c_pp, c_p, c, reduction, reduction_prev);
    reduction_prev = reduction;
    c_pp = c_p;
    c_p = cells_.back().out_channels();
  }
  head_features_ = c_p;
  head_w_ = &b.dense("head.weight", Shape{shape.classes, c_p}, c_p);
  head_b_ = &b.dense("head.bias", Shape{shape.classes}, c_p);
}

template <typename T>
Var<T> DiscreteNet<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  return diff::linear(diff::global_avg_pool(features(ctx, x)), ctx.weight(*head_w_), ctx.weight(*head_b_));
}

template <typename T>
Var<T> DiscreteNet<T>::features(Ctx<T>& ctx, Var<T> x) const {
  require(x.shape().size() == 4 && x.shape()[1] == shape_.in_channels,
          "network: input must be [N, " + std::to_string(shape_.in_channels) + ", H, W]");
  Var<T> s0 = stem_bn_->forward(ctx, diff::conv2d(x, ctx.weight(*stem_w_), stem_spec()));
  Var<T> s1 = s0;
  for (const DiscreteCell<T>& cell : cells_) {
    Var<T> s = cell.forward(ctx, s0, s1);
    s0 = s1;
    s1 = s;
  }
  return s1;
}

ParamBreakdown param_breakdown(const Genotype& g, const NetworkShape& shape) {
  diff::ParameterStore<float> store;
  Rng rng(0);
  DiscreteNet<float> net(g, shape, store, rng);
  ParamBreakdown out;
  for (const Parameter<float>* p : std::as_const(store).parameters()) {
    const std::size_t n = p->value.size();
    if (p->name.rfind("stem.", 0) == 0) {
      out.stem += n;
    } else if (p->name.rfind("head.", 0) == 0) {
      out.head += n;
    } else {
      out.cells += n;
    }
  }
  return out;
}

std::size_t param_count(const Genotype& g, const NetworkShape& shape) { return param_breakdown(g, shape).total(); }

template class Supernet<float>;
template class Supernet<double>;
template class DiscreteNet<float>;
template class DiscreteNet<double>;

}  // namespace danas::arch
