// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/archspace/modules.hpp"

#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::arch {

template <typename T>
BatchNorm<T>::BatchNorm(Builder<T>& b, std::size_t channels, bool affine) {
  if (affine) {
    weight_ = &b.constant("bn.weight", Shape{channels}, T{1});
    bias_ = &b.constant("bn.bias", Shape{channels}, T{0});
  }
  stats_ = &b.norm_stats(channels);
}

template <typename T>
Var<T> BatchNorm<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  diff::OptVar<T> w, b;
  if (weight_ != nullptr) {
    w = ctx.weight(*weight_);
    b = ctx.weight(*bias_);
  }
  return diff::batch_norm(x, w, b, stats_, ctx.norm);
}

template <typename T>
ReluConvBn<T>::ReluConvBn(Builder<T> b, std::size_t c_in, std::size_t c_out, int kernel, int stride, int padding,
                          bool affine)
    : w_(&b.conv("conv", c_out, c_in, kernel, kernel)), bn_(b, c_out, affine) {
  spec_.stride = {stride, stride};
  spec_.padding = {padding, padding};
}

template <typename T>
Var<T> ReluConvBn<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  return bn_.forward(ctx, diff::conv2d(diff::relu(x), ctx.weight(*w_), spec_));
}

template <typename T>
DilConv<T>::DilConv(Builder<T> b, std::size_t c_in, std::size_t c_out, int kernel, int stride, int padding,
                    int dilation, bool affine)
    : depthwise_(&b.conv("dw", c_in, 1, kernel, kernel)),
      pointwise_(&b.conv("pw", c_out, c_in, 1, 1)),
      bn_(b, c_out, affine) {
  spec_.stride = {stride, stride};
  spec_.padding = {padding, padding};
  spec_.dilation = dilation;
  spec_.groups = static_cast<int>(c_in);
}

template <typename T>
Var<T> DilConv<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  Var<T> h = diff::conv2d(diff::relu(x), ctx.weight(*depthwise_), spec_);
  h = diff::conv2d(h, ctx.weight(*pointwise_), diff::Conv2dSpec{});
  return bn_.forward(ctx, h);
}

template <typename T>
SepConv<T>::SepConv(Builder<T> b, std::size_t c_in, std::size_t c_out, int kernel, int stride, int padding,
                    bool affine)
    : first_(b.child("a"), c_in, c_in, kernel, stride, padding, 1, affine),
      second_(b.child("b"), c_in, c_out, kernel, 1, padding, 1, affine) {}

template <typename T>
Var<T> SepConv<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  return second_.forward(ctx, first_.forward(ctx, x));
}

namespace {

std::size_t half_of(std::size_t c) {
  require(c % 2 == 0, fmt::format("factorized reduce: {} output channels is odd", c));
  return c / 2;
}

}  // namespace

template <typename T>
FactorizedReduce<T>::FactorizedReduce(Builder<T> b, std::size_t c_in, std::size_t c_out, bool affine)
    : a_(&b.conv("conv_a", half_of(c_out), c_in, 1, 1)),
      b_(&b.conv("conv_b", half_of(c_out), c_in, 1, 1)),
      bn_(b, c_out, affine) {}

template <typename T>
Var<T> FactorizedReduce<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  diff::Conv2dSpec spec;
  spec.stride = {2, 2};
  Var<T> h = diff::relu(x);
  const Var<T> parts[2] = {diff::conv2d(h, ctx.weight(*a_), spec),
                           diff::conv2d(diff::shift2d(h, 1, 1), ctx.weight(*b_), spec)};
  return bn_.forward(ctx, diff::concat_channels<T>(parts));
}

template <typename T>
Pool<T>::Pool(Builder<T> b, std::size_t channels, bool max, int stride, bool bn_after) : max_(max) {
  spec_ = diff::Pool2dSpec{3, stride, 1};
  if (bn_after) bn_.emplace(b, channels, false);
}

template <typename T>
Var<T> Pool<T>::forward(Ctx<T>& ctx, Var<T> x) const {
  Var<T> y = max_ ? diff::max_pool2d(x, spec_) : diff::avg_pool2d(x, spec_);
  return bn_ ? bn_->forward(ctx, y) : y;
}

template <typename T>
ModulePtr<T> make_op(OpKind op, Builder<T> b, std::size_t channels, int stride, bool affine, bool search_mode) {
  Builder<T> sub = b.child(std::string(op_name(op)));
  switch (op) {
    case OpKind::kNone:
      return std::make_unique<Zero<T>>(stride);
    case OpKind::kSkip:
      if (stride == 1) return std::make_unique<Identity<T>>();
      return std::make_unique<FactorizedReduce<T>>(sub, channels, channels, affine);
    case OpKind::kSepConv3:
      return std::make_unique<SepConv<T>>(sub, channels, channels, 3, stride, 1, affine);
    case OpKind::kSepConv5:
      return std::make_unique<SepConv<T>>(sub, channels, channels, 5, stride, 2, affine);
    case OpKind::kDilConv3:
      return std::make_unique<DilConv<T>>(sub, channels, channels, 3, stride, 2, 2, affine);
    case OpKind::kDilConv5:
      return std::make_unique<DilConv<T>>(sub, channels, channels, 5, stride, 4, 2, affine);
    case OpKind::kMaxPool3:
      return std::make_unique<Pool<T>>(sub, channels, true, stride, search_mode);
    case OpKind::kAvgPool3:
      return std::make_unique<Pool<T>>(sub, channels, false, stride, search_mode);
  }
  throw ContractViolation("make_op: unknown op");
}

template <typename T>
MixedOp<T>::MixedOp(Builder<T> b, const CellTopology& topo, std::size_t channels, int stride)
    : channels_(channels), k_(static_cast<std::size_t>(topo.partial_k)), stride_(stride) {
  require(channels % k_ == 0,
          fmt::format("mixed op: {} channels are not divisible by K = {}", channels, topo.partial_k));
  for (OpKind op : topo.ops) {
    ops_.push_back(make_op<T>(op, b, channels / k_, stride, false, true));
  }
}

template <typename T>
Var<T> MixedOp<T>::forward(Ctx<T>& ctx, Var<T> x, Var<T> op_weights) const {
  require(x.shape().size() == 4 && x.shape()[1] == channels_, "mixed op: unexpected input channels");
  require(op_weights.shape() == Shape{ops_.size()}, "mixed op: one weight per candidate op expected");
  const std::size_t part = channels_ / k_;
  Var<T> head = k_ == 1 ? x : diff::slice_channels(x, 0, part);
  std::vector<Var<T>> outs;
  outs.reserve(ops_.size());
  for (const ModulePtr<T>& op : ops_) outs.push_back(op->forward(ctx, head));
  Var<T> mixed = diff::weighted_sum<T>(outs, op_weights);
  if (k_ == 1) return mixed;
  Var<T> rest = diff::slice_channels(x, part, channels_);
  if (stride_ == 2) rest = diff::max_pool2d(rest, diff::Pool2dSpec{3, 2, 1});
  const Var<T> parts[2] = {mixed, rest};
  return diff::channel_shuffle(diff::concat_channels<T>(parts), k_);
}

namespace {

template <typename T>
ModulePtr<T> preprocess0(Builder<T> b, std::size_t c_pp, std::size_t c, bool reduction_prev, bool affine) {
  if (reduction_prev) return std::make_unique<FactorizedReduce<T>>(b.child("pre0"), c_pp, c, affine);
  return std::make_unique<ReluConvBn<T>>(b.child("pre0"), c_pp, c, 1, 1, 0, affine);
}

}  // namespace

template <typename T>
SearchCell<T>::SearchCell(Builder<T> b, const CellTopology& topo, std::size_t c_prev_prev, std::size_t c_prev,
                          std::size_t c, bool reduction, bool reduction_prev)
    : topo_(topo), c_(c), reduction_(reduction) {
  pre0_ = preprocess0<T>(b, c_prev_prev, c, reduction_prev, false);
  pre1_ = std::make_unique<ReluConvBn<T>>(b.child("pre1"), c_prev, c, 1, 1, 0, false);
  for (int node = 0; node < topo.intermediate_nodes; ++node) {
    for (int j = 0; j < node + 2; ++j) {
      const int stride = reduction && j < 2 ? 2 : 1;
      edges_.emplace_back(b.child(fmt::format("edge{}", edges_.size())), topo, c, stride);
    }
  }
}

template <typename T>
Var<T> SearchCell<T>::forward(Ctx<T>& ctx, Var<T> s0, Var<T> s1, Var<T> alpha, Var<T> beta) const {
  Var<T> op_w = diff::softmax(alpha);
  std::vector<Var<T>> states{pre0_->forward(ctx, s0), pre1_->forward(ctx, s1)};
  std::size_t offset = 0;
  for (int node = 0; node < topo_.intermediate_nodes; ++node) {
    const std::size_t n = static_cast<std::size_t>(node) + 2;
    Var<T> edge_w = diff::softmax(diff::slice(beta, offset, n));
    std::vector<Var<T>> outs;
    for (std::size_t j = 0; j < n; ++j) {
      outs.push_back(edges_[offset + j].forward(ctx, states[j], diff::select_row(op_w, offset + j)));
    }
    states.push_back(diff::weighted_sum<T>(outs, edge_w));
    offset += n;
  }
  return diff::concat_channels<T>(std::span<const Var<T>>(states).subspan(2));
}

template <typename T>
DiscreteCell<T>::DiscreteCell(Builder<T> b, const Genotype& g, std::size_t c_prev_prev, std::size_t c_prev,
                              std::size_t c, bool reduction, bool reduction_prev)
    : c_(c), genes_(reduction ? g.reduce : g.normal), concat_(g.concat) {
  g.validate();
  pre0_ = preprocess0<T>(b, c_prev_prev, c, reduction_prev, true);
  pre1_ = std::make_unique<ReluConvBn<T>>(b.child("pre1"), c_prev, c, 1, 1, 0, true);
  for (std::size_t i = 0; i < genes_.size(); ++i) {
    const int stride = reduction && genes_[i].source < 2 ? 2 : 1;
    ops_.push_back(make_op<T>(genes_[i].op, b.child(fmt::format("gene{}", i)), c, stride, true, false));
  }
}

template <typename T>
Var<T> DiscreteCell<T>::forward(Ctx<T>& ctx, Var<T> s0, Var<T> s1) const {
  std::vector<Var<T>> states{pre0_->forward(ctx, s0), pre1_->forward(ctx, s1)};
  for (std::size_t i = 0; i < genes_.size(); i += 2) {
    Var<T> a = ops_[i]->forward(ctx, states[static_cast<std::size_t>(genes_[i].source)]);
    Var<T> b = ops_[i + 1]->forward(ctx, states[static_cast<std::size_t>(genes_[i + 1].source)]);
    states.push_back(diff::add(a, b));
  }
  std::vector<Var<T>> picked;
  for (int c : concat_) picked.push_back(states[static_cast<std::size_t>(c)]);
  return diff::concat_channels<T>(picked);
}

#define DANAS_INSTANTIATE_MODULES(T)                                                          \
  template class BatchNorm<T>;                                                                \
  template class ReluConvBn<T>;                                                               \
  template class DilConv<T>;                                                                  \
  template class SepConv<T>;                                                                  \
  template class FactorizedReduce<T>;                                                         \
  template class Pool<T>;                                                                     \
  template ModulePtr<T> make_op<T>(OpKind, Builder<T>, std::size_t, int, bool, bool);         \
  template class MixedOp<T>;                                                                  \
  template class SearchCell<T>;                                                               \
  template class DiscreteCell<T>;

DANAS_INSTANTIATE_MODULES(float)
DANAS_INSTANTIATE_MODULES(double)

}  // namespace danas::arch
