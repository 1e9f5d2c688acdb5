// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/archspace/topology.hpp"

#include <array>
#include <string>

#include "danas/common/error.hpp"
#include "danas/diffcore/parameters.hpp"

namespace danas::arch {
namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 8> kNames = {{
    {OpKind::kNone, "none"},
    {OpKind::kSkip, "skip_connect"},
    {OpKind::kSepConv3, "sep_conv_3x3"},
    {OpKind::kSepConv5, "sep_conv_5x5"},
    {OpKind::kDilConv3, "dil_conv_3x3"},
    {OpKind::kDilConv5, "dil_conv_5x5"},
    {OpKind::kMaxPool3, "max_pool_3x3"},
    {OpKind::kAvgPool3, "avg_pool_3x3"},
}};

}  // namespace

std::string_view op_name(OpKind op) {
  for (const auto& [k, n] : kNames) {
    if (k == op) return n;
  }
  throw ContractViolation("op_name: unknown op");
}

OpKind parse_op(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw FormatError("unknown operation '" + std::string(name) + "'");
}

std::vector<OpKind> darts_ops() {
  std::vector<OpKind> out;
  for (const auto& [k, n] : kNames) out.push_back(k);
  return out;
}

std::vector<OpKind> reduced_ops() { return {OpKind::kNone, OpKind::kSkip, OpKind::kSepConv3, OpKind::kMaxPool3}; }

std::size_t CellTopology::edge_count() const {
  std::size_t n = 0;
  for (int i = 0; i < intermediate_nodes; ++i) n += static_cast<std::size_t>(i) + 2;
  return n;
}

std::size_t CellTopology::first_edge(int node) const {
  std::size_t n = 0;
  for (int i = 0; i < node; ++i) n += static_cast<std::size_t>(i) + 2;
  return n;
}

void CellTopology::validate() const {
  require(intermediate_nodes >= 1, "topology: need at least one intermediate node");
  require(!ops.empty(), "topology: empty candidate op list");
  require(partial_k >= 1, "topology: partial channel K must be >= 1");
  bool any = false;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    any |= ops[i] != OpKind::kNone;
    for (std::size_t j = 0; j < i; ++j) require(ops[i] != ops[j], "topology: duplicate candidate op");
  }
  require(any, "topology: every candidate is 'none'");
}

template <typename T>
ArchParams<T> ArchParams<T>::init(const CellTopology& topo, Rng& rng, double sigma) {
  topo.validate();
  const std::size_t e = topo.edge_count(), o = topo.ops.size();
  ArchParams<T> a;
  a.alpha_normal = {"alpha_normal", diff::gaussian<T>(Shape{e, o}, sigma, rng)};
  a.alpha_reduce = {"alpha_reduce", diff::gaussian<T>(Shape{e, o}, sigma, rng)};
  a.beta_normal = {"beta_normal", diff::gaussian<T>(Shape{e}, sigma, rng)};
  a.beta_reduce = {"beta_reduce", diff::gaussian<T>(Shape{e}, sigma, rng)};
  return a;
}

template <typename T>
std::vector<Parameter<T>*> ArchParams<T>::all() {
  return {&alpha_normal, &alpha_reduce, &beta_normal, &beta_reduce};
}

template <typename T>
std::vector<const Parameter<T>*> ArchParams<T>::all() const {
  return {&alpha_normal, &alpha_reduce, &beta_normal, &beta_reduce};
}

template struct ArchParams<float>;
template struct ArchParams<double>;

}  // namespace danas::arch
