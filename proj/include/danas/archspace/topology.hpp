// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "danas/common/rng.hpp"
#include "danas/diffcore/tape.hpp"

namespace danas::arch {

using diff::Parameter;
using diff::Shape;
using diff::Tensor;

enum class OpKind {
  kNone,
  kSkip,
  kSepConv3,
  kSepConv5,
  kDilConv3,
  kDilConv5,
  kMaxPool3,
  kAvgPool3,
};

std::string_view op_name(OpKind op);
OpKind parse_op(std::string_view name);  // FormatError on unknown names

// none, skip_connect, sep_conv_3x3, sep_conv_5x5, dil_conv_3x3, dil_conv_5x5, max_pool_3x3, avg_pool_3x3
std::vector<OpKind> darts_ops();
// none, skip_connect, sep_conv_3x3, max_pool_3x3
std::vector<OpKind> reduced_ops();

struct CellTopology {
  int intermediate_nodes = 4;
  std::vector<OpKind> ops = darts_ops();
  int partial_k = 2;  // 1/K of the channels go through the mixed op

  // Node i (0-based intermediate) has i + 2 incoming edges.
  std::size_t edge_count() const;
  std::size_t first_edge(int node) const;
  void validate() const;  // ContractViolation on an empty op list, I < 1 or K < 1
};

// Relaxed architecture parameters. alpha_* is [edges, ops], beta_* is [edges].
template <typename T>
struct ArchParams {
  Parameter<T> alpha_normal;
  Parameter<T> alpha_reduce;
  Parameter<T> beta_normal;
  Parameter<T> beta_reduce;

  // Gaussian(0, sigma) initialisation.
  static ArchParams init(const CellTopology& topo, Rng& rng, double sigma);
  std::vector<Parameter<T>*> all();
  std::vector<const Parameter<T>*> all() const;
};

}  // namespace danas::arch
