// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "danas/archspace/topology.hpp"

namespace danas::arch {

struct GeneEdge {
  OpKind op = OpKind::kSkip;
  int source = 0;  // 0, 1: cell inputs; k >= 2: intermediate node k - 2
  bool operator==(const GeneEdge&) const = default;
};

// Two edges per intermediate node, in node order.
struct Genotype {
  std::vector<GeneEdge> normal;
  std::vector<GeneEdge> reduce;
  std::vector<int> concat;
  bool operator==(const Genotype&) const = default;

  int intermediate_nodes() const { return static_cast<int>(normal.size() / 2); }
  // ContractViolation on a malformed genotype ('none', bad sources, odd sizes).
  void validate() const;
};

// {"normal": [[op, src], ...], "reduce": [...], "concat": [...]}
std::string genotype_to_json(const Genotype& g);
Genotype genotype_from_json(const std::string& text);  // FormatError on schema problems

// One cell's selection. alpha is [edges x ops] row-major, beta has one entry per edge.
// Per edge: score = softmax_ops(alpha)[best non-none op] * softmax over the node's
// incoming betas. Each node keeps its two best edges. Ties: lowest op index, then
// lowest edge index. Edges are listed by ascending source.
std::vector<GeneEdge> discretize_cell(std::span<const double> alpha, std::span<const double> beta,
                                      const CellTopology& topo);

template <typename T>
Genotype discretize(const ArchParams<T>& arch, const CellTopology& topo);

}  // namespace danas::arch
