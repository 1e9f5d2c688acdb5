// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/archspace/genotype.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include "json.hpp"

#include "danas/common/error.hpp"

namespace danas::arch {

using nlohmann::json;

void Genotype::validate() const {
  require(!normal.empty() && normal.size() % 2 == 0, "genotype: normal cell needs two edges per node");
  require(reduce.size() == normal.size(), "genotype: normal and reduce cells differ in node count");
  const int nodes = intermediate_nodes();
  for (const auto* cell : {&normal, &reduce}) {
    for (std::size_t i = 0; i < cell->size(); ++i) {
      const GeneEdge& e = (*cell)[i];
      const int target = static_cast<int>(i / 2) + 2;
      require(e.op != OpKind::kNone, "genotype: 'none' cannot be selected");
      require(e.source >= 0 && e.source < target,
              fmt::format("genotype: node {} reads from node {}, which does not precede it", target, e.source));
    }
  }
  require(!concat.empty(), "genotype: empty concat list");
  for (int c : concat) {
    require(c >= 2 && c < nodes + 2, fmt::format("genotype: concat node {} out of range", c));
  }
}

namespace {

json cell_json(const std::vector<GeneEdge>& cell) {
  json a = json::array();
  for (const GeneEdge& e : cell) a.push_back(json::array({std::string(op_name(e.op)), e.source}));
  return a;
}

std::vector<GeneEdge> cell_from(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw FormatError(fmt::format("genotype: missing array '{}'", key));
  std::vector<GeneEdge> out;
  for (const json& e : j[key]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_integer()) {
      throw FormatError(fmt::format("genotype: entries of '{}' must be [op, source]", key));
    }
    out.push_back(GeneEdge{parse_op(e[0].get<std::string>()), e[1].get<int>()});
  }
  return out;
}

}  // namespace

std::string genotype_to_json(const Genotype& g) {
  json j;
  j["normal"] = cell_json(g.normal);
  j["reduce"] = cell_json(g.reduce);
  j["concat"] = g.concat;
  return j.dump(2) + "\n";
}

Genotype genotype_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("genotype: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("genotype: expected an object");
  Genotype g;
  g.normal = cell_from(j, "normal");
  g.reduce = cell_from(j, "reduce");
  if (!j.contains("concat") || !j["concat"].is_array()) throw FormatError("genotype: missing array 'concat'");
  for (const json& c : j["concat"]) {
    if (!c.is_number_integer()) throw FormatError("genotype: concat entries must be integers");
    g.concat.push_back(c.get<int>());
  }
  try {
    g.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(e.what());
  }
  return g;
}

namespace {

std::vector<double> softmax(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) total += out[i] = std::exp(v[i] - top);
  for (double& x : out) x /= total;
  return out;
}

}  // namespace

std::vector<GeneEdge> discretize_cell(std::span<const double> alpha, std::span<const double> beta,
                                      const CellTopology& topo) {
  topo.validate();
  const std::size_t ops = topo.ops.size(), edges = topo.edge_count();
  require(alpha.size() == edges * ops, "discretize: alpha size does not match the topology");
  require(beta.size() == edges, "discretize: beta size does not match the topology");
  for (double v : alpha) require(std::isfinite(v), "discretize: non-finite alpha");
  for (double v : beta) require(std::isfinite(v), "discretize: non-finite beta");

  std::vector<GeneEdge> out;
  for (int node = 0; node < topo.intermediate_nodes; ++node) {
    const std::size_t start = topo.first_edge(node), n = static_cast<std::size_t>(node) + 2;
    const std::vector<double> b = softmax(beta.subspan(start, n));
    std::vector<double> score(n);
    std::vector<OpKind> best_op(n);
    for (std::size_t j = 0; j < n; ++j) {
      const std::vector<double> a = softmax(alpha.subspan((start + j) * ops, ops));
      std::size_t best = ops;
      for (std::size_t o = 0; o < ops; ++o) {
        if (topo.ops[o] == OpKind::kNone) continue;
        if (best == ops || a[o] > a[best]) best = o;
      }
      best_op[j] = topo.ops[best];
      score[j] = a[best] * b[j];
    }
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return score[x] > score[y]; });
    std::size_t first = std::min(order[0], order[1]), second = std::max(order[0], order[1]);
    out.push_back(GeneEdge{best_op[first], static_cast<int>(first)});
    out.push_back(GeneEdge{best_op[second], static_cast<int>(second)});
  }
  return out;
}

template <typename T>
Genotype discretize(const ArchParams<T>& arch, const CellTopology& topo) {
  auto as_double = [](const Parameter<T>& p) {
    std::vector<double> v;
    for (T x : p.value.values()) v.push_back(static_cast<double>(x));
    return v;
  };
  Genotype g;
  g.normal = discretize_cell(as_double(arch.alpha_normal), as_double(arch.beta_normal), topo);
  g.reduce = discretize_cell(as_double(arch.alpha_reduce), as_double(arch.beta_reduce), topo);
  for (int i = 0; i < topo.intermediate_nodes; ++i) g.concat.push_back(i + 2);
  return g;
}

template Genotype discretize<float>(const ArchParams<float>&, const CellTopology&);
template Genotype discretize<double>(const ArchParams<double>&, const CellTopology&);

}  // namespace danas::arch
