// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/archspace/checks.hpp"

#include <random>

#include "danas/archspace/modules.hpp"

namespace danas::arch {
namespace {

Tensor<double> uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (double& v : t.values()) v = d(rng);
  return t;
}

CellTopology small_topology() {
  CellTopology topo;
  topo.intermediate_nodes = 2;
  topo.ops = reduced_ops();
  topo.partial_k = 2;
  return topo;
}

double run_mixed_op(std::uint64_t seed, const diff::CheckOptions& opt, int stride) {
  Rng rng(seed);
  const CellTopology topo = small_topology();
  diff::ParameterStore<double> store;
  MixedOp<double> op(Builder<double>(store, rng), topo, 4, stride);
  Parameter<double> x{"x", uniform({2, 4, 5, 4}, rng)};
  Parameter<double> alpha{"alpha", uniform({topo.ops.size()}, rng)};
  Tensor<double> direction;
  diff::GraphBuilder build = [&](Tape<double>& t) {
    Ctx<double> ctx{t, NormMode::kTrainFrozen, false, true};
    Var<double> y = op.forward(ctx, t.parameter(x, true), diff::softmax(t.parameter(alpha, true)));
    if (direction.empty()) direction = uniform(y.shape(), rng);
    return diff::sum(diff::mul(y, t.constant(direction)));
  };
  std::vector<Parameter<double>*> params{&alpha, &x};
  return diff::check_parameters(build, params, opt);
}

double run_cell(std::uint64_t seed, const diff::CheckOptions& opt, bool reduction) {
  Rng rng(seed);
  const CellTopology topo = small_topology();
  diff::ParameterStore<double> store;
  SearchCell<double> cell(Builder<double>(store, rng), topo, 4, 4, 4, reduction, false);
  Parameter<double> s0{"s0", uniform({2, 4, 5, 4}, rng)};
  Parameter<double> s1{"s1", uniform({2, 4, 5, 4}, rng)};
  Parameter<double> alpha{"alpha", uniform({topo.edge_count(), topo.ops.size()}, rng)};
  Parameter<double> beta{"beta", uniform({topo.edge_count()}, rng)};
  Tensor<double> direction;
  diff::GraphBuilder build = [&](Tape<double>& t) {
    Ctx<double> ctx{t, NormMode::kTrainFrozen, false, true};
    Var<double> y = cell.forward(ctx, t.parameter(s0, true), t.parameter(s1, true), ctx.arch(alpha), ctx.arch(beta));
    if (direction.empty()) direction = uniform(y.shape(), rng);
    return diff::sum(diff::mul(y, t.constant(direction)));
  };
  std::vector<Parameter<double>*> params{&alpha, &beta, &s1};
  return diff::check_parameters(build, params, opt);
}

}  // namespace

std::vector<diff::CheckCase> mixed_op_checks() {
  return {
      {"mixed_op", [](std::uint64_t s, const diff::CheckOptions& o) { return run_mixed_op(s, o, 1); }},
      {"mixed_op_stride2", [](std::uint64_t s, const diff::CheckOptions& o) { return run_mixed_op(s, o, 2); }},
      {"search_cell_normal", [](std::uint64_t s, const diff::CheckOptions& o) { return run_cell(s, o, false); }},
      {"search_cell_reduce", [](std::uint64_t s, const diff::CheckOptions& o) { return run_cell(s, o, true); }},
  };
}

}  // namespace danas::arch
