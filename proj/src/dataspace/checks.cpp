// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/dataspace/checks.hpp"

#include <random>

#include "danas/common/rng.hpp"
#include "danas/dataspace/align.hpp"

namespace danas::data {
namespace {

using diff::Tape;
using diff::Var;

const std::vector<DataConfig> kSpace = {{400, 200, 40}, {640, 160, 40}, {640, 320, 40}};

Tensor<double> uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (double& v : t.values()) v = d(rng);
  return t;
}

double run_mixing(std::uint64_t seed, const diff::CheckOptions& opt, AlignStrategy strategy) {
  Rng rng(seed);
  diff::ParameterStore<double> store;
  AlignmentPlan<double> plan = make_plan<double>(kSpace, strategy, &store);
  // Perturb the box initialisation so the kernel gradient is not symmetric.
  for (diff::Parameter<double>* p : store.parameters()) {
    for (double& v : p->value.values()) v += 0.1 * std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  diff::Parameter<double> gamma{"gamma", uniform({kSpace.size()}, rng, -2.0, 2.0)};
  std::vector<Tensor<double>> inputs;
  for (const FeatureShape& s : plan.shapes) inputs.push_back(uniform({2, 1, s.frames, s.coefficients}, rng));
  const Tensor<double> direction = uniform({2, 1, plan.target.frames, plan.target.coefficients}, rng);

  diff::GraphBuilder build = [&](Tape<double>& t) {
    std::vector<Var<double>> aligned = align<double>(t, inputs, plan, true);
    Var<double> w = diff::softmax(t.parameter(gamma, true));
    Var<double> mixed = mix_inputs<double>(aligned, w);
    return diff::sum(diff::mul(mixed, t.constant(direction)));
  };
  std::vector<diff::Parameter<double>*> params{&gamma};
  for (diff::Parameter<double>* p : store.parameters()) params.push_back(p);
  return diff::check_parameters(build, params, opt);
}

}  // namespace

std::vector<diff::CheckCase> mixing_checks() {
  return {
      {"gamma_mixing_zero_pad",
       [](std::uint64_t seed, const diff::CheckOptions& o) { return run_mixing(seed, o, AlignStrategy::kZeroPad); }},
      {"gamma_mixing_pre_process",
       [](std::uint64_t seed, const diff::CheckOptions& o) { return run_mixing(seed, o, AlignStrategy::kPreProcess); }},
  };
}

}  // namespace danas::data
