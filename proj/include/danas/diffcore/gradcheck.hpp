// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of analytic gradients (64-bit only).

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "danas/diffcore/tape.hpp"

namespace danas::diff {

// Rebuilds the computation on a fresh tape and returns the scalar loss. Called
// once for the analytic pass and twice per perturbed element.
using GraphBuilder = std::function<Var<double>(Tape<double>&)>;

// max_i |analytic_i - central_i| / max(1, |central_i|) over the elements of param.
// Returns +inf when the loss is non-finite at a perturbed point.
// sign_fault names a primitive whose gradient rule is negated on the analytic pass.
double finite_diff_check(const GraphBuilder& build, Parameter<double>& param, double epsilon,
                         std::string_view sign_fault = {});

struct CheckOptions {
  double epsilon = 1e-5;
  std::string sign_fault;
};

// One randomised gradient check; returns the worst relative error over every
// parameter of the instance drawn from the seed.
struct CheckCase {
  std::string name;
  std::function<double(std::uint64_t seed, const CheckOptions&)> run;
};

struct CheckOutcome {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  bool passed = false;
};

struct GradcheckSummary {
  std::vector<CheckOutcome> outcomes;
  double tolerance = 1e-4;
  bool passed() const;
};

// One case per entry of primitive_set().
std::vector<CheckCase> primitive_checks();

GradcheckSummary run_checks(std::span<const CheckCase> cases, std::size_t instances, std::uint64_t seed,
                            double tolerance, const CheckOptions& options = {});

// Convenience for building checks: max error over several parameters.
double check_parameters(const GraphBuilder& build, std::span<Parameter<double>* const> params,
                        const CheckOptions& options);

}  // namespace danas::diff
