// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"

#include "danas/diffcore/gradcheck.hpp"
#include "danas/diffcore/ops.hpp"
#include "danas/diffcore/optim.hpp"
#include "danas/diffcore/parameters.hpp"

using namespace danas;
using namespace danas::diff;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) {
    v = d(rng);
  }
  return t;
}

// Straight seven-loop convolution used as an independent forward oracle.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Conv2dSpec& s) {
  const long N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long O = w.dim(0), CG = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  const long OG = O / s.groups;
  const long HO = (H + 2 * s.padding[0] - s.dilation * (KH - 1) - 1) / s.stride[0] + 1;
  const long WO = (W + 2 * s.padding[1] - s.dilation * (KW - 1) - 1) / s.stride[1] + 1;
  Tensor<double> out(Shape{static_cast<std::size_t>(N), static_cast<std::size_t>(O), static_cast<std::size_t>(HO),
                           static_cast<std::size_t>(WO)});
  for (long n = 0; n < N; ++n)
    for (long o = 0; o < O; ++o)
      for (long oy = 0; oy < HO; ++oy)
        for (long ox = 0; ox < WO; ++ox) {
          double acc = 0;
          const long g = o / OG;
          for (long c = 0; c < CG; ++c)
            for (long ky = 0; ky < KH; ++ky)
              for (long kx = 0; kx < KW; ++kx) {
                const long iy = oy * s.stride[0] - s.padding[0] + ky * s.dilation;
                const long ix = ox * s.stride[1] - s.padding[1] + kx * s.dilation;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x[((n * C + g * CG + c) * H + iy) * W + ix] * w[((o * CG + c) * KH + ky) * KW + kx];
              }
          out[((n * O + o) * HO + oy) * WO + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tape<double> t;
  Var<double> y = softmax(t.constant(Tensor<double>(Shape{3}, 0.0)));
  for (double v : y.value().values()) {
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("cross entropy of a uniform prediction over 8 classes is ln 8") {
  Tape<double> t;
  std::vector<int> labels{3};
  Var<double> loss = cross_entropy(t.constant(Tensor<double>(Shape{1, 8}, 0.25)), labels);
  CHECK(loss.value().item() == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  CHECK(std::log(8.0) == doctest::Approx(2.0794).epsilon(1e-4));
}

TEST_CASE("zero op has the post-stride shape") {
  Tape<double> t;
  Var<double> x = t.constant(Tensor<double>(Shape{2, 3, 49, 40}, 1.0));
  Var<double> z1 = zero_op(x, 1);
  Var<double> z2 = zero_op(x, 2);
  CHECK(z1.shape() == Shape{2, 3, 49, 40});
  CHECK(z2.shape() == Shape{2, 3, 25, 20});
  for (double v : z2.value().values()) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("backward of sum is all ones and of half squared norm is x") {
  Rng rng(7);
  Parameter<double> x{"x", random_tensor({2, 3, 4}, rng)};
  {
    Tape<double> t;
    auto g = t.backward(sum(t.parameter(x, true)));
    for (double v : g.at(&x).values()) {
      CHECK(v == 1.0);
    }
  }
  {
    Tape<double> t;
    Var<double> xv = t.parameter(x, true);
    auto g = t.backward(scale(sum(mul(xv, xv)), 0.5));
    for (std::size_t i = 0; i < x.value.size(); ++i) {
      CHECK(g.at(&x)[i] == doctest::Approx(x.value[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> t;
  Var<double> x = t.leaf(Tensor<double>(Shape{3}, 1.0));
  CHECK_THROWS_AS(t.backward(relu(x)), ContractViolation);
}

TEST_CASE("backward returns zeros for parameters the loss does not reach") {
  Parameter<double> a{"a", Tensor<double>(Shape{2}, 1.0)};
  Parameter<double> b{"b", Tensor<double>(Shape{2}, 1.0)};
  Tape<double> t;
  Var<double> av = t.parameter(a, true);
  t.parameter(b, true);
  auto g = t.backward(sum(av));
  REQUIRE(g.count(&b) == 1);
  CHECK(g.at(&b)[0] == 0.0);
}

TEST_CASE("conv2d forward matches the naive oracle") {
  Rng rng(3);
  const std::vector<std::pair<Conv2dSpec, Shape>> cases = {
      {Conv2dSpec{{1, 1}, {1, 1}, 1, 1}, Shape{4, 3, 3, 3}},
      {Conv2dSpec{{2, 2}, {1, 1}, 1, 1}, Shape{4, 3, 3, 3}},
      {Conv2dSpec{{2, 1}, {0, 2}, 1, 1}, Shape{2, 3, 3, 5}},
      {Conv2dSpec{{1, 1}, {2, 2}, 2, 3}, Shape{3, 1, 3, 3}},
      {Conv2dSpec{{2, 2}, {4, 4}, 2, 3}, Shape{6, 1, 5, 5}},
  };
  for (const auto& [spec, wshape] : cases) {
    Tensor<double> x = random_tensor({2, 3, 9, 8}, rng);
    Tensor<double> w = random_tensor(wshape, rng);
    Tape<double> t;
    Var<double> y = conv2d(t.constant(x), t.constant(w), spec);
    Tensor<double> ref = naive_conv(x, w, spec);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("random three-layer net matches central differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    Parameter<double> w1{"w1", random_tensor({3, 1, 3, 3}, rng)};
    Parameter<double> g1{"g1", random_tensor({3}, rng, 0.5, 1.5)};
    Parameter<double> b1{"b1", random_tensor({3}, rng)};
    Parameter<double> w2{"w2", random_tensor({3, 1, 3, 3}, rng)};
    Parameter<double> w3{"w3", random_tensor({4, 3}, rng)};
    Parameter<double> b3{"b3", random_tensor({4}, rng)};
    Tensor<double> x = random_tensor({3, 1, 6, 5}, rng);
    std::vector<int> labels{0, 3, 1};
    GraphBuilder build = [&](Tape<double>& t) {
      Var<double> h = conv2d(t.constant(x), t.parameter(w1, true), Conv2dSpec{{1, 1}, {1, 1}, 1, 1});
      h = batch_norm(h, t.parameter(g1, true), t.parameter(b1, true), static_cast<NormStats<double>*>(nullptr),
                     NormMode::kTrainFrozen);
      h = avg_pool2d(h, Pool2dSpec{3, 2, 1});
      h = conv2d(h, t.parameter(w2, true), Conv2dSpec{{1, 1}, {1, 1}, 1, 3});
      h = global_avg_pool(h);
      return cross_entropy(linear(h, t.parameter(w3, true), t.parameter(b3, true)), labels);
    };
    for (Parameter<double>* p : {&w1, &g1, &b1, &w2, &w3, &b3}) {
      CHECK(finite_diff_check(build, *p, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("finite difference examples") {
  Rng rng(11);
  SUBCASE("linear map is exact") {
    // No truncation error; what remains is loss roundoff over 2 * epsilon, so keep the loss small.
    Parameter<double> w{"w", random_tensor({3, 4}, rng, -0.25, 0.25)};
    Parameter<double> b{"b", random_tensor({3}, rng, -0.25, 0.25)};
    Tensor<double> x = random_tensor({2, 4}, rng, -0.25, 0.25);
    GraphBuilder build = [&](Tape<double>& t) {
      return sum(linear(t.constant(x), t.parameter(w, true), t.parameter(b, true)));
    };
    for (double eps : {1e-7, 1e-5, 1e-3}) {
      CHECK(finite_diff_check(build, w, eps) <= 1e-9);
      CHECK(finite_diff_check(build, b, eps) <= 1e-9);
    }
  }
  SUBCASE("softmax and cross-entropy head") {
    Parameter<double> logits{"logits", random_tensor({4, 6}, rng, -2, 2)};
    std::vector<int> labels{1, 5, 0, 2};
    GraphBuilder build = [&](Tape<double>& t) { return cross_entropy(t.parameter(logits, true), labels); };
    CHECK(finite_diff_check(build, logits, 1e-5) < 1e-6);
  }
  SUBCASE("convolution on a 1x4x8x8 input") {
    Parameter<double> x{"x", random_tensor({1, 4, 8, 8}, rng)};
    Parameter<double> w{"w", random_tensor({5, 4, 3, 3}, rng)};
    Tensor<double> r = random_tensor({1, 5, 8, 8}, rng);
    GraphBuilder build = [&](Tape<double>& t) {
      return sum(mul(conv2d(t.parameter(x, true), t.parameter(w, true), Conv2dSpec{{1, 1}, {1, 1}, 1, 1}),
                     t.constant(r)));
    };
    CHECK(finite_diff_check(build, x, 1e-5) < 1e-4);
    CHECK(finite_diff_check(build, w, 1e-5) < 1e-4);
  }
}

TEST_CASE("finite_diff_check preconditions and non-finite losses") {
  Parameter<double> p{"p", Tensor<double>(Shape{2}, 1.0)};
  GraphBuilder build = [&](Tape<double>& t) { return sum(t.parameter(p, true)); };
  CHECK_THROWS_AS(finite_diff_check(build, p, 1e-2), ContractViolation);
  CHECK_THROWS_AS(finite_diff_check(build, p, 1e-9), ContractViolation);

  GraphBuilder blows_up = [&](Tape<double>& t) {
    Var<double> v = t.parameter(p, true);
    const double factor = p.value[0] > 1.0 ? std::numeric_limits<double>::infinity() : 1.0;
    return scale(sum(v), factor);
  };
  CHECK(std::isinf(finite_diff_check(blows_up, p, 1e-5)));
}

TEST_CASE("every primitive passes the gradient check on ten random instances") {
  auto cases = primitive_checks();
  CHECK(cases.size() == primitive_set().size());
  GradcheckSummary summary = run_checks(cases, 10, 2026, 1e-4);
  for (const CheckOutcome& o : summary.outcomes) {
    INFO(o.name << " max error " << o.max_error);
    CHECK(o.passed);
    CHECK(o.instances == 10);
  }
  CHECK(summary.passed());
}

TEST_CASE("an injected sign error in a gradient rule is caught") {
  auto cases = primitive_checks();
  for (const char* op : {"relu", "conv2d", "batch_norm", "softmax"}) {
    CheckOptions opt;
    opt.sign_fault = op;
    GradcheckSummary summary = run_checks(cases, 2, 5, 1e-4, opt);
    bool caught = false;
    for (const CheckOutcome& o : summary.outcomes) {
      if (o.name == op) {
        caught = !o.passed;
      }
    }
    INFO(op);
    CHECK(caught);
    CHECK_FALSE(summary.passed());
  }
}

TEST_CASE("backward is bit-deterministic") {
  Rng rng(5);
  Parameter<float> w{"w", random_tensor({4, 2, 3, 3}, rng).cast<float>()};
  Tensor<float> x = random_tensor({3, 2, 7, 6}, rng).cast<float>();
  auto run = [&] {
    Tape<float> t;
    Var<float> y = relu(conv2d(t.constant(x), t.parameter(w, true), Conv2dSpec{{2, 2}, {1, 1}, 1, 1}));
    return t.backward(sum(max_pool2d(y, Pool2dSpec{3, 1, 1}))).at(&w);
  };
  CHECK(run() == run());
}

TEST_CASE("softmax stays on the simplex for moderate logits") {
  Rng rng(9);
  for (int k = 0; k < 200; ++k) {
    Tape<double> t;
    Var<double> y = softmax(t.constant(random_tensor({8}, rng, -50.0, 50.0)));
    double s = 0.0;
    for (double v : y.value().values()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
}

TEST_CASE("batch norm running statistics only move in train mode") {
  Rng rng(1);
  NormStats<double> stats{Tensor<double>(Shape{2}, 0.0), Tensor<double>(Shape{2}, 1.0)};
  Tensor<double> x = random_tensor({4, 2, 3, 3}, rng, 1.0, 3.0);
  {
    Tape<double> t;
    batch_norm(t.constant(x), std::nullopt, std::nullopt, &stats, NormMode::kTrainFrozen);
  }
  CHECK(stats.running_mean[0] == 0.0);
  CHECK(stats.running_var[1] == 1.0);
  {
    Tape<double> t;
    batch_norm(t.constant(x), std::nullopt, std::nullopt, &stats, NormMode::kTrain);
  }
  CHECK(stats.running_mean[0] > 0.1);
}

TEST_CASE("sgd_step follows the plain update and the velocity rule") {
  Parameter<double> theta{"theta", Tensor<double>(Shape{1}, 1.0)};
  std::vector<Parameter<double>*> params{&theta};

  SUBCASE("plain step") {
    OptimizerState<double> opt{0.1, 0.0, 0.0, {}};
    Gradients<double> g{{&theta, Tensor<double>(Shape{1}, 0.5)}};
    sgd_step<double>(params, g, opt);
    CHECK(theta.value[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(theta.value[0] == 1.0 - 0.1 * 0.5);
  }
  SUBCASE("zero gradient leaves theta unchanged") {
    OptimizerState<double> opt{0.1, 0.9, 0.0, {}};
    Gradients<double> g{{&theta, Tensor<double>(Shape{1}, 0.0)}};
    sgd_step<double>(params, g, opt);
    CHECK(theta.value[0] == 1.0);
  }
  SUBCASE("two momentum steps") {
    theta.value[0] = 0.0;
    OptimizerState<double> opt{0.1, 0.9, 0.0, {}};
    Gradients<double> g{{&theta, Tensor<double>(Shape{1}, 1.0)}};
    sgd_step<double>(params, g, opt);
    CHECK(theta.value[0] == doctest::Approx(-0.1).epsilon(1e-15));
    sgd_step<double>(params, g, opt);
    CHECK(theta.value[0] == doctest::Approx(-0.29).epsilon(1e-14));
    CHECK(opt.velocity.at(&theta).shape() == theta.value.shape());
  }
  SUBCASE("shape mismatch") {
    OptimizerState<double> opt{0.1, 0.0, 0.0, {}};
    Gradients<double> g{{&theta, Tensor<double>(Shape{2}, 1.0)}};
    CHECK_THROWS_AS(sgd_step<double>(params, g, opt), ContractViolation);
  }
}

TEST_CASE("sgd_step with zero learning rate is the identity") {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    Parameter<double> p{"p", random_tensor({5}, rng)};
    const Tensor<double> before = p.value;
    std::vector<Parameter<double>*> params{&p};
    OptimizerState<double> opt{0.0, 0.5, 1e-3, {}};
    Gradients<double> g{{&p, random_tensor({5}, rng)}};
    sgd_step<double>(params, g, opt);
    CHECK(p.value == before);
  }
}
