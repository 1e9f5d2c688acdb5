// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/diffcore/gradcheck.hpp"

#include <algorithm>
#include <deque>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>

#include "danas/common/rng.hpp"
#include "danas/diffcore/ops.hpp"
#include "danas/diffcore/parameters.hpp"

namespace danas::diff {

double finite_diff_check(const GraphBuilder& build, Parameter<double>& param, double epsilon,
                         std::string_view sign_fault) {
  require(epsilon >= 1e-7 && epsilon <= 1e-3, "finite_diff_check: epsilon outside [1e-7, 1e-3]");
  Tensor<double> analytic;
  {
    Tape<double> tape;
    if (!sign_fault.empty()) {
      tape.inject_sign_fault(std::string(sign_fault));
    }
    Var<double> loss = build(tape);
    if (!std::isfinite(loss.value().item())) {
      return std::numeric_limits<double>::infinity();
    }
    Gradients<double> grads = tape.backward(loss);
    auto it = grads.find(&param);
    require(it != grads.end(), "finite_diff_check: parameter '" + param.name + "' is not a differentiable leaf");
    analytic = it->second;
  }
  auto evaluate = [&]() {
    Tape<double> tape;
    return build(tape).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double original = param.value[i];
    // Divide by the step that is actually representable, not the nominal 2 * epsilon.
    const double hi = original + epsilon;
    const double lo = original - epsilon;
    param.value[i] = hi;
    const double up = evaluate();
    param.value[i] = lo;
    const double down = evaluate();
    param.value[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      return std::numeric_limits<double>::infinity();
    }
    const double central = (up - down) / (hi - lo);
    const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

double check_parameters(const GraphBuilder& build, std::span<Parameter<double>* const> params,
                        const CheckOptions& options) {
  double worst = 0.0;
  for (Parameter<double>* p : params) {
    worst = std::max(worst, finite_diff_check(build, *p, options.epsilon, options.sign_fault));
  }
  return worst;
}

bool GradcheckSummary::passed() const {
  return !outcomes.empty() && std::all_of(outcomes.begin(), outcomes.end(), [](const CheckOutcome& o) {
    return o.passed;
  });
}

GradcheckSummary run_checks(std::span<const CheckCase> cases, std::size_t instances, std::uint64_t seed,
                            double tolerance, const CheckOptions& options) {
  GradcheckSummary summary;
  summary.tolerance = tolerance;
  for (const CheckCase& c : cases) {
    CheckOutcome outcome;
    outcome.name = c.name;
    for (std::size_t k = 0; k < instances; ++k) {
      const double err = c.run(splitmix64(seed + 0x1000 * k) ^ std::hash<std::string>{}(c.name), options);
      outcome.max_error = std::isnan(err) ? std::numeric_limits<double>::infinity()
                                          : std::max(outcome.max_error, err);
      ++outcome.instances;
    }
    outcome.passed = outcome.max_error < tolerance;
    summary.outcomes.push_back(outcome);
  }
  return summary;
}

namespace {

using P = Parameter<double>;
using V = Var<double>;
using Tn = Tensor<double>;

Tn uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tn t(std::move(shape));
  for (double& v : t.values()) {
    v = dist(rng);
  }
  return t;
}

// Values bounded away from zero so the rectifier kink is never crossed.
Tn away_from_zero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tn t(std::move(shape));
  for (double& v : t.values()) {
    v = sign(rng) ? mag(rng) : -mag(rng);
  }
  return t;
}

// Distinct values at spacing 0.01, so pooling windows have no near-ties.
Tn distinct(Shape shape, Rng& rng) {
  Tn t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = 0.01 * (static_cast<double>(order[i]) - static_cast<double>(t.size()) / 2.0);
  }
  return t;
}

// Projects a tensor onto a fixed random direction so the scalar loss exercises
// every output element with a distinct weight.
class Projector {
 public:
  explicit Projector(std::uint64_t seed) : seed_(seed) {}
  V operator()(V out) {
    if (!direction_ || direction_->shape() != out.shape()) {
      Rng rng(seed_);
      direction_ = uniform(out.shape(), rng);
    }
    return sum(mul(out, out.tape()->constant(*direction_)));
  }

 private:
  std::uint64_t seed_;
  std::optional<Tn> direction_;
};

// Parameters owned by one check instance.
struct Instance {
  std::deque<P> params;
  P* add(const char* name, Tn value) {
    params.push_back(P{name, std::move(value)});
    return &params.back();
  }
  std::vector<P*> all() {
    std::vector<P*> out;
    for (P& p : params) {
      out.push_back(&p);
    }
    return out;
  }
};

template <typename Build>
double run_instance(Instance& inst, Rng& rng, Build build, const CheckOptions& opt) {
  auto project = std::make_shared<Projector>(rng());
  GraphBuilder builder = [&inst, project, build](Tape<double>& t) { return (*project)(build(t, inst)); };
  std::vector<P*> ps = inst.all();
  return check_parameters(builder, ps, opt);
}

CheckCase make_case(std::string name, std::function<double(Rng&, const CheckOptions&)> body) {
  return CheckCase{std::move(name), [body](std::uint64_t seed, const CheckOptions& opt) {
                     Rng rng(seed);
                     return body(rng, opt);
                   }};
}

V bind(Tape<double>& t, P& p) { return t.parameter(p, true); }

}  // namespace

std::vector<CheckCase> primitive_checks() {
  std::vector<CheckCase> cases;

  cases.push_back(make_case("conv2d", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 3, 6, 5}, rng));
    inst.add("w", uniform({4, 3, 3, 3}, rng));
    inst.add("b", uniform({4}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      Conv2dSpec spec{{2, 2}, {1, 1}, 1, 1};
      return conv2d(bind(t, in.params[0]), bind(t, in.params[1]), spec, bind(t, in.params[2]));
    }, opt);
  }));

  cases.push_back(make_case("depthwise_conv2d", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 4, 6, 6}, rng));
    inst.add("w", uniform({4, 1, 3, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      Conv2dSpec spec{{1, 1}, {1, 1}, 1, 4};
      return conv2d(bind(t, in.params[0]), bind(t, in.params[1]), spec);
    }, opt);
  }));

  cases.push_back(make_case("dilated_conv2d", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 2, 7, 6}, rng));
    inst.add("w", uniform({2, 1, 3, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      Conv2dSpec spec{{2, 2}, {2, 2}, 2, 2};
      return conv2d(bind(t, in.params[0]), bind(t, in.params[1]), spec);
    }, opt);
  }));

  cases.push_back(make_case("max_pool2d", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", distinct({2, 2, 5, 6}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return max_pool2d(bind(t, in.params[0]), Pool2dSpec{3, 2, 1});
    }, opt);
  }));

  cases.push_back(make_case("avg_pool2d", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 2, 5, 4}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return avg_pool2d(bind(t, in.params[0]), Pool2dSpec{3, 1, 1});
    }, opt);
  }));

  cases.push_back(make_case("global_avg_pool", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 3, 4, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return global_avg_pool(bind(t, in.params[0]));
    }, opt);
  }));

  cases.push_back(make_case("batch_norm", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({3, 2, 3, 3}, rng));
    inst.add("gamma", uniform({2}, rng, 0.5, 1.5));
    inst.add("beta", uniform({2}, rng));
    auto stats = std::make_shared<NormStats<double>>(NormStats<double>{uniform({2}, rng), uniform({2}, rng, 0.5, 2.0)});
    const double batch = run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return batch_norm(bind(t, in.params[0]), bind(t, in.params[1]), bind(t, in.params[2]),
                        static_cast<NormStats<double>*>(nullptr), NormMode::kTrainFrozen);
    }, opt);
    const double running = run_instance(inst, rng, [stats](Tape<double>& t, Instance& in) {
      return batch_norm(bind(t, in.params[0]), bind(t, in.params[1]), bind(t, in.params[2]), stats.get(),
                        NormMode::kEval);
    }, opt);
    return std::max(batch, running);
  }));

  cases.push_back(make_case("relu", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", away_from_zero({2, 3, 4, 4}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) { return relu(bind(t, in.params[0])); }, opt);
  }));

  cases.push_back(make_case("linear", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({3, 5}, rng));
    inst.add("w", uniform({4, 5}, rng));
    inst.add("b", uniform({4}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return linear(bind(t, in.params[0]), bind(t, in.params[1]), bind(t, in.params[2]));
    }, opt);
  }));

  cases.push_back(make_case("softmax", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({3, 5}, rng, -3.0, 3.0));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) { return softmax(bind(t, in.params[0])); }, opt);
  }));

  cases.push_back(make_case("cross_entropy", [](Rng& rng, const CheckOptions& opt) {
    P logits{"logits", uniform({4, 5}, rng, -2.0, 2.0)};
    std::uniform_int_distribution<int> label(0, 4);
    std::vector<int> labels(4);
    for (int& y : labels) {
      y = label(rng);
    }
    GraphBuilder build = [&](Tape<double>& t) { return cross_entropy(t.parameter(logits, true), labels); };
    return finite_diff_check(build, logits, opt.epsilon, opt.sign_fault);
  }));

  cases.push_back(make_case("add", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("a", uniform({2, 3}, rng));
    inst.add("b", uniform({2, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return add(bind(t, in.params[0]), bind(t, in.params[1]));
    }, opt);
  }));

  cases.push_back(make_case("mul", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("a", uniform({2, 3}, rng));
    inst.add("b", uniform({2, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return mul(bind(t, in.params[0]), bind(t, in.params[1]));
    }, opt);
  }));

  cases.push_back(make_case("scale", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 3}, rng));
    const double factor = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    return run_instance(inst, rng, [factor](Tape<double>& t, Instance& in) {
      return scale(bind(t, in.params[0]), factor);
    }, opt);
  }));

  cases.push_back(make_case("sum", [](Rng& rng, const CheckOptions& opt) {
    P x{"x", uniform({3, 4}, rng)};
    GraphBuilder build = [&](Tape<double>& t) { return scale(sum(t.parameter(x, true)), 0.7); };
    return finite_diff_check(build, x, opt.epsilon, opt.sign_fault);
  }));

  cases.push_back(make_case("weighted_sum", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x0", uniform({2, 2, 3, 3}, rng));
    inst.add("x1", uniform({2, 2, 3, 3}, rng));
    inst.add("x2", uniform({2, 2, 3, 3}, rng));
    inst.add("w", uniform({3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      std::vector<V> xs{bind(t, in.params[0]), bind(t, in.params[1]), bind(t, in.params[2])};
      return weighted_sum<double>(xs, bind(t, in.params[3]));
    }, opt);
  }));

  cases.push_back(make_case("select_row", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({3, 4}, rng));
    const std::size_t row = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
    return run_instance(inst, rng, [row](Tape<double>& t, Instance& in) {
      return select_row(bind(t, in.params[0]), row);
    }, opt);
  }));

  cases.push_back(make_case("slice", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({7}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) { return slice(bind(t, in.params[0]), 2, 4); },
                        opt);
  }));

  cases.push_back(make_case("concat", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("a", uniform({2, 2, 3, 3}, rng));
    inst.add("b", uniform({2, 3, 3, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      std::vector<V> xs{bind(t, in.params[0]), bind(t, in.params[1])};
      return concat_channels<double>(xs);
    }, opt);
  }));

  cases.push_back(make_case("slice_channels", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 4, 3, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return slice_channels(bind(t, in.params[0]), 1, 3);
    }, opt);
  }));

  cases.push_back(make_case("channel_shuffle", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 6, 2, 3}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      return channel_shuffle(bind(t, in.params[0]), 2);
    }, opt);
  }));

  cases.push_back(make_case("shift2d", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 2, 4, 5}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) { return shift2d(bind(t, in.params[0]), 1, 1); },
                        opt);
  }));

  cases.push_back(make_case("zero", [](Rng& rng, const CheckOptions& opt) {
    Instance inst;
    inst.add("x", uniform({2, 2, 5, 4}, rng));
    return run_instance(inst, rng, [](Tape<double>& t, Instance& in) {
      V x = bind(t, in.params[0]);
      return add(zero_op(x, 1), scale(x, 0.5));
    }, opt);
  }));

  return cases;
}

}  // namespace danas::diff
