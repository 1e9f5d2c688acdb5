// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"

#include "danas/audiofeat/mfcc.hpp"
#include "danas/common/error.hpp"
#include "danas/dataspace/align.hpp"
#include "danas/dataspace/checks.hpp"
#include "danas/dataspace/configs.hpp"
#include "danas/dataspace/gamma.hpp"

using namespace danas;
using namespace danas::data;

namespace {

// Rows of the MFCC parameter table, in table order.
const std::vector<DataConfig> kTable = {{400, 100, 40}, {400, 100, 80}, {400, 200, 40}, {400, 200, 80},
                                        {640, 160, 40}, {640, 160, 80}, {640, 320, 40}, {640, 320, 80}};

std::size_t iterate_frames(std::size_t win, std::size_t hop) {
  std::size_t n = 0;
  for (std::size_t s = 0; s + win <= 16000; s += hop) ++n;
  return n;
}

Tensor<double> rand_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (double& v : t.values()) v = d(rng);
  return t;
}

GammaState<double> state_with(std::vector<double> g) {
  std::vector<DataConfig> cfgs(kTable.begin(), kTable.begin() + static_cast<long>(g.size()));
  GammaState<double> s(cfgs);
  for (std::size_t i = 0; i < g.size(); ++i) s.gamma.value[i] = g[i];
  return s;
}

}  // namespace

TEST_CASE("enumerate_configs reproduces the table") {
  std::vector<DataConfig> got = enumerate_configs(table_space());
  CHECK(got == kTable);
  CHECK(got.front() == DataConfig{400, 100, 40});
  CHECK(table_configs() == kTable);

  SpaceDescription product;
  product.windows = {400, 640};
  product.hop_divisors = {4, 2};
  product.mels = {40, 80};
  CHECK(enumerate_configs(product) == kTable);

  SpaceDescription single;
  single.explicit_configs = {{400, 200, 40}};
  CHECK(enumerate_configs(single).size() == 1);

  CHECK_THROWS_AS(enumerate_configs(SpaceDescription{}), ConfigError);

  SpaceDescription odd;
  odd.explicit_configs = {{512, 160, 40}};
  CHECK_THROWS_AS(enumerate_configs(odd), ConfigError);
  odd.allow_override = true;
  CHECK(enumerate_configs(odd).size() == 1);

  SpaceDescription dup;
  dup.explicit_configs = {{400, 200, 40}, {400, 200, 40}};
  CHECK_THROWS_AS(enumerate_configs(dup), ConfigError);

  CHECK_THROWS_AS(validate_config({400, 500, 40}, true), ConfigError);
  CHECK_THROWS_AS(validate_config({0, 100, 40}, true), ConfigError);
}

TEST_CASE("gamma_weights examples") {
  auto uniform = gamma_weights(state_with(std::vector<double>(8, 0.0)));
  for (double w : uniform) CHECK(w == doctest::Approx(0.125).epsilon(1e-15));

  auto w = gamma_weights(state_with({std::log(4.0), 0.0, 0.0}));
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(w[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));

  std::vector<double> g{0.3, -1.2, 2.0, 0.0};
  std::vector<double> shifted = g;
  for (double& v : shifted) v += 5.0;
  auto a = softmax_weights(g), b = softmax_weights(shifted);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);
}

TEST_CASE("simplex and shift properties over random draws") {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> d(-50.0, 50.0), shift(-20.0, 20.0);
  std::uniform_int_distribution<int> len(2, 8);
  int failures = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    std::vector<double> g(static_cast<std::size_t>(len(rng)));
    for (double& v : g) v = d(rng);
    const double c = shift(rng);
    std::vector<double> gs = g;
    for (double& v : gs) v += c;
    GammaState<double> s1 = state_with(g), s2 = state_with(gs);
    auto w1 = gamma_weights(s1), w2 = gamma_weights(s2);
    double total = 0.0;
    for (std::size_t i = 0; i < w1.size(); ++i) {
      if (w1[i] < 0.0 || std::abs(w1[i] - w2[i]) > 1e-9) ++failures;
      total += w1[i];
    }
    if (std::abs(total - 1.0) > 1e-6) ++failures;
    if (select_index(s1) != select_index(s2)) ++failures;
    if (early_stop_check(s1) != early_stop_check(s2)) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("early stop rule boundaries") {
  CHECK(double_rule(std::vector<double>{0.5, 0.25, 0.25}));
  CHECK_FALSE(double_rule(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}));
  CHECK_FALSE(double_rule(std::vector<double>{0.45, 0.30, 0.25}));
  CHECK(double_rule(std::vector<double>{0.25, 0.5, 0.25}));
  CHECK_FALSE(early_stop_check(state_with({0, 0, 0})));
  CHECK(early_stop_check(state_with({std::log(4.0), 0, 0})));
  CHECK_THROWS_AS(double_rule(std::vector<double>{1.0}), ContractViolation);

  // Raw mode compares gamma itself: (1, 0.5, 0) passes raw, fails on weights.
  GammaState<double> s = state_with({1.0, 0.5, 0.0});
  CHECK(early_stop_check(s, EarlyStopMode::kRawGamma));
  CHECK_FALSE(early_stop_check(s, EarlyStopMode::kWeights));
}

TEST_CASE("select_config takes the argmax with lowest-index ties") {
  CHECK(select_index(state_with({0, 1, 0, 0})) == 1);
  CHECK(select_config(state_with({0, 1, 0, 0})) == kTable[1]);
  CHECK(select_index(state_with({0, 0, 2, 0, 0, 2, 0, 0})) == 2);
  CHECK(select_index(state_with(std::vector<double>(8, 0.0))) == 0);
}

TEST_CASE("freeze is permanent and history stays constant") {
  GammaState<double> s = state_with({0.0, 0.0, 0.0});
  s.snapshot(1);
  s.gamma.value[0] = 1.0;
  s.freeze(2);
  s.snapshot(2);
  s.freeze(5);
  CHECK(s.frozen_epoch == 2);
  s.snapshot(3);
  s.snapshot(4);
  CHECK(s.history[2].weights == s.history[1].weights);
  CHECK(s.history[3].gamma == s.history[1].gamma);
  s.note_gradient();
  CHECK(s.post_freeze_gradient_evaluations == 1);
}

TEST_CASE("gamma csv round-trips") {
  GammaState<float> s({kTable[2], kTable[4], kTable[6]});
  s.gamma.value[0] = 0.123456789f;
  s.gamma.value[2] = -3.5e-7f;
  s.snapshot(1);
  s.gamma.value[1] = 2.0f;
  s.snapshot(2);
  std::vector<GammaRow> rows = gamma_rows(s.configs, s.history);
  CHECK(rows.size() == 6);
  const std::string text = format_gamma_csv(rows);
  CHECK(text.rfind("epoch,config_index,window,hop,mels,gamma,weight\n", 0) == 0);
  CHECK(parse_gamma_csv(text) == rows);
  auto path = std::filesystem::temp_directory_path() / "danas_gamma.csv";
  write_gamma_csv(path, rows);
  CHECK(read_gamma_csv(path) == rows);
  CHECK(parse_gamma_csv(format_gamma_csv({})).empty());
  CHECK_THROWS_AS(parse_gamma_csv("epoch,bad\n"), FormatError);
}

TEST_CASE("alignment targets for the table space") {
  std::size_t max_f = 0, max_c = 0, min_f = SIZE_MAX, min_c = SIZE_MAX;
  for (const DataConfig& c : kTable) {
    const std::size_t f = iterate_frames(c.window, c.hop);
    CHECK(analytic_shape(c) == FeatureShape{f, std::size_t(c.mels)});
    max_f = std::max(max_f, f);
    min_f = std::min(min_f, f);
    max_c = std::max<std::size_t>(max_c, c.mels);
    min_c = std::min<std::size_t>(min_c, c.mels);
  }
  auto zp = make_plan<double>(kTable, AlignStrategy::kZeroPad, nullptr);
  CHECK(zp.target == FeatureShape{max_f, max_c});
  CHECK(zp.target == FeatureShape{157, 80});
  diff::ParameterStore<double> store;
  auto pp = make_plan<double>(kTable, AlignStrategy::kPreProcess, &store);
  CHECK(pp.target == FeatureShape{min_f, min_c});
  CHECK(pp.target == FeatureShape{49, 40});
  CHECK(pp.reducer_weights[6] == nullptr);
  CHECK(store.parameters().size() == 7);
  for (const ReducerSpec& r : pp.reducers) {
    CHECK(diff::conv_out_extent(r.in.frames, r.kernel_h, r.stride_h, 0, 1) == 49);
    CHECK(diff::conv_out_extent(r.in.coefficients, r.kernel_w, r.stride_w, 0, 1) == 40);
  }
}

TEST_CASE("zero_pad readback is bit-exact") {
  audio::Waveform w;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  w.samples.resize(16000);
  for (double& s : w.samples) s = d(rng);
  std::vector<audio::FeatureMap> maps;
  for (const DataConfig& c : kTable) maps.push_back(audio::mfcc(w, c));
  auto plan = make_plan<double>(kTable, AlignStrategy::kZeroPad, nullptr);
  auto out = align_maps(maps, plan);
  REQUIRE(out.size() == 8);
  for (std::size_t d = 0; d < 8; ++d) {
    CHECK(out[d].shape() == Shape{1, 1, 157, 80});
    const auto& m = maps[d];
    bool exact = true;
    for (std::size_t f = 0; f < 157; ++f)
      for (std::size_t k = 0; k < 80; ++k) {
        const double v = out[d][f * 80 + k];
        if (f < m.frames && k < m.coefficients) {
          exact &= v == m.at(f, k);
        } else {
          exact &= v == 0.0;
        }
      }
    CHECK(exact);
  }
}

TEST_CASE("single-config space aligns to itself") {
  std::mt19937_64 rng(1);
  std::vector<DataConfig> one{{400, 200, 40}};
  Tensor<double> x = rand_tensor({3, 1, 79, 40}, rng);
  for (AlignStrategy s : {AlignStrategy::kZeroPad, AlignStrategy::kPreProcess}) {
    diff::ParameterStore<double> store;
    auto plan = make_plan<double>(one, s, &store);
    CHECK(store.parameters().empty());
    diff::Tape<double> t;
    std::vector<Tensor<double>> in{x};
    auto out = align<double>(t, in, plan, true);
    CHECK(out[0].value() == x);
  }
}

TEST_CASE("pre_process reducer matches a naive strided sum") {
  std::mt19937_64 rng(2);
  std::vector<DataConfig> cfgs{{400, 200, 40}, {640, 160, 40}, {400, 100, 80}, {640, 320, 40}};
  diff::ParameterStore<double> store;
  auto plan = make_plan<double>(cfgs, AlignStrategy::kPreProcess, &store);
  for (diff::Parameter<double>* p : store.parameters()) p->value = rand_tensor(p->value.shape(), rng);
  std::vector<Tensor<double>> in;
  for (const FeatureShape& s : plan.shapes) in.push_back(rand_tensor({2, 1, s.frames, s.coefficients}, rng));
  diff::Tape<double> t;
  auto out = align<double>(t, in, plan, false);
  for (std::size_t d = 0; d < cfgs.size(); ++d) {
    const ReducerSpec& r = plan.reducers[d];
    CHECK(out[d].shape() == Shape{2, 1, 49, 40});
    if (r.identity()) {
      CHECK(out[d].value() == in[d]);
      continue;
    }
    const Tensor<double>& k = plan.reducer_weights[d]->value;
    double worst = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t oy = 0; oy < 49; ++oy)
        for (std::size_t ox = 0; ox < 40; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < r.kernel_h; ++ky)
            for (int kx = 0; kx < r.kernel_w; ++kx) {
              const std::size_t iy = oy * r.stride_h + ky, ix = ox * r.stride_w + kx;
              acc += in[d][(n * r.in.frames + iy) * r.in.coefficients + ix] * k[ky * r.kernel_w + kx];
            }
          worst = std::max(worst, std::abs(acc - out[d].value()[(n * 49 + oy) * 40 + ox]));
        }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("box-initialised reducers preserve a constant map") {
  diff::ParameterStore<double> store;
  std::vector<DataConfig> cfgs{{400, 100, 80}, {640, 320, 40}};
  auto plan = make_plan<double>(cfgs, AlignStrategy::kPreProcess, &store);
  std::vector<Tensor<double>> in{Tensor<double>(Shape{1, 1, 157, 80}, 2.5), Tensor<double>(Shape{1, 1, 49, 40}, 2.5)};
  diff::Tape<double> t;
  auto out = align<double>(t, in, plan, false);
  for (double v : out[0].value().values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("align rejects inconsistent shapes") {
  auto plan = make_plan<double>(kTable, AlignStrategy::kZeroPad, nullptr);
  std::vector<Tensor<double>> in;
  for (const FeatureShape& s : plan.shapes) in.emplace_back(Shape{1, 1, s.frames, s.coefficients}, 0.0);
  in[3] = Tensor<double>(Shape{1, 1, 80, 80}, 0.0);
  diff::Tape<double> t;
  CHECK_THROWS_AS(align<double>(t, in, plan, false), ContractViolation);
  in.pop_back();
  CHECK_THROWS_AS(align<double>(t, in, plan, false), ContractViolation);
}

TEST_CASE("mix_inputs") {
  std::mt19937_64 rng(6);
  diff::Tape<double> t;
  std::vector<diff::Var<double>> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(t.constant(rand_tensor({2, 1, 4, 3}, rng)));

  SUBCASE("one-hot picks one input exactly") {
    for (std::size_t d = 0; d < 3; ++d) {
      Tensor<double> oh(Shape{3}, 0.0);
      oh[d] = 1.0;
      const Tensor<double> mixed = mix_inputs<double>(xs, t.constant(oh)).value();
      CHECK(mixed == xs[d].value());
    }
  }
  SUBCASE("identical inputs") {
    std::vector<diff::Var<double>> same(3, xs[0]);
    auto m = mix_inputs<double>(same, t.constant(Tensor<double>(Shape{3}, std::vector<double>{0.2, 0.3, 0.5})));
    for (std::size_t i = 0; i < m.value().size(); ++i) CHECK(m.value()[i] == doctest::Approx(xs[0].value()[i]));
  }
  SUBCASE("linear in the weights") {
    Tensor<double> w1(Shape{3}, std::vector<double>{0.7, 0.2, 0.1}), w2(Shape{3}, std::vector<double>{0.1, 0.1, 0.8});
    Tensor<double> avg(Shape{3});
    for (std::size_t i = 0; i < 3; ++i) avg[i] = 0.5 * (w1[i] + w2[i]);
    auto a = mix_inputs<double>(xs, t.constant(w1)).value();
    auto b = mix_inputs<double>(xs, t.constant(w2)).value();
    auto c = mix_inputs<double>(xs, t.constant(avg)).value();
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(c[i] - 0.5 * (a[i] + b[i])) <= 1e-6);
  }
  SUBCASE("shape mismatch") {
    xs.push_back(t.constant(Tensor<double>(Shape{2, 1, 4, 4}, 0.0)));
    CHECK_THROWS_AS(mix_inputs<double>(xs, t.constant(Tensor<double>(Shape{4}, 0.25))), ContractViolation);
  }
}

TEST_CASE("gamma mixing gradients match finite differences") {
  auto cases = mixing_checks();
  auto summary = diff::run_checks(cases, 10, 99, 1e-4);
  for (const auto& o : summary.outcomes) {
    INFO(o.name << " " << o.max_error);
    CHECK(o.passed);
  }
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("zero_pad") == AlignStrategy::kZeroPad);
  CHECK(to_string(parse_strategy("pre_process")) == "pre_process");
  CHECK_THROWS_AS(parse_strategy("crop"), ConfigError);
}
