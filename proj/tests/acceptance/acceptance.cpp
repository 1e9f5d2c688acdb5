// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. With no arguments every criterion runs; --criterion N runs
// one. Prints one PASS/FAIL line per criterion and exits 1 if any failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"

#include "danas/archspace/checks.hpp"
#include "danas/archspace/genotype.hpp"
#include "danas/archspace/network.hpp"
#include "danas/audiofeat/mfcc.hpp"
#include "danas/cli/commands.hpp"
#include "danas/common/rng.hpp"
#include "danas/dataspace/align.hpp"
#include "danas/dataspace/checks.hpp"
#include "danas/dataspace/configs.hpp"
#include "danas/dataspace/gamma.hpp"
#include "danas/diffcore/gradcheck.hpp"
#include "danas/engine/config.hpp"
#include "danas/engine/dataset.hpp"
#include "danas/engine/features.hpp"
#include "danas/engine/rundir.hpp"
#include "danas/engine/search.hpp"
#include "danas/engine/training.hpp"

namespace fs = std::filesystem;
using namespace danas;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const fs::path& scratch() {
  struct Dir {
    fs::path path;
    Dir() {
      path = fs::temp_directory_path() / ("danas_acceptance_" + std::to_string(::getpid()));
      fs::remove_all(path);
      fs::create_directories(path);
    }
    ~Dir() {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  };
  static Dir dir;
  return dir.path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<DataConfig> kSynthConfigs = {{400, 200, 40}, {640, 160, 40}, {640, 320, 40}};

fs::path synth(const std::string& name, int per_class, std::uint64_t seed) {
  const fs::path root = scratch() / name;
  if (!fs::exists(root / "manifest.csv")) {
    cli::SynthSpec spec;
    spec.out = root;
    spec.per_class = per_class;
    spec.seed = seed;
    cli::synth_data(spec);
  }
  return root;
}

engine::SearchRunConfig small_config(const fs::path& root) {
  engine::SearchRunConfig cfg;
  cfg.seed = 7;
  cfg.warmup_epochs = 1;
  cfg.search_epochs = 2;
  cfg.eval_epochs = 2;
  cfg.batch_size = 14;
  cfg.lr_weights = 0.05;
  cfg.lr_arch = 0.5;
  cfg.data_space.explicit_configs = kSynthConfigs;
  cfg.topology.cells = 3;
  cfg.topology.channels = 2;
  cfg.topology.nodes = 1;
  cfg.topology.ops = arch::reduced_ops();
  cfg.dataset.root = root;
  return cfg;
}

std::vector<double> softmax(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  std::vector<double> o;
  for (double x : v) o.push_back(std::exp(x - m) / s);
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  std::vector<diff::CheckCase> cases = diff::primitive_checks();
  for (auto& c : data::mixing_checks()) cases.push_back(std::move(c));
  for (auto& c : arch::mixed_op_checks()) cases.push_back(std::move(c));
  const diff::GradcheckSummary s = diff::run_checks(cases, 10, 1, 1e-4);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::size_t failed = 0;
  std::string names;
  for (const auto& o : s.outcomes) {
    worst = std::max(worst, o.max_error);
    if (!o.passed || o.instances < 10) {
      ++failed;
      names += " " + o.name;
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu checks x 10 instances, worst rel. error %.2e, %zu failed, %.1fs", cases.size(),
                worst, failed, secs);
  return {s.passed() && failed == 0 && secs < 120.0, buf + names};
}

Outcome simplex_invariance() {
  Rng rng(20260);
  std::uniform_real_distribution<double> val(-20.0, 20.0), shift(-30.0, 30.0);
  std::uniform_int_distribution<std::size_t> len(2, 8);
  const auto& table = data::table_configs();
  std::size_t fails = 0;
  double worst_sum = 0, worst_shift = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t n = len(rng);
    data::GammaState<double> g(std::vector<DataConfig>(table.begin(), table.begin() + static_cast<long>(n)));
    for (double& v : g.gamma.value.values()) v = val(rng);
    const auto w = data::gamma_weights(g);
    double sum = 0;
    for (double x : w) sum += x;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const DataConfig picked = data::select_config(g);

    const double c = shift(rng);
    for (double& v : g.gamma.value.values()) v += c;
    const auto ws = data::gamma_weights(g);
    for (std::size_t i = 0; i < n; ++i) worst_shift = std::max(worst_shift, std::abs(ws[i] - w[i]));
    if (data::select_config(g) != picked) ++fails;

    // discretize under a constant shift of every alpha row and every node's betas.
    arch::CellTopology topo;
    topo.intermediate_nodes = 1 + draw % 4;
    topo.ops = draw % 2 ? arch::reduced_ops() : arch::darts_ops();
    std::vector<double> alpha(topo.edge_count() * topo.ops.size()), beta(topo.edge_count());
    for (double& v : alpha) v = val(rng) / 4;
    for (double& v : beta) v = val(rng) / 4;
    const auto before = arch::discretize_cell(alpha, beta, topo);
    for (double& v : alpha) v += c;
    for (double& v : beta) v -= c;
    if (arch::discretize_cell(alpha, beta, topo) != before) ++fails;
  }
  if (worst_sum > 1e-6 || worst_shift > 1e-9) ++fails;
  char buf[200];
  std::snprintf(buf, sizeof buf, "1000 draws, max |sum-1| %.1e, max shift drift %.1e, %zu failures", worst_sum,
                worst_shift, fails);
  return {fails == 0, buf};
}

Outcome early_stop_boundary() {
  auto check_at = [](std::vector<double> w) {
    data::GammaState<double> g(kSynthConfigs);
    for (std::size_t i = 0; i < w.size(); ++i) g.gamma.value[i] = std::log(w[i]);
    return data::early_stop_check(g);
  };
  const bool at_boundary = check_at({0.5, 0.25, 0.25});
  const bool uniform = check_at({1.0 / 3, 1.0 / 3, 1.0 / 3});
  const bool close = check_at({0.45, 0.30, 0.25});

  // Freeze permanence inside a real search session.
  engine::SearchRunConfig cfg = small_config(synth("c3", 20, 3));
  cfg.warmup_epochs = 0;
  cfg.search_epochs = 4;
  const engine::Dataset ds = engine::load_dataset(cfg.dataset);
  engine::SearchSession s(cfg, engine::prepare_search_data(cfg, ds));
  auto& gv = s.gamma().gamma.value;
  gv[0] = std::log(0.6f);
  gv[1] = std::log(0.2f);
  gv[2] = std::log(0.2f);
  for (int e = 0; e < cfg.search_epochs; ++e) s.search_epoch();
  const auto& h = s.gamma().history;
  bool identical = s.gamma().frozen && h.size() == 4;
  const std::size_t first = s.gamma().frozen_epoch.value_or(1) - 1;
  for (std::size_t i = first + 1; identical && i < h.size(); ++i) {
    identical = h[i].gamma == h[first].gamma && h[i].weights == h[first].weights;
  }
  const bool quiet = s.gamma().post_freeze_gradient_evaluations == 0;

  char buf[240];
  std::snprintf(buf, sizeof buf,
                "(0.5,0.25,0.25)->%d uniform->%d (0.45,0.30,0.25)->%d; frozen at epoch %d, post-freeze rows "
                "identical %d, post-freeze gamma gradients %llu",
                at_boundary, uniform, close, s.gamma().frozen_epoch.value_or(-1), identical,
                static_cast<unsigned long long>(s.gamma().post_freeze_gradient_evaluations));
  return {at_boundary && !uniform && !close && identical && quiet, buf};
}

// Counts windows by sliding one hop at a time.
std::size_t iterative_frames(std::size_t samples, std::size_t window, std::size_t hop) {
  std::size_t n = 0;
  for (std::size_t start = 0; start + window <= samples; start += hop) ++n;
  return n;
}

Outcome frame_shapes() {
  Rng rng(4);
  std::normal_distribution<double> d(0.0, 0.1);
  audio::Waveform w;
  w.samples.resize(16000);
  for (double& x : w.samples) x = d(rng);
  std::string detail;
  bool ok = data::table_configs().size() == 8;
  for (const DataConfig& c : data::table_configs()) {
    const audio::FeatureMap m = audio::mfcc(w, c);
    const std::size_t expect = iterative_frames(16000, c.window, c.hop);
    ok = ok && m.frames == expect && m.coefficients == static_cast<std::size_t>(c.mels) &&
         m.values.size() == expect * m.coefficients;
    detail += c.str();
    detail += "->" + std::to_string(m.frames) + "x" + std::to_string(m.coefficients) + " ";
  }
  ok = ok && iterative_frames(16000, 400, 200) == 79 && iterative_frames(16000, 640, 320) == 49;
  return {ok, detail};
}

// Exhaustive selection: every pair of incoming edges and every non-none op on
// each; maximal summed score, first found wins.
std::vector<arch::GeneEdge> brute_force(const std::vector<double>& alpha, const std::vector<double>& beta,
                                        const arch::CellTopology& topo) {
  const std::size_t ops = topo.ops.size();
  std::vector<arch::GeneEdge> out;
  std::size_t start = 0;
  for (int node = 0; node < topo.intermediate_nodes; ++node) {
    const std::size_t n = static_cast<std::size_t>(node) + 2;
    const auto b = softmax(std::vector<double>(beta.begin() + static_cast<long>(start),
                                               beta.begin() + static_cast<long>(start + n)));
    double best = -1;
    arch::GeneEdge e1, e2;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto ai = softmax(std::vector<double>(alpha.begin() + static_cast<long>((start + i) * ops),
                                                    alpha.begin() + static_cast<long>((start + i + 1) * ops)));
        const auto aj = softmax(std::vector<double>(alpha.begin() + static_cast<long>((start + j) * ops),
                                                    alpha.begin() + static_cast<long>((start + j + 1) * ops)));
        for (std::size_t oi = 0; oi < ops; ++oi) {
          for (std::size_t oj = 0; oj < ops; ++oj) {
            if (topo.ops[oi] == arch::OpKind::kNone || topo.ops[oj] == arch::OpKind::kNone) continue;
            const double s = ai[oi] * b[i] + aj[oj] * b[j];
            if (s > best) {
              best = s;
              e1 = {topo.ops[oi], static_cast<int>(i)};
              e2 = {topo.ops[oj], static_cast<int>(j)};
            }
          }
        }
      }
    }
    out.push_back(e1);
    out.push_back(e2);
    start += n;
  }
  return out;
}

Outcome discretization_oracle() {
  Rng rng(555);
  std::normal_distribution<double> d(0.0, 1.5);
  arch::CellTopology topo;
  topo.intermediate_nodes = 2;
  topo.ops = arch::reduced_ops();
  int mismatches = 0;
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<double> alpha(topo.edge_count() * topo.ops.size()), beta(topo.edge_count());
    for (double& v : alpha) v = d(rng);
    for (double& v : beta) v = d(rng);
    if (arch::discretize_cell(alpha, beta, topo) != brute_force(alpha, beta, topo)) ++mismatches;
  }
  return {mismatches == 0, "100 draws, 2 nodes, 4 ops, " + std::to_string(mismatches) + " mismatches"};
}

engine::SearchRunConfig selection_config(const fs::path& root, std::uint64_t seed) {
  engine::SearchRunConfig cfg;
  cfg.seed = seed;
  cfg.warmup_epochs = 2;
  cfg.search_epochs = 30;
  cfg.batch_size = 35;
  cfg.lr_weights = 0.05;
  cfg.lr_arch = 0.5;
  cfg.alignment = data::AlignStrategy::kPreProcess;
  cfg.data_space.explicit_configs = kSynthConfigs;
  cfg.topology.cells = 3;
  cfg.topology.channels = 4;
  cfg.topology.nodes = 2;
  cfg.topology.ops = arch::reduced_ops();
  cfg.dataset.root = root;
  return cfg;
}

Outcome gamma_selection() {
  int hits = 0;
  double slowest = 0;
  std::string picks;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t0 = Clock::now();
    const engine::SearchRunConfig cfg = selection_config(synth("c6_" + std::to_string(seed), 100, seed), seed);
    const engine::SearchResult r = engine::run_search(cfg, engine::load_dataset(cfg.dataset));
    slowest = std::max(slowest, seconds_since(t0));
    hits += r.selected_config == DataConfig{400, 200, 40};
    picks += " " + r.selected_config.str();
    if (r.early_stop_epoch) picks += "@" + std::to_string(*r.early_stop_epoch);
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "%d/10 seeds picked 400/200/40, slowest seed %.0fs;", hits, slowest);
  return {hits >= 9 && slowest < 600.0, buf + picks};
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  engine::SearchRunConfig cfg = selection_config(synth("c7", 100, 0), 0);
  cfg.warmup_epochs = 0;
  cfg.search_epochs = 5;
  cfg.eval_epochs = 10;
  cfg.topology.cells = 4;
  const engine::Dataset ds = engine::load_dataset(cfg.dataset);
  const engine::SearchResult r = engine::run_search(cfg, ds);
  const engine::FinalRun run = engine::train_final(r.genotype, r.selected_config, cfg, ds);
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "selected %s, test accuracy %.4f (%zu/%zu), %zu parameters, %.0fs",
                r.selected_config.str().c_str(), run.metrics.accuracy, run.metrics.correct, run.metrics.total,
                run.metrics.parameter_count, secs);
  return {run.metrics.accuracy >= 0.90 && secs < 900.0, buf};
}

// Plain search with no data space at all: one feature bank fed straight to the
// supernet, no gamma, no alignment.
struct Reference {
  diff::ParameterStore<float> store;
  std::unique_ptr<arch::Supernet<float>> net;
};

std::unique_ptr<Reference> reference_search(const engine::SearchRunConfig& cfg, const engine::Dataset& ds,
                                            const DataConfig& config) {
  const engine::SearchSplit split = engine::search_split(ds.train, cfg.search_val_fraction, cfg.seed);
  const engine::RawFeatures tr = engine::compute_features(split.train, config, ds);
  const engine::RawFeatures va = engine::compute_features(split.validation, config, ds);
  const engine::Standardiser st = engine::fit_standardiser(tr);
  const engine::FeatureBank train(tr, st), val(va, st);
  const std::vector<int> train_labels = engine::labels_of(split.train);
  const std::vector<int> val_labels = engine::labels_of(split.validation);

  auto ref = std::make_unique<Reference>();
  Rng weight_rng = derive_rng(cfg.seed, "weights");
  Rng arch_rng = derive_rng(cfg.seed, "arch");
  ref->net = std::make_unique<arch::Supernet<float>>(engine::cell_topology(cfg.topology),
                                                     engine::network_shape(cfg.topology, ds.class_names.size()),
                                                     ref->store, weight_rng, arch_rng, cfg.arch_init_sigma);
  diff::OptimizerState<float> wopt, aopt;
  wopt.learning_rate = static_cast<float>(cfg.lr_weights);
  wopt.momentum = static_cast<float>(cfg.momentum);
  wopt.weight_decay = static_cast<float>(cfg.weight_decay);
  aopt.learning_rate = static_cast<float>(cfg.lr_arch);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  engine::BatchCycle val_cycle(val_labels.size(), bs, cfg.seed, "validation");

  auto labels = [](const std::vector<int>& all, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    for (std::size_t i : idx) out.push_back(all[i]);
    return out;
  };
  auto weight_step = [&](const std::vector<std::size_t>& idx) {
    diff::Tape<float> tape;
    arch::Ctx<float> ctx{tape, diff::NormMode::kTrain, true, false};
    const auto y = labels(train_labels, idx);
    auto loss = diff::cross_entropy(ref->net->forward(ctx, tape.constant(train.batch(idx))), std::span<const int>(y));
    const auto grads = tape.backward(loss);
    const auto params = ref->store.parameters();
    diff::sgd_step<float>(params, grads, wopt);
  };
  auto arch_step = [&](const std::vector<std::size_t>& idx) {
    diff::Tape<float> tape;
    arch::Ctx<float> ctx{tape, diff::NormMode::kTrainFrozen, false, true};
    const auto y = labels(val_labels, idx);
    auto loss = diff::cross_entropy(ref->net->forward(ctx, tape.constant(val.batch(idx))), std::span<const int>(y));
    const auto grads = tape.backward(loss);
    const auto params = ref->net->arch().all();
    diff::sgd_step<float>(params, grads, aopt);
  };

  std::uint64_t epoch = 0;
  for (int e = 0; e < cfg.warmup_epochs; ++e) {
    for (const auto& b : engine::epoch_batches(train_labels.size(), bs, cfg.seed, "train", epoch++)) weight_step(b);
  }
  for (int e = 0; e < cfg.search_epochs; ++e) {
    for (const auto& b : engine::epoch_batches(train_labels.size(), bs, cfg.seed, "train", epoch++)) {
      weight_step(b);
      arch_step(val_cycle.next());
    }
  }
  return ref;
}

Outcome ablation_equivalence() {
  engine::SearchRunConfig cfg = small_config(synth("c8", 20, 8));
  cfg.search_epochs = 3;
  cfg.data_aware = false;
  cfg.fixed_config = DataConfig{640, 160, 40};
  const engine::Dataset ds = engine::load_dataset(cfg.dataset);

  engine::SearchSession s(cfg, engine::prepare_search_data(cfg, ds));
  s.warmup();
  for (int e = 0; e < cfg.search_epochs; ++e) s.search_epoch();
  const engine::SearchResult r = s.result();
  const auto ref = reference_search(cfg, ds, *cfg.fixed_config);

  bool same = arch::genotype_to_json(r.genotype) == arch::genotype_to_json(ref->net->genotype());
  const auto a = s.supernet().arch().all();
  const auto b = ref->net->arch().all();
  same = same && a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i]->value == b[i]->value;
  const auto wa = s.weights().parameters();
  const auto wb = ref->store.parameters();
  same = same && wa.size() == wb.size();
  for (std::size_t i = 0; same && i < wa.size(); ++i) same = wa[i]->name == wb[i]->name && wa[i]->value == wb[i]->value;
  const auto& na = s.weights().norm_stats();
  const auto& nb = ref->store.norm_stats();
  same = same && na.size() == nb.size();
  for (std::size_t i = 0; same && i < na.size(); ++i) {
    same = na[i].running_mean == nb[i].running_mean && na[i].running_var == nb[i].running_var;
  }
  const bool untouched = r.gamma_gradient_evaluations == 0 && r.gamma_history.empty();
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu weight tensors, %zu arch tensors bit-identical %d; gamma gradient evaluations %llu",
                wa.size(), a.size(), same, static_cast<unsigned long long>(r.gamma_gradient_evaluations));
  return {same && untouched, buf};
}

Outcome determinism() {
  const fs::path cfg_path = scratch() / "c9_config.json";
  engine::write_file(cfg_path, engine::dump_config(small_config(synth("c9", 20, 9))));
  std::vector<fs::path> runs;
  for (int i = 0; i < 2; ++i) {
    runs.push_back(scratch() / ("c9_run" + std::to_string(i)));
    std::string args[] = {"danas", "search", "--config", cfg_path.string(), "--out", runs.back().string()};
    std::vector<char*> argv;
    for (auto& x : args) argv.push_back(x.data());
    if (cli::run(static_cast<int>(argv.size()), argv.data()) != cli::kExitOk) return {false, "search run failed"};
  }
  const std::string g0 = slurp(runs[0] / engine::kGenotypeFile);
  const std::string h0 = slurp(runs[0] / engine::kGammaFile);
  const bool genotype = !g0.empty() && g0 == slurp(runs[1] / engine::kGenotypeFile);
  const bool gamma = !h0.empty() && h0 == slurp(runs[1] / engine::kGammaFile);
  return {genotype && gamma, "genotype.json identical " + std::to_string(genotype) + ", gamma_history.csv identical " +
                                 std::to_string(gamma) + " (" + std::to_string(h0.size()) + " bytes)"};
}

Outcome alignment() {
  const auto& table = data::table_configs();
  const auto pad = data::make_plan<double>(table, data::AlignStrategy::kZeroPad, nullptr);
  diff::ParameterStore<double> store;
  const auto pre = data::make_plan<double>(table, data::AlignStrategy::kPreProcess, &store);
  const bool pad_target = pad.target == data::FeatureShape{157, 80};
  const bool pre_target = pre.target == data::FeatureShape{49, 40};

  Rng rng(10);
  std::normal_distribution<double> d(0.0, 0.1);
  audio::Waveform w;
  w.samples.resize(16000);
  for (double& x : w.samples) x = d(rng);
  std::vector<audio::FeatureMap> maps;
  for (const DataConfig& c : table) maps.push_back(audio::mfcc(w, c));
  const auto aligned = data::align_maps(maps, pad);
  std::size_t bad = 0;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto& t = aligned[k];
    for (std::size_t f = 0; f < 157; ++f) {
      for (std::size_t c = 0; c < 80; ++c) {
        const double got = t[f * 80 + c];
        const bool inside = f < maps[k].frames && c < maps[k].coefficients;
        if (inside ? got != maps[k].at(f, c) : got != 0.0) ++bad;
      }
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "zero_pad target %zux%zu, pre_process target %zux%zu, readback mismatches %zu",
                pad.target.frames, pad.target.coefficients, pre.target.frames, pre.target.coefficients, bad);
  return {pad_target && pre_target && bad == 0, buf};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"danas acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"gradient integrity", gradient_integrity},   {"simplex and invariance", simplex_invariance},
      {"early-stop boundary", early_stop_boundary}, {"frame-shape oracle", frame_shapes},
      {"discretization oracle", discretization_oracle}, {"gamma selection", gamma_selection},
      {"end-to-end tiny run", end_to_end},          {"ablation equivalence", ablation_equivalence},
      {"determinism", determinism},                 {"alignment", alignment},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.passed;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.passed ? "PASS" : "FAIL", criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
