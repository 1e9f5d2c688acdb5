// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/cli/commands.hpp"

#include <iostream>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "danas/archspace/checks.hpp"
#include "danas/common/error.hpp"
#include "danas/dataspace/checks.hpp"
#include "danas/diffcore/gradcheck.hpp"
#include "danas/engine/config.hpp"
#include "danas/engine/rundir.hpp"
#include "danas/engine/search.hpp"
#include "danas/engine/training.hpp"

namespace danas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SearchArgs {
  fs::path config, out, dataset;
  std::uint64_t seed = 0;
  bool data_aware = true;
  std::string fixed_config, alignment;
  int warmup_epochs = 0, search_epochs = 0, eval_epochs = 0, batch_size = 0;
  bool final = false, verbose = false;
  CLI::Option *seed_opt = nullptr, *aware_opt = nullptr, *warmup_opt = nullptr, *search_opt = nullptr,
              *eval_opt = nullptr, *batch_opt = nullptr;
};

struct TrainArgs {
  fs::path run_dir, config, genotype;
  std::string data_config;
  int epochs = 0;
  std::uint64_t seed = 0;
  bool verbose = false;
  CLI::Option *epochs_opt = nullptr, *seed_opt = nullptr;
};

struct EvalArgs {
  fs::path run_dir, dataset;
  std::string split = "test";
  int batch_size = 0;
};

struct GradcheckArgs {
  std::size_t instances = 10;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double epsilon = 1e-5;
  std::string sign_fault;
};

struct SynthArgs {
  SynthSpec spec;
  std::string informative = "400,200,40";
  std::vector<std::string> decoys;
  bool no_decoys = false;
};

struct PrepareArgs {
  fs::path root, out;
  std::string task = "all35";
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_search(SearchArgs& a) {
  engine::SearchRunConfig cfg = engine::load_config(a.config);
  if (a.seed_opt->count()) cfg.seed = a.seed;
  if (a.aware_opt->count()) cfg.data_aware = a.data_aware;
  if (!a.fixed_config.empty()) cfg.fixed_config = engine::parse_data_config(a.fixed_config);
  if (!a.alignment.empty()) cfg.alignment = data::parse_strategy(a.alignment);
  if (a.warmup_opt->count()) cfg.warmup_epochs = a.warmup_epochs;
  if (a.search_opt->count()) cfg.search_epochs = a.search_epochs;
  if (a.eval_opt->count()) cfg.eval_epochs = a.eval_epochs;
  if (a.batch_opt->count()) cfg.batch_size = a.batch_size;
  if (!a.dataset.empty()) cfg.dataset.root = a.dataset;
  if (!cfg.dataset.root.empty()) cfg.dataset.root = fs::absolute(cfg.dataset.root).lexically_normal();
  engine::validate(cfg);
  const engine::Dataset ds = engine::load_dataset(cfg.dataset);
  if (fs::exists(a.out / engine::kConfigFile)) {
    throw ConfigError("--out: " + a.out.string() + " already holds a run; choose a new directory");
  }

  engine::RunLock lock(a.out);
  engine::RunLog log(a.out, a.verbose);
  log(fmt::format("danas search, seed {}, data_aware {}", cfg.seed, cfg.data_aware));
  engine::write_file(a.out / engine::kConfigFile, engine::dump_config(cfg));
  try {
    const engine::SearchResult r = engine::run_search(cfg, ds, log.fn());
    engine::write_search_artifacts(a.out, cfg, r);
    json summary = engine::search_metrics_json(r);
    if (a.final) {
      const engine::FinalRun run = engine::train_final(r.genotype, r.selected_config, cfg, ds, log.fn());
      engine::write_final_artifacts(a.out, run, cfg.eval_epochs);
      summary["evaluation"] = engine::metrics_json(run.metrics);
    }
    print_json(summary);
  } catch (const std::exception& e) {
    log(std::string("aborted: ") + e.what());
    throw;
  }
  return kExitOk;
}

int cmd_train(TrainArgs& a) {
  const fs::path cfg_path = a.config.empty() ? a.run_dir / engine::kConfigFile : a.config;
  engine::SearchRunConfig cfg = engine::load_config(cfg_path);
  if (a.epochs_opt->count()) cfg.eval_epochs = a.epochs;
  if (a.seed_opt->count()) cfg.seed = a.seed;
  engine::validate(cfg);
  const fs::path g_path = a.genotype.empty() ? a.run_dir / engine::kGenotypeFile : a.genotype;
  if (!fs::is_regular_file(g_path)) throw ConfigError("genotype: no such file " + g_path.string());
  const arch::Genotype g = arch::genotype_from_json(engine::read_file(g_path));

  DataConfig dc;
  if (!a.data_config.empty()) {
    dc = engine::parse_data_config(a.data_config);
  } else {
    const json m = engine::read_metrics(a.run_dir);
    if (!m.contains("search")) {
      throw ConfigError("--data-config: not given and " + (a.run_dir / engine::kMetricsFile).string() +
                        " has no search result");
    }
    dc = engine::config_from(m["search"].at("selected_config"), "metrics.search.selected_config");
  }
  data::validate_config(dc, cfg.data_space.allow_override);
  const engine::Dataset ds = engine::load_dataset(cfg.dataset);

  engine::RunLock lock(a.run_dir);
  engine::RunLog log(a.run_dir, a.verbose);
  log(fmt::format("danas train, {} for {} epochs", dc.str(), cfg.eval_epochs));
  try {
    const engine::FinalRun run = engine::train_final(g, dc, cfg, ds, log.fn());
    engine::write_final_artifacts(a.run_dir, run, cfg.eval_epochs);
    print_json(engine::metrics_json(run.metrics));
  } catch (const std::exception& e) {
    log(std::string("aborted: ") + e.what());
    throw;
  }
  return kExitOk;
}

int cmd_eval(EvalArgs& a) {
  engine::SearchRunConfig cfg = engine::load_config(a.run_dir / engine::kConfigFile);
  if (!a.dataset.empty()) cfg.dataset.root = fs::absolute(a.dataset).lexically_normal();
  const engine::Split split = [&] {
    try {
      return engine::parse_split(a.split);
    } catch (const FormatError& e) {
      throw ConfigError(std::string("--split: ") + e.what());
    }
  }();
  const std::size_t batch = static_cast<std::size_t>(a.batch_size > 0 ? a.batch_size : cfg.batch_size);
  const fs::path model_path = a.run_dir / engine::kModelFile;
  if (!fs::is_regular_file(model_path)) {
    throw ConfigError("no trained model in " + a.run_dir.string() + " (run `danas train` first)");
  }
  const engine::TrainedModel model = engine::load_model(model_path);
  const engine::Dataset ds = engine::load_dataset(cfg.dataset);
  engine::RunLock lock(a.run_dir);
  const engine::Metrics m = engine::evaluate(model, ds, split, batch);
  json j = engine::metrics_json(m);
  j["split"] = std::string(engine::to_string(split));
  engine::write_file(a.run_dir / fmt::format("eval_{}.json", engine::to_string(split)), j.dump(2) + "\n");
  print_json(j);
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  diff::CheckOptions options;
  options.epsilon = a.epsilon;
  options.sign_fault = a.sign_fault;
  std::vector<diff::CheckCase> cases = diff::primitive_checks();
  for (auto& c : data::mixing_checks()) cases.push_back(std::move(c));
  for (auto& c : arch::mixed_op_checks()) cases.push_back(std::move(c));
  const diff::GradcheckSummary s = diff::run_checks(cases, a.instances, a.seed, a.tolerance, options);
  for (const diff::CheckOutcome& o : s.outcomes) {
    std::cout << fmt::format("{:<28} {:>3} instances  max rel. error {:.3e}  {}\n", o.name, o.instances,
                             o.max_error, o.passed ? "PASS" : "FAIL");
  }
  std::size_t failed = 0;
  for (const auto& o : s.outcomes) failed += o.passed ? 0 : 1;
  std::cout << fmt::format("gradcheck: {} of {} checks passed (tolerance {:g})\n", s.outcomes.size() - failed,
                           s.outcomes.size(), s.tolerance);
  return s.passed() ? kExitOk : kExitFailure;
}

int cmd_synth(SynthArgs& a) {
  a.spec.informative = engine::parse_data_config(a.informative);
  if (a.no_decoys) {
    a.spec.decoys.clear();
  } else if (!a.decoys.empty()) {
    a.spec.decoys.clear();
    for (const std::string& d : a.decoys) a.spec.decoys.push_back(engine::parse_data_config(d));
  }
  const SynthSummary s = synth_data(a.spec);
  std::cout << fmt::format("wrote {} clips to {} (train {}, validation {}, test {})\n", s.clips, a.spec.out.string(),
                           s.train, s.validation, s.test);
  return kExitOk;
}

int cmd_prepare(PrepareArgs& a) {
  const std::vector<engine::ManifestEntry> entries = gsc_manifest(a.root, a.task);
  const fs::path out = a.out.empty() ? a.root / ("manifest_" + a.task + ".csv") : a.out;
  engine::write_manifest(out, entries);
  std::set<std::string> labels;
  for (const auto& e : entries) labels.insert(e.label);
  std::cout << fmt::format("wrote {} entries, {} classes to {}\n", entries.size(), labels.size(), out.string());
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Data-aware differentiable architecture search for keyword spotting", "danas"};
  app.require_subcommand(1);

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "Search phase: joint architecture and data-config search");
  search->add_option("--config", sa.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  search->add_option("--out", sa.out, "run directory to create")->required();
  sa.seed_opt = search->add_option("--seed", sa.seed, "override the seed");
  sa.aware_opt = search->add_option("--data-aware", sa.data_aware, "search over data configs (true/false)");
  search->add_option("--fixed-config", sa.fixed_config, "window,hop,mels used when not data aware");
  search->add_option("--alignment", sa.alignment, "zero_pad or pre_process");
  sa.warmup_opt = search->add_option("--warmup-epochs", sa.warmup_epochs);
  sa.search_opt = search->add_option("--search-epochs", sa.search_epochs);
  sa.eval_opt = search->add_option("--eval-epochs", sa.eval_epochs);
  sa.batch_opt = search->add_option("--batch-size", sa.batch_size);
  search->add_option("--dataset", sa.dataset, "override dataset.root");
  search->add_flag("--final", sa.final, "train and evaluate the discovered network afterwards");
  search->add_flag("-v,--verbose", sa.verbose, "echo the log to stderr");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Evaluation phase: train a genotype from scratch");
  train->add_option("--run-dir", ta.run_dir, "run directory from `danas search`")->required();
  train->add_option("--config", ta.config, "configuration (default: <run-dir>/config.json)");
  train->add_option("--genotype", ta.genotype, "genotype (default: <run-dir>/genotype.json)");
  train->add_option("--data-config", ta.data_config, "window,hop,mels (default: the searched selection)");
  ta.epochs_opt = train->add_option("--epochs", ta.epochs, "override eval_epochs");
  ta.seed_opt = train->add_option("--seed", ta.seed, "override the seed");
  train->add_flag("-v,--verbose", ta.verbose, "echo the log to stderr");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model on a split");
  eval->add_option("--run-dir", ea.run_dir, "run directory holding model.json")->required();
  eval->add_option("--split", ea.split, "train, validation or test");
  eval->add_option("--batch-size", ea.batch_size, "evaluation batch size");
  eval->add_option("--dataset", ea.dataset, "override dataset.root");

  fs::path report_dir, report_out;
  auto* report = app.add_subcommand("report", "Metrics table and gamma trajectory CSVs for a finished run");
  report->add_option("--run-dir", report_dir)->required();
  report->add_option("--out", report_out, "output directory (default: <run-dir>/report)");

  GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient path");
  grad->add_option("--instances", ga.instances, "random instances per check")->check(CLI::PositiveNumber);
  grad->add_option("--seed", ga.seed);
  grad->add_option("--tolerance", ga.tolerance);
  grad->add_option("--epsilon", ga.epsilon);
  grad->add_option("--sign-fault", ga.sign_fault, "negate one primitive's gradient rule (self-test)");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth-data", "Write the synthetic tone dataset");
  synth->add_option("--out", ya.spec.out)->required();
  synth->add_option("--classes", ya.spec.classes);
  synth->add_option("--per-class", ya.spec.per_class);
  synth->add_option("--seed", ya.spec.seed);
  synth->add_option("--informative", ya.informative, "window,hop,mels that carries the labels");
  synth->add_option("--decoy", ya.decoys, "window,hop,mels with re-paired features (repeatable)");
  synth->add_flag("--no-decoys", ya.no_decoys, "every config sees its own clip");
  synth->add_option("--noise", ya.spec.noise, "white-noise standard deviation");
  synth->add_option("--train-fraction", ya.spec.train_fraction);
  synth->add_option("--validation-fraction", ya.spec.validation_fraction);

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare-data", "Manifest for a Speech Commands directory");
  prepare->add_option("--gsc-root", pa.root)->required();
  prepare->add_option("--task", pa.task, "all35 or names");
  prepare->add_option("--out", pa.out, "manifest path (default: <gsc-root>/manifest_<task>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*search) return cmd_search(sa);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*report) {
      for (const fs::path& p : write_report(report_dir, report_out.empty() ? report_dir / "report" : report_out)) {
        std::cout << p.string() << "\n";
      }
      return kExitOk;
    }
    if (*grad) return cmd_gradcheck(ga);
    if (*synth) return cmd_synth(ya);
    if (*prepare) return cmd_prepare(pa);
  } catch (const ConfigError& e) {
    std::cerr << "danas: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "danas: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "danas: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace danas::cli
