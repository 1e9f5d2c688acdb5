// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "danas/audiofeat/mfcc.hpp"
#include "danas/audiofeat/wav.hpp"
#include "danas/cli/commands.hpp"
#include "danas/common/error.hpp"
#include "danas/engine/config.hpp"
#include "danas/engine/dataset.hpp"
#include "danas/engine/rundir.hpp"
#include "tiny_dataset.hpp"

using namespace danas;
namespace fs = std::filesystem;
using danas::testing::scratch_dir;
using danas::testing::tiny_config;
using danas::testing::tiny_dataset;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "danas");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> lines_of(const fs::path& p) {
  std::set<std::string> out;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.insert(line);
  }
  return out;
}

std::size_t line_count(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// Time-averaged MFCC of whatever clip feeds `config` for this path.
std::vector<double> clip_vector(const engine::Dataset& ds, const fs::path& path, const DataConfig& config) {
  fs::path src = path;
  if (auto it = ds.decoys.find(config); it != ds.decoys.end()) src = it->second.at(path);
  const audio::FeatureMap m = audio::mfcc(audio::pad_to_one_second(audio::load_wav(src)), config);
  std::vector<double> v(m.coefficients, 0.0);
  for (std::size_t f = 0; f < m.frames; ++f) {
    for (std::size_t c = 0; c < m.coefficients; ++c) v[c] += m.values[f * m.coefficients + c] / static_cast<double>(m.frames);
  }
  return v;
}

// Nearest class centroid fitted on train, scored on test.
double probe_accuracy(const engine::Dataset& ds, const DataConfig& config) {
  std::map<int, std::vector<double>> centroid;
  std::map<int, int> count;
  for (const auto& c : ds.train) {
    const auto v = clip_vector(ds, c.path, config);
    auto& acc = centroid[c.label];
    acc.resize(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    ++count[c.label];
  }
  for (auto& [k, v] : centroid) {
    for (double& x : v) x /= count[k];
  }
  int correct = 0;
  for (const auto& c : ds.test) {
    const auto v = clip_vector(ds, c.path, config);
    int best = -1;
    double best_d = INFINITY;
    for (const auto& [k, m] : centroid) {
      double d = 0;
      for (std::size_t i = 0; i < v.size(); ++i) d += (v[i] - m[i]) * (v[i] - m[i]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    correct += best == c.label;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.test.size());
}

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << "x";
}

}  // namespace

TEST_CASE("synthetic dataset layout") {
  const fs::path a = scratch_dir() / "synth_a";
  const fs::path b = scratch_dir() / "synth_b";
  cli::SynthSpec spec;
  spec.out = a;
  spec.seed = 11;
  const cli::SynthSummary s = cli::synth_data(spec);
  CHECK(s.clips == 400);
  CHECK(s.train == 280);
  CHECK(s.validation == 60);
  CHECK(s.test == 60);

  std::size_t wavs = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) wavs += e.path().extension() == ".wav";
  CHECK(wavs == 400);

  const auto train = lines_of(a / "train_list.txt");
  const auto val = lines_of(a / "validation_list.txt");
  const auto test = lines_of(a / "testing_list.txt");
  CHECK(train.size() + val.size() + test.size() == 400);
  for (const auto& x : val) CHECK((train.count(x) == 0 && test.count(x) == 0));
  for (const auto& x : test) CHECK(train.count(x) == 0);

  // Same seed, same bytes.
  spec.out = b;
  cli::synth_data(spec);
  CHECK(slurp(a / "tone0/tone0_0007.wav") == slurp(b / "tone0/tone0_0007.wav"));
  CHECK(slurp(a / "tone1/tone1_0199.wav") == slurp(b / "tone1/tone1_0199.wav"));
  CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
  CHECK(slurp(a / "decoys.csv") == slurp(b / "decoys.csv"));

  // Decoy sources stay inside their split and exclude nothing.
  engine::DatasetSpec ds_spec;
  ds_spec.root = a;
  const engine::Dataset ds = engine::load_dataset(ds_spec);
  std::set<fs::path> train_paths;
  for (const auto& c : ds.train) train_paths.insert(c.path);
  for (const auto& [cfg, map] : ds.decoys) {
    CHECK(map.size() == 400);
    std::set<fs::path> sources;
    for (const auto& c : ds.train) {
      CHECK(train_paths.count(map.at(c.path)) == 1);
      sources.insert(map.at(c.path));
    }
    CHECK(sources.size() == ds.train.size());
  }

  const audio::Waveform w = audio::load_wav(a / "tone0/tone0_0000.wav");
  CHECK(w.sample_rate == 16000);
  CHECK(w.samples.size() == 16000);  // one-second clip, tone placed inside
  CHECK(cli::synth_class_frequency(0) == 600.0);
  CHECK(cli::synth_class_frequency(1) == 1500.0);
}

TEST_CASE("only the informative config separates the classes") {
  engine::DatasetSpec spec;
  spec.root = tiny_dataset("probe", 100, true, 5);
  const engine::Dataset ds = engine::load_dataset(spec);
  const double informative = probe_accuracy(ds, {400, 200, 40});
  const double decoy_a = probe_accuracy(ds, {640, 160, 40});
  const double decoy_b = probe_accuracy(ds, {640, 320, 40});
  MESSAGE("probe accuracy ", informative, " ", decoy_a, " ", decoy_b);
  CHECK(informative > 0.9);
  CHECK(decoy_a < 0.75);
  CHECK(decoy_b < 0.75);
}

TEST_CASE("speech commands manifest") {
  const fs::path root = scratch_dir() / "gsc";
  touch(root / "yes/a.wav");
  touch(root / "yes/b.wav");
  touch(root / "marvin/c.wav");
  touch(root / "sheila/d.wav");
  touch(root / "_background_noise_/noise.wav");
  std::ofstream(root / "validation_list.txt") << "yes/b.wav\n";
  std::ofstream(root / "testing_list.txt") << "marvin/c.wav\n";

  const auto all = cli::gsc_manifest(root, "all35");
  REQUIRE(all.size() == 4);
  std::map<std::string, engine::ManifestEntry> by_path;
  for (const auto& e : all) by_path[e.path] = e;
  CHECK(by_path.count("_background_noise_/noise.wav") == 0);
  CHECK(by_path.at("yes/a.wav").split == engine::Split::kTrain);
  CHECK(by_path.at("yes/b.wav").split == engine::Split::kValidation);
  CHECK(by_path.at("marvin/c.wav").split == engine::Split::kTest);
  CHECK(by_path.at("sheila/d.wav").label == "sheila");

  std::set<std::string> labels;
  for (const auto& e : cli::gsc_manifest(root, "names")) labels.insert(e.label);
  CHECK(labels == std::set<std::string>{"marvin", "sheila", "unknown"});

  CHECK_THROWS_AS(cli::gsc_manifest(root, "digits"), ConfigError);
  fs::remove(root / "testing_list.txt");
  CHECK_THROWS_AS(cli::gsc_manifest(root, "all35"), ConfigError);
}

TEST_CASE("search, train, eval and report through the command line") {
  const fs::path root = tiny_dataset();
  const fs::path cfg_path = scratch_dir() / "cli_config.json";
  engine::write_file(cfg_path, engine::dump_config(tiny_config(root)));

  const fs::path run = scratch_dir() / "cli_run";
  CHECK(run_cli({"search", "--config", cfg_path.string(), "--out", run.string(), "--final"}) == cli::kExitOk);
  for (const char* f : {engine::kConfigFile, engine::kGenotypeFile, engine::kGammaFile, engine::kMetricsFile,
                        engine::kLogFile, engine::kModelFile}) {
    CHECK(fs::exists(run / f));
  }
  CHECK_FALSE(fs::exists(run / engine::kLockFile));
  // An existing run directory is never overwritten.
  CHECK(run_cli({"search", "--config", cfg_path.string(), "--out", run.string()}) == cli::kExitUsage);

  CHECK(run_cli({"eval", "--run-dir", run.string(), "--split", "validation"}) == cli::kExitOk);
  CHECK(fs::exists(run / "eval_validation.json"));
  CHECK(run_cli({"eval", "--run-dir", run.string(), "--split", "dev"}) == cli::kExitUsage);

  CHECK(run_cli({"report", "--run-dir", run.string()}) == cli::kExitOk);
  const fs::path rep = run / "report";
  const auto csv = lines_of(rep / "report.csv");
  CHECK(csv.size() == 2);
  CHECK(line_count(rep / "gamma_trajectory.csv") == 1 + 2 * 3);  // epochs x configs
  CHECK(line_count(rep / "per_class.csv") == 3);
  CHECK(fs::exists(rep / "report.md"));

  // Retraining a different data config from the same run.
  CHECK(run_cli({"train", "--run-dir", run.string(), "--data-config", "640,160,40", "--epochs", "1"}) ==
        cli::kExitOk);
  const auto metrics = engine::read_metrics(run);
  CHECK(metrics["evaluation"]["data_config"] == nlohmann::json::array({640, 160, 40}));

  // Ablation: one fixed config, no gamma rows, marked in the report.
  const fs::path abl = scratch_dir() / "cli_ablation";
  CHECK(run_cli({"search", "--config", cfg_path.string(), "--out", abl.string(), "--data-aware", "false",
                 "--fixed-config", "640,320,40", "--final", "--search-epochs", "1"}) == cli::kExitOk);
  CHECK(line_count(abl / engine::kGammaFile) == 1);
  CHECK(run_cli({"report", "--run-dir", abl.string()}) == cli::kExitOk);
  CHECK(slurp(abl / "report/report.csv").find(",false,640/320/40,") != std::string::npos);
  CHECK(line_count(abl / "report/gamma_trajectory.csv") == 1);
}

TEST_CASE("command line exit codes") {
  const fs::path root = tiny_dataset();
  const fs::path cfg_path = scratch_dir() / "exit_config.json";
  engine::write_file(cfg_path, engine::dump_config(tiny_config(root)));

  CHECK(run_cli({}) == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}) == cli::kExitUsage);
  CHECK(run_cli({"search", "--config", cfg_path.string()}) == cli::kExitUsage);
  CHECK(run_cli({"search", "--config", cfg_path.string(), "--out", (scratch_dir() / "e1").string(), "--bogus"}) ==
        cli::kExitUsage);
  CHECK(run_cli({"search", "--config", cfg_path.string(), "--out", (scratch_dir() / "e2").string(), "--data-aware",
                 "false"}) == cli::kExitUsage);
  CHECK_FALSE(fs::exists(scratch_dir() / "e2"));
  CHECK(run_cli({"search", "--config", cfg_path.string(), "--out", (scratch_dir() / "e3").string(), "--dataset",
                 (scratch_dir() / "missing").string()}) == cli::kExitUsage);
  CHECK_FALSE(fs::exists(scratch_dir() / "e3"));

  const fs::path bad = scratch_dir() / "bad_config.json";
  engine::write_file(bad, R"({"schema_version": 1, "dataset": {"root": "x"}, "epochs": 3})");
  CHECK(run_cli({"search", "--config", bad.string(), "--out", (scratch_dir() / "e4").string()}) == cli::kExitUsage);

  // A half-finished run cannot be reported.
  const fs::path half = scratch_dir() / "half";
  fs::create_directories(half);
  engine::write_file(half / engine::kConfigFile, engine::dump_config(tiny_config(root)));
  CHECK(run_cli({"report", "--run-dir", half.string()}) == cli::kExitUsage);
  CHECK_THROWS_AS(cli::write_report(half, half / "report"), ConfigError);

  CHECK(run_cli({"gradcheck", "--instances", "1"}) == cli::kExitOk);
  CHECK(run_cli({"gradcheck", "--instances", "1", "--sign-fault", "relu"}) == cli::kExitFailure);

  CHECK(run_cli({"synth-data", "--out", (scratch_dir() / "s").string(), "--per-class", "10", "--no-decoys"}) ==
        cli::kExitOk);
  CHECK_FALSE(fs::exists(scratch_dir() / "s/decoys.csv"));
  CHECK(run_cli({"synth-data", "--out", (scratch_dir() / "s1").string(), "--per-class", "5"}) == cli::kExitUsage);
  CHECK(run_cli({"synth-data", "--out", (scratch_dir() / "s2").string(), "--informative", "1,2"}) ==
        cli::kExitUsage);
}
