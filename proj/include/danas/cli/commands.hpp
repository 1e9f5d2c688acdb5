// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the `danas` executable. Exit codes: 0 success,
// 1 runtime failure, 2 usage or configuration error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "danas/common/data_config.hpp"
#include "danas/engine/dataset.hpp"

namespace danas::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Synthetic tone task. Class k is a tone in its own frequency band plus white
// noise. Every decoy config gets its features from a randomly re-paired clip of
// the same split (listed in decoys.csv), so only the informative config carries
// label information.
struct SynthSpec {
  std::filesystem::path out;
  int classes = 2;
  int per_class = 200;
  std::uint64_t seed = 0;
  DataConfig informative{400, 200, 40};
  std::vector<DataConfig> decoys{{640, 160, 40}, {640, 320, 40}};
  double train_fraction = 0.7;
  double validation_fraction = 0.15;
  double noise = 0.05;
};

struct SynthSummary {
  std::size_t clips = 0;
  std::size_t train = 0, validation = 0, test = 0;
};

// Writes <class>/<class>_NNNN.wav, manifest.csv, {train,validation,testing}_list.txt,
// decoys.csv (when decoys are requested) and synth.json.
SynthSummary synth_data(const SynthSpec& spec);

// Tone frequency of class k in Hz (before per-clip jitter).
double synth_class_frequency(int k);

// Speech Commands layout: one directory per word, validation_list.txt and
// testing_list.txt at the root, everything else is training data.
// task "all35" keeps every word; "names" maps marvin and sheila to themselves and
// every other word to "unknown". ConfigError on a missing split list or unknown task.
std::vector<engine::ManifestEntry> gsc_manifest(const std::filesystem::path& root, const std::string& task);

// Report of a finished run: report.csv (one row per model), report.md, and
// gamma_trajectory.csv (one column per config). Throws ConfigError listing the
// missing artifacts for an incomplete run.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir,
                                                const std::filesystem::path& out_dir);

// Parses argv and dispatches; never throws.
int run(int argc, char** argv);

}  // namespace danas::cli
