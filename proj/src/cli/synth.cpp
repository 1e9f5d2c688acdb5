// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "json.hpp"

#include "danas/audiofeat/wav.hpp"
#include "danas/cli/commands.hpp"
#include "danas/common/error.hpp"
#include "danas/common/rng.hpp"
#include "danas/engine/config.hpp"
#include "danas/engine/rundir.hpp"

namespace danas::cli {

namespace fs = std::filesystem;
using engine::Split;

double synth_class_frequency(int k) { return 600.0 + 900.0 * k; }

namespace {

audio::Waveform tone_clip(int label, double noise, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, noise);
  const double freq = synth_class_frequency(label) + (u(rng) - 0.5) * 120.0;
  const double amp = 0.2 + 0.3 * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const int onset = static_cast<int>(u(rng) * 0.3 * audio::kSampleRate);
  const int length = static_cast<int>((0.5 + 0.2 * u(rng)) * audio::kSampleRate);
  audio::Waveform w;
  w.sample_rate = audio::kSampleRate;
  w.samples.resize(audio::kClipSamples);
  for (int i = 0; i < audio::kClipSamples; ++i) {
    double s = n(rng);
    if (i >= onset && i < onset + length) {
      // Short raised-cosine ramps avoid broadband clicks at the edges.
      const int ramp = 160;
      const int pos = i - onset;
      const double env = std::min({1.0, (pos + 1.0) / ramp, (length - pos) / static_cast<double>(ramp)});
      s += amp * env * std::sin(2.0 * std::numbers::pi * freq * i / audio::kSampleRate + phase);
    }
    w.samples[static_cast<std::size_t>(i)] = std::clamp(s, -1.0, 1.0);
  }
  return w;
}

}  // namespace

SynthSummary synth_data(const SynthSpec& spec) {
  if (spec.out.empty()) throw ConfigError("synth-data: output directory not set");
  if (spec.classes < 2) throw ConfigError("synth-data: classes must be >= 2");
  if (spec.per_class < 3) throw ConfigError("synth-data: per_class must be >= 3");
  if (!(spec.train_fraction > 0 && spec.validation_fraction >= 0 &&
        spec.train_fraction + spec.validation_fraction < 1)) {
    throw ConfigError("synth-data: split fractions must leave a non-empty test split");
  }
  if (!(spec.noise >= 0)) throw ConfigError("synth-data: noise must be >= 0");
  for (const DataConfig& d : spec.decoys) {
    if (d == spec.informative) throw ConfigError("synth-data: the informative config cannot also be a decoy");
  }

  fs::create_directories(spec.out);
  const int n_train = static_cast<int>(std::lround(spec.per_class * spec.train_fraction));
  const int n_val = static_cast<int>(std::lround(spec.per_class * spec.validation_fraction));
  if (n_train < 1 || n_train + n_val >= spec.per_class) {
    throw ConfigError("synth-data: per_class too small for the requested split fractions");
  }

  std::vector<engine::ManifestEntry> entries;
  std::string lists[3];
  SynthSummary summary;
  for (int k = 0; k < spec.classes; ++k) {
    const std::string label = fmt::format("tone{}", k);
    fs::create_directories(spec.out / label);
    Rng rng = derive_rng(spec.seed, fmt::format("synth:{}", k));
    for (int i = 0; i < spec.per_class; ++i) {
      const std::string rel = fmt::format("{}/{}_{:04d}.wav", label, label, i);
      audio::write_wav(spec.out / rel, tone_clip(k, spec.noise, rng));
      const Split split = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kValidation : Split::kTest);
      entries.push_back({rel, label, split});
      lists[static_cast<int>(split)] += rel + "\n";
      ++summary.clips;
      (split == Split::kTrain ? summary.train : split == Split::kValidation ? summary.validation : summary.test)++;
    }
  }
  engine::write_manifest(spec.out / "manifest.csv", entries);
  engine::write_file(spec.out / "train_list.txt", lists[0]);
  engine::write_file(spec.out / "validation_list.txt", lists[1]);
  engine::write_file(spec.out / "testing_list.txt", lists[2]);

  // Re-pair clips within each split: a decoy config sees some other clip's audio.
  std::vector<engine::DecoyEntry> decoys;
  for (const DataConfig& d : spec.decoys) {
    Rng rng = derive_rng(spec.seed, "decoy:" + d.str());
    for (Split split : {Split::kTrain, Split::kValidation, Split::kTest}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].split == split) members.push_back(i);
      }
      std::vector<std::size_t> source = members;
      std::shuffle(source.begin(), source.end(), rng);
      for (std::size_t i = 0; i < members.size(); ++i) {
        decoys.push_back({d, entries[members[i]].path, entries[source[i]].path});
      }
    }
  }
  const fs::path decoy_path = spec.out / engine::kDecoyFile;
  if (decoys.empty()) {
    std::error_code ec;
    fs::remove(decoy_path, ec);
  } else {
    engine::write_file(decoy_path, engine::format_decoys(decoys));
  }

  nlohmann::json j;
  j["classes"] = spec.classes;
  j["per_class"] = spec.per_class;
  j["seed"] = spec.seed;
  j["informative"] = engine::config_json(spec.informative);
  j["decoys"] = nlohmann::json::array();
  for (const DataConfig& d : spec.decoys) j["decoys"].push_back(engine::config_json(d));
  j["frequencies_hz"] = nlohmann::json::array();
  for (int k = 0; k < spec.classes; ++k) j["frequencies_hz"].push_back(synth_class_frequency(k));
  j["noise"] = spec.noise;
  j["train_fraction"] = spec.train_fraction;
  j["validation_fraction"] = spec.validation_fraction;
  engine::write_file(spec.out / "synth.json", j.dump(2) + "\n");
  return summary;
}

}  // namespace danas::cli
