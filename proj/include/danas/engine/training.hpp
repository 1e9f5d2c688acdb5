// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation phase: train a discovered genotype from scratch on a single data
// config and measure it on a held-out split.

#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "danas/archspace/network.hpp"
#include "danas/engine/config.hpp"
#include "danas/engine/dataset.hpp"
#include "danas/engine/features.hpp"
#include "danas/engine/search.hpp"

namespace danas::engine {

struct ClassMetrics {
  std::string name;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // 0 when the class is absent from the split
};

struct Metrics {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t parameter_count = 0;
  std::vector<ClassMetrics> per_class;
  double wall_clock_seconds = 0.0;
};

nlohmann::json metrics_json(const Metrics& m);

struct TrainedModel {
  arch::Genotype genotype;
  arch::NetworkShape shape;
  DataConfig config;
  Standardiser standardiser;
  std::vector<std::string> class_names;
  std::unique_ptr<diff::ParameterStore<float>> store;
  std::unique_ptr<arch::DiscreteNet<float>> net;
  std::vector<double> train_loss;  // mean per epoch
};

// Fresh weights drawn from the seed's "final" stream.
TrainedModel build_model(const arch::Genotype& g, const arch::NetworkShape& shape, const DataConfig& config,
                         std::vector<std::string> class_names, std::uint64_t seed);

struct FinalRun {
  TrainedModel model;
  Metrics metrics;  // on the test split
};

// cfg.eval_epochs of SGD on the full training split using only data_config.
FinalRun train_final(const arch::Genotype& g, const DataConfig& data_config, const SearchRunConfig& cfg,
                     const Dataset& ds, LogFn log = {});

// Accuracy over the given features; deterministic and independent of batch_size.
Metrics evaluate(const TrainedModel& model, const FeatureBank& features, std::span<const int> labels,
                 std::size_t batch_size);
// Featurises the split with the model's standardiser. ConfigError when the
// dataset's classes differ from the model's, or the split is empty.
Metrics evaluate(const TrainedModel& model, const Dataset& ds, Split split, std::size_t batch_size);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);  // FormatError

}  // namespace danas::engine
