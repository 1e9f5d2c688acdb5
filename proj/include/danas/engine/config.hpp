// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "danas/archspace/network.hpp"
#include "danas/archspace/topology.hpp"
#include "danas/common/data_config.hpp"
#include "danas/dataspace/align.hpp"
#include "danas/dataspace/configs.hpp"
#include "danas/dataspace/gamma.hpp"
#include "danas/engine/dataset.hpp"

namespace danas::engine {

inline constexpr int kSchemaVersion = 1;

struct TopologyConfig {
  int cells = 8;
  std::size_t channels = 16;
  int nodes = 4;
  std::vector<arch::OpKind> ops = arch::darts_ops();
  int partial_k = 2;
  std::size_t stem_multiplier = 3;
};

struct SearchRunConfig {
  int warmup_epochs = 5;
  int search_epochs = 50;
  int eval_epochs = 100;
  double lr_weights = 0.025;
  double lr_arch = 0.5;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  int batch_size = 64;
  data::AlignStrategy alignment = data::AlignStrategy::kPreProcess;
  bool data_aware = true;
  std::optional<DataConfig> fixed_config;  // required when data_aware is false
  data::SpaceDescription data_space = data::table_space();
  data::EarlyStopMode early_stop = data::EarlyStopMode::kWeights;
  double search_val_fraction = 0.5;
  double arch_init_sigma = 1e-3;
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  TopologyConfig topology;
};

// Every field is checked; the first violation is reported as "field: reason"
// through ConfigError.
void validate(const SearchRunConfig& cfg);

arch::CellTopology cell_topology(const TopologyConfig& t);
arch::NetworkShape network_shape(const TopologyConfig& t, std::size_t classes);

// The configs searched over: the data space, or just fixed_config when the
// search is not data aware.
std::vector<DataConfig> search_configs(const SearchRunConfig& cfg);

nlohmann::json to_json(const SearchRunConfig& cfg);
// Unknown keys, wrong types and a schema_version other than kSchemaVersion are
// ConfigErrors. Missing keys keep their defaults. Does not call validate().
SearchRunConfig config_from_json(const nlohmann::json& j);

SearchRunConfig load_config(const std::filesystem::path& path);  // parse + validate
std::string dump_config(const SearchRunConfig& cfg);

// "w,h,m" -> DataConfig; ConfigError otherwise.
DataConfig parse_data_config(const std::string& text);

nlohmann::json config_json(const DataConfig& c);
DataConfig config_from(const nlohmann::json& j, const std::string& field);

}  // namespace danas::engine
