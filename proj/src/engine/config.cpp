// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/engine/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::engine {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError(field + ": " + why);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(where.empty() ? "config" : where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) fail(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
  }
}

std::string path_of(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

template <typename T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  const std::string field = path_of(where, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) fail(field, "expected true or false");
    out = it->template get<bool>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!it->is_number_unsigned()) fail(field, "expected a non-negative integer");
    out = it->template get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) fail(field, "expected an integer");
    const auto v = it->template get<long long>();
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) fail(field, "must be non-negative");
    }
    out = static_cast<T>(v);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) fail(field, "expected a number");
    out = it->template get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) fail(field, "expected a string");
    out = it->template get<std::string>();
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    if (!it->is_array()) fail(field, "expected an array of integers");
    out.clear();
    for (const json& v : *it) {
      if (!v.is_number_integer()) fail(field, "expected an array of integers");
      out.push_back(v.get<int>());
    }
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    if (!it->is_array()) fail(field, "expected an array of strings");
    out.clear();
    for (const json& v : *it) {
      if (!v.is_string()) fail(field, "expected an array of strings");
      out.push_back(v.get<std::string>());
    }
  }
}

const char* early_stop_name(data::EarlyStopMode m) {
  return m == data::EarlyStopMode::kWeights ? "weights" : "raw_gamma";
}

}  // namespace

json config_json(const DataConfig& c) { return json::array({c.window, c.hop, c.mels}); }

DataConfig config_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) fail(field, "expected [window, hop, mels]");
  for (const json& v : j) {
    if (!v.is_number_integer()) fail(field, "expected [window, hop, mels] as integers");
  }
  return DataConfig{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

DataConfig parse_data_config(const std::string& text) {
  DataConfig c;
  char a = 0, b = 0;
  std::istringstream in(text);
  if (!(in >> c.window >> a >> c.hop >> b >> c.mels) || a != ',' || b != ',' || !(in >> std::ws).eof()) {
    throw ConfigError("data config: expected 'window,hop,mels', got '" + text + "'");
  }
  return c;
}

arch::CellTopology cell_topology(const TopologyConfig& t) {
  arch::CellTopology topo;
  topo.intermediate_nodes = t.nodes;
  topo.ops = t.ops;
  topo.partial_k = t.partial_k;
  return topo;
}

arch::NetworkShape network_shape(const TopologyConfig& t, std::size_t classes) {
  arch::NetworkShape s;
  s.num_cells = t.cells;
  s.channels = t.channels;
  s.classes = classes;
  s.in_channels = 1;
  s.stem_multiplier = t.stem_multiplier;
  return s;
}

std::vector<DataConfig> search_configs(const SearchRunConfig& cfg) {
  if (!cfg.data_aware) {
    if (!cfg.fixed_config) fail("fixed_config", "required when data_aware is false");
    return {*cfg.fixed_config};
  }
  try {
    return data::enumerate_configs(cfg.data_space);
  } catch (const ConfigError& e) {
    fail("data_space", e.what());
  }
}

void validate(const SearchRunConfig& cfg) {
  if (cfg.warmup_epochs < 0) fail("warmup_epochs", "must be >= 0");
  if (cfg.search_epochs < 0) fail("search_epochs", "must be >= 0");
  if (cfg.eval_epochs < 0) fail("eval_epochs", "must be >= 0");
  if (!(cfg.lr_weights > 0)) fail("lr_weights", "must be > 0");
  if (!(cfg.lr_arch > 0)) fail("lr_arch", "must be > 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) fail("momentum", "must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0)) fail("weight_decay", "must be >= 0");
  if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(cfg.search_val_fraction > 0 && cfg.search_val_fraction < 1)) {
    fail("search_val_fraction", "must lie in (0, 1)");
  }
  if (!(cfg.arch_init_sigma >= 0)) fail("arch_init_sigma", "must be >= 0");
  if (cfg.data_aware && cfg.fixed_config) fail("fixed_config", "only allowed when data_aware is false");
  if (cfg.fixed_config) {
    try {
      data::validate_config(*cfg.fixed_config, cfg.data_space.allow_override);
    } catch (const ConfigError& e) {
      fail("fixed_config", e.what());
    }
  }
  search_configs(cfg);

  const TopologyConfig& t = cfg.topology;
  if (t.cells < 3) fail("topology.cells", "must be >= 3 (two reduction cells plus one normal cell)");
  if (t.channels < 1) fail("topology.channels", "must be >= 1");
  if (t.nodes < 1) fail("topology.nodes", "must be >= 1");
  if (t.ops.empty()) fail("topology.ops", "must not be empty");
  if (std::set<arch::OpKind>(t.ops.begin(), t.ops.end()).size() != t.ops.size()) {
    fail("topology.ops", "duplicate operation");
  }
  bool has_real = false;
  for (arch::OpKind op : t.ops) has_real = has_real || op != arch::OpKind::kNone;
  if (!has_real) fail("topology.ops", "needs at least one operation other than 'none'");
  if (t.partial_k < 1) fail("topology.partial_k", "must be >= 1");
  if (t.channels % static_cast<std::size_t>(t.partial_k) != 0) {
    fail("topology.channels", fmt::format("must be divisible by partial_k = {}", t.partial_k));
  }
  if (t.stem_multiplier < 1) fail("topology.stem_multiplier", "must be >= 1");
  if (cfg.dataset.root.empty()) fail("dataset.root", "not set");
  if (cfg.dataset.manifest.empty()) fail("dataset.manifest", "must not be empty");
}

json to_json(const SearchRunConfig& cfg) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["warmup_epochs"] = cfg.warmup_epochs;
  j["search_epochs"] = cfg.search_epochs;
  j["eval_epochs"] = cfg.eval_epochs;
  j["lr_weights"] = cfg.lr_weights;
  j["lr_arch"] = cfg.lr_arch;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["alignment"] = std::string(data::to_string(cfg.alignment));
  j["data_aware"] = cfg.data_aware;
  j["fixed_config"] = cfg.fixed_config ? config_json(*cfg.fixed_config) : json(nullptr);
  json space;
  space["windows"] = cfg.data_space.windows;
  space["hop_divisors"] = cfg.data_space.hop_divisors;
  space["mels"] = cfg.data_space.mels;
  space["configs"] = json::array();
  for (const DataConfig& c : cfg.data_space.explicit_configs) space["configs"].push_back(config_json(c));
  space["allow_override"] = cfg.data_space.allow_override;
  j["data_space"] = space;
  j["early_stop"] = early_stop_name(cfg.early_stop);
  j["search_val_fraction"] = cfg.search_val_fraction;
  j["arch_init_sigma"] = cfg.arch_init_sigma;
  json ds;
  ds["root"] = cfg.dataset.root.generic_string();
  ds["manifest"] = cfg.dataset.manifest;
  ds["classes"] = cfg.dataset.classes;
  ds["grouping"] = cfg.dataset.grouping;
  j["dataset"] = ds;
  json topo;
  topo["cells"] = cfg.topology.cells;
  topo["channels"] = cfg.topology.channels;
  topo["nodes"] = cfg.topology.nodes;
  topo["ops"] = json::array();
  for (arch::OpKind op : cfg.topology.ops) topo["ops"].push_back(std::string(arch::op_name(op)));
  topo["partial_k"] = cfg.topology.partial_k;
  topo["stem_multiplier"] = cfg.topology.stem_multiplier;
  j["topology"] = topo;
  return j;
}

SearchRunConfig config_from_json(const json& j) {
  check_keys(j, "",
             {"schema_version", "seed", "warmup_epochs", "search_epochs", "eval_epochs", "lr_weights", "lr_arch",
              "momentum", "weight_decay", "batch_size", "alignment", "data_aware", "fixed_config", "data_space",
              "early_stop", "search_val_fraction", "arch_init_sigma", "dataset", "topology"});
  auto version = j.find("schema_version");
  if (version == j.end()) fail("schema_version", "missing");
  if (!version->is_number_integer() || version->get<long long>() != kSchemaVersion) {
    fail("schema_version", fmt::format("unsupported version {} (expected {})", version->dump(), kSchemaVersion));
  }

  SearchRunConfig cfg;
  read(j, "", "seed", cfg.seed);
  read(j, "", "warmup_epochs", cfg.warmup_epochs);
  read(j, "", "search_epochs", cfg.search_epochs);
  read(j, "", "eval_epochs", cfg.eval_epochs);
  read(j, "", "lr_weights", cfg.lr_weights);
  read(j, "", "lr_arch", cfg.lr_arch);
  read(j, "", "momentum", cfg.momentum);
  read(j, "", "weight_decay", cfg.weight_decay);
  read(j, "", "batch_size", cfg.batch_size);
  read(j, "", "data_aware", cfg.data_aware);
  read(j, "", "search_val_fraction", cfg.search_val_fraction);
  read(j, "", "arch_init_sigma", cfg.arch_init_sigma);

  std::string s;
  if (j.contains("alignment")) {
    read(j, "", "alignment", s);
    try {
      cfg.alignment = data::parse_strategy(s);
    } catch (const ConfigError& e) {
      fail("alignment", e.what());
    }
  }
  if (j.contains("early_stop")) {
    read(j, "", "early_stop", s);
    if (s == "weights") {
      cfg.early_stop = data::EarlyStopMode::kWeights;
    } else if (s == "raw_gamma") {
      cfg.early_stop = data::EarlyStopMode::kRawGamma;
    } else {
      fail("early_stop", "expected 'weights' or 'raw_gamma', got '" + s + "'");
    }
  }
  if (auto it = j.find("fixed_config"); it != j.end() && !it->is_null()) {
    cfg.fixed_config = config_from(*it, "fixed_config");
  }
  if (auto it = j.find("data_space"); it != j.end()) {
    check_keys(*it, "data_space", {"windows", "hop_divisors", "mels", "configs", "allow_override"});
    data::SpaceDescription space;
    read(*it, "data_space", "windows", space.windows);
    read(*it, "data_space", "hop_divisors", space.hop_divisors);
    read(*it, "data_space", "mels", space.mels);
    read(*it, "data_space", "allow_override", space.allow_override);
    if (auto c = it->find("configs"); c != it->end()) {
      if (!c->is_array()) fail("data_space.configs", "expected an array of [window, hop, mels]");
      for (std::size_t i = 0; i < c->size(); ++i) {
        space.explicit_configs.push_back(config_from((*c)[i], fmt::format("data_space.configs[{}]", i)));
      }
    }
    cfg.data_space = space;
  }
  if (auto it = j.find("dataset"); it != j.end()) {
    check_keys(*it, "dataset", {"root", "manifest", "classes", "grouping"});
    std::string root;
    read(*it, "dataset", "root", root);
    cfg.dataset.root = root;
    read(*it, "dataset", "manifest", cfg.dataset.manifest);
    read(*it, "dataset", "classes", cfg.dataset.classes);
    if (auto g = it->find("grouping"); g != it->end()) {
      if (!g->is_object()) fail("dataset.grouping", "expected an object of label -> class");
      for (auto e = g->begin(); e != g->end(); ++e) {
        if (!e.value().is_string()) fail("dataset.grouping." + e.key(), "expected a string");
        cfg.dataset.grouping[e.key()] = e.value().get<std::string>();
      }
    }
  }
  if (auto it = j.find("topology"); it != j.end()) {
    check_keys(*it, "topology", {"cells", "channels", "nodes", "ops", "partial_k", "stem_multiplier"});
    read(*it, "topology", "cells", cfg.topology.cells);
    read(*it, "topology", "channels", cfg.topology.channels);
    read(*it, "topology", "nodes", cfg.topology.nodes);
    read(*it, "topology", "partial_k", cfg.topology.partial_k);
    read(*it, "topology", "stem_multiplier", cfg.topology.stem_multiplier);
    if (auto o = it->find("ops"); o != it->end()) {
      if (o->is_string()) {
        const std::string name = o->get<std::string>();
        if (name == "darts") {
          cfg.topology.ops = arch::darts_ops();
        } else if (name == "reduced") {
          cfg.topology.ops = arch::reduced_ops();
        } else {
          fail("topology.ops", "expected 'darts', 'reduced' or a list of operation names");
        }
      } else if (o->is_array()) {
        cfg.topology.ops.clear();
        for (const json& v : *o) {
          if (!v.is_string()) fail("topology.ops", "expected operation names");
          try {
            cfg.topology.ops.push_back(arch::parse_op(v.get<std::string>()));
          } catch (const FormatError& e) {
            fail("topology.ops", e.what());
          }
        }
      } else {
        fail("topology.ops", "expected 'darts', 'reduced' or a list of operation names");
      }
    }
  }
  return cfg;
}

SearchRunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  SearchRunConfig cfg = config_from_json(j);
  validate(cfg);
  return cfg;
}

std::string dump_config(const SearchRunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace danas::engine
