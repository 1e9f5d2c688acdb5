// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset manifests: one CSV row per clip with its class label and split.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "danas/common/data_config.hpp"

namespace danas::engine {

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);  // FormatError

struct ManifestEntry {
  std::string path;  // relative to the dataset root, '/' separated
  std::string label;
  Split split = Split::kTrain;
  bool operator==(const ManifestEntry&) const = default;
};

inline constexpr const char* kManifestHeader = "path,label,split";

std::string format_manifest(std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Feature-source substitution: for `config`, the features of `path` are computed
// from the audio of `source`. Used by the synthetic task to make a config's
// features label-independent.
struct DecoyEntry {
  DataConfig config;
  std::string path;
  std::string source;
  bool operator==(const DecoyEntry&) const = default;
};

inline constexpr const char* kDecoyHeader = "window,hop,mels,path,source";
inline constexpr const char* kDecoyFile = "decoys.csv";

std::string format_decoys(std::span<const DecoyEntry> entries);
std::vector<DecoyEntry> parse_decoys(const std::string& text);

struct DatasetSpec {
  std::filesystem::path root;
  std::string manifest = "manifest.csv";
  // Keep only these labels, indexed in this order. Empty: every label, sorted.
  std::vector<std::string> classes;
  // Label renaming applied before `classes`; "*" catches labels not listed.
  // Labels that map nowhere are dropped.
  std::map<std::string, std::string> grouping;
};

struct Clip {
  std::filesystem::path path;
  int label = 0;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<Clip> train;
  std::vector<Clip> validation;
  std::vector<Clip> test;
  // config -> clip path -> source path
  std::map<DataConfig, std::map<std::filesystem::path, std::filesystem::path>> decoys;

  std::size_t classes() const { return class_names.size(); }
  const std::vector<Clip>& split(Split s) const;
};

// Reads and validates a dataset: the root and manifest exist, every referenced
// file exists, splits are disjoint, and train and test are non-empty.
// ConfigError on any violation.
Dataset load_dataset(const DatasetSpec& spec);

// Seeded partition of the training split into search-train and search-validation
// halves (validation gets round(n * val_fraction) clips).
struct SearchSplit {
  std::vector<Clip> train;
  std::vector<Clip> validation;
};
SearchSplit search_split(std::span<const Clip> train, double val_fraction, std::uint64_t seed);

}  // namespace danas::engine
