// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run directory layout: config.json, genotype.json, gamma_history.csv,
// metrics.json, log.txt; model.json once the final network is trained.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "danas/engine/config.hpp"
#include "danas/engine/search.hpp"
#include "danas/engine/training.hpp"

namespace danas::engine {

inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kGenotypeFile = "genotype.json";
inline constexpr const char* kGammaFile = "gamma_history.csv";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kLogFile = "log.txt";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kLockFile = ".lock";

// Thrown when another process holds the run directory.
class RunLocked : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exclusive ownership of a run directory for the lifetime of the object. The
// directory is created if needed; the lock file is removed on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path lock_;
};

// Appends timestamped lines to log.txt.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& dir, bool echo = false);
  void operator()(const std::string& line);
  LogFn fn();

 private:
  std::ofstream out_;
  bool echo_;
};

// Writes to a temporary sibling and renames, so readers never see half a file.
void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

nlohmann::json search_metrics_json(const SearchResult& r);

// config.json, genotype.json, gamma_history.csv and the "search" section of metrics.json.
void write_search_artifacts(const std::filesystem::path& dir, const SearchRunConfig& cfg, const SearchResult& r);

// Adds or replaces the "evaluation" section of metrics.json and writes model.json.
void write_final_artifacts(const std::filesystem::path& dir, const FinalRun& run, int epochs);

nlohmann::json read_metrics(const std::filesystem::path& dir);  // empty object when absent

}  // namespace danas::engine
