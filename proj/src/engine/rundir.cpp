// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/engine/rundir.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "danas/common/error.hpp"

namespace danas::engine {

namespace fs = std::filesystem;
using nlohmann::json;

RunLock::RunLock(const fs::path& dir) : lock_(dir / kLockFile) {
  fs::create_directories(dir);
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw RunLocked("run directory " + dir.string() + " is in use (remove " + lock_.string() +
                      " if no other process is running)");
    }
    throw std::runtime_error("cannot create " + lock_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

RunLog::RunLog(const fs::path& dir, bool echo) : out_(dir / kLogFile, std::ios::app), echo_(echo) {
  if (!out_) throw std::runtime_error("cannot open " + (dir / kLogFile).string());
}

void RunLog::operator()(const std::string& line) {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  out_ << fmt::format("{:%Y-%m-%dT%H:%M:%S} {}\n", now, line);
  out_.flush();
  if (echo_) std::cerr << line << "\n";
}

LogFn RunLog::fn() {
  return [this](const std::string& line) { (*this)(line); };
}

void write_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json search_metrics_json(const SearchResult& r) {
  json j;
  j["selected_config"] = config_json(r.selected_config);
  j["configs"] = json::array();
  for (const DataConfig& c : r.configs) j["configs"].push_back(config_json(c));
  j["early_stop_epoch"] = r.early_stop_epoch ? json(*r.early_stop_epoch) : json(nullptr);
  j["warmup_loss"] = r.warmup_loss;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["supernet_parameters"] = r.supernet_parameters;
  j["gamma_gradient_evaluations"] = r.gamma_gradient_evaluations;
  j["post_freeze_gamma_gradient_evaluations"] = r.post_freeze_gamma_gradient_evaluations;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

json read_metrics(const fs::path& dir) {
  const fs::path p = dir / kMetricsFile;
  if (!fs::exists(p)) return json::object();
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw FormatError("metrics.json: " + std::string(e.what()));
  }
}

void write_search_artifacts(const fs::path& dir, const SearchRunConfig& cfg, const SearchResult& r) {
  write_file(dir / kConfigFile, dump_config(cfg));
  write_file(dir / kGenotypeFile, arch::genotype_to_json(r.genotype));
  write_file(dir / kGammaFile, data::format_gamma_csv(data::gamma_rows(r.configs, r.gamma_history)));
  json m = read_metrics(dir);
  m["schema_version"] = kSchemaVersion;
  m["data_aware"] = cfg.data_aware;
  m["search"] = search_metrics_json(r);
  write_file(dir / kMetricsFile, m.dump(2) + "\n");
}

void write_final_artifacts(const fs::path& dir, const FinalRun& run, int epochs) {
  save_model(dir / kModelFile, run.model);
  json m = read_metrics(dir);
  m["schema_version"] = kSchemaVersion;
  json e = metrics_json(run.metrics);
  e["split"] = "test";
  e["epochs"] = epochs;
  e["data_config"] = config_json(run.model.config);
  e["train_loss"] = run.model.train_loss;
  m["evaluation"] = e;
  write_file(dir / kMetricsFile, m.dump(2) + "\n");
}

}  // namespace danas::engine
