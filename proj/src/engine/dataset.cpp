// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/engine/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "danas/common/error.hpp"
#include "danas/common/rng.hpp"

namespace danas::engine {

namespace fs = std::filesystem;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw FormatError(fmt::format("unknown split '{}' (expected train, validation or test)", s));
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

// Lines without a trailing '\r'; blank lines skipped. First line must equal header.
std::vector<std::string> csv_lines(const std::string& text, std::string_view header, std::string_view what) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line != header) {
        throw FormatError(fmt::format("{}: expected header '{}', got '{}'", what, header, line));
      }
      first = false;
      continue;
    }
    if (!line.empty()) lines.push_back(line);
  }
  if (first) throw FormatError(fmt::format("{}: empty file", what));
  return lines;
}

void check_field(const std::string& f, std::string_view what, std::size_t row) {
  if (f.empty()) throw FormatError(fmt::format("{} row {}: empty field", what, row));
  if (f.find('"') != std::string::npos) {
    throw FormatError(fmt::format("{} row {}: quoted fields are not supported", what, row));
  }
}

int parse_int(const std::string& s, std::string_view what, std::size_t row) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError(fmt::format("{} row {}: '{}' is not an integer", what, row, s));
  }
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string format_manifest(std::span<const ManifestEntry> entries) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const ManifestEntry& e : entries) {
    out += fmt::format("{},{},{}\n", e.path, e.label, to_string(e.split));
  }
  return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::size_t row = 0;
  for (const std::string& line : csv_lines(text, kManifestHeader, "manifest")) {
    ++row;
    auto f = split_fields(line);
    if (f.size() != 3) throw FormatError(fmt::format("manifest row {}: expected 3 fields, got {}", row, f.size()));
    for (const auto& x : f) check_field(x, "manifest", row);
    out.push_back(ManifestEntry{f[0], f[1], parse_split(f[2])});
  }
  return out;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  write_text(path, format_manifest(entries));
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) { return parse_manifest(read_text(path)); }

std::string format_decoys(std::span<const DecoyEntry> entries) {
  std::string out = std::string(kDecoyHeader) + "\n";
  for (const DecoyEntry& e : entries) {
    out += fmt::format("{},{},{},{},{}\n", e.config.window, e.config.hop, e.config.mels, e.path, e.source);
  }
  return out;
}

std::vector<DecoyEntry> parse_decoys(const std::string& text) {
  std::vector<DecoyEntry> out;
  std::size_t row = 0;
  for (const std::string& line : csv_lines(text, kDecoyHeader, "decoys")) {
    ++row;
    auto f = split_fields(line);
    if (f.size() != 5) throw FormatError(fmt::format("decoys row {}: expected 5 fields, got {}", row, f.size()));
    for (const auto& x : f) check_field(x, "decoys", row);
    out.push_back(DecoyEntry{
        DataConfig{parse_int(f[0], "decoys", row), parse_int(f[1], "decoys", row), parse_int(f[2], "decoys", row)},
        f[3], f[4]});
  }
  return out;
}

const std::vector<Clip>& Dataset::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kValidation:
      return validation;
    case Split::kTest:
      return test;
  }
  return train;
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.root.empty()) throw ConfigError("dataset.root: not set");
  if (!fs::is_directory(spec.root)) throw ConfigError("dataset.root: no such directory: " + spec.root.string());
  const fs::path manifest_path = spec.root / spec.manifest;
  if (!fs::is_regular_file(manifest_path)) {
    throw ConfigError("dataset.manifest: no such file: " + manifest_path.string());
  }
  std::vector<ManifestEntry> entries;
  try {
    entries = read_manifest(manifest_path);
  } catch (const FormatError& e) {
    throw ConfigError(std::string("dataset.manifest: ") + e.what());
  }

  // Relabel, then index.
  std::vector<std::pair<const ManifestEntry*, std::string>> kept;
  for (const ManifestEntry& e : entries) {
    std::string label = e.label;
    if (!spec.grouping.empty()) {
      auto it = spec.grouping.find(label);
      if (it == spec.grouping.end()) it = spec.grouping.find("*");
      if (it == spec.grouping.end()) continue;
      label = it->second;
    }
    kept.emplace_back(&e, label);
  }
  Dataset ds;
  ds.root = spec.root;
  if (spec.classes.empty()) {
    std::set<std::string> labels;
    for (const auto& [e, l] : kept) labels.insert(l);
    ds.class_names.assign(labels.begin(), labels.end());
  } else {
    std::set<std::string> seen;
    for (const std::string& c : spec.classes) {
      if (!seen.insert(c).second) throw ConfigError("dataset.classes: duplicate class '" + c + "'");
    }
    ds.class_names = spec.classes;
  }
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < ds.class_names.size(); ++i) index[ds.class_names[i]] = static_cast<int>(i);

  std::set<std::string> paths;
  std::vector<std::string> missing;
  for (const auto& [e, l] : kept) {
    auto it = index.find(l);
    if (it == index.end()) continue;
    if (!paths.insert(e->path).second) {
      throw ConfigError("dataset.manifest: '" + e->path + "' listed more than once (splits must be disjoint)");
    }
    const fs::path p = spec.root / e->path;
    if (!fs::is_regular_file(p)) {
      missing.push_back(e->path);
      continue;
    }
    Clip clip{p, it->second};
    switch (e->split) {
      case Split::kTrain:
        ds.train.push_back(clip);
        break;
      case Split::kValidation:
        ds.validation.push_back(clip);
        break;
      case Split::kTest:
        ds.test.push_back(clip);
        break;
    }
  }
  if (!missing.empty()) {
    throw ConfigError(fmt::format("dataset.manifest: {} listed files do not exist (first: {})", missing.size(),
                                  missing.front()));
  }
  for (const std::string& c : ds.class_names) {
    bool any = false;
    for (const auto& [e, l] : kept) any = any || l == c;
    if (!any) throw ConfigError("dataset.classes: class '" + c + "' has no clips");
  }
  if (ds.class_names.size() < 2) throw ConfigError("dataset: at least two classes are required");
  if (ds.train.empty()) throw ConfigError("dataset: empty train split");
  if (ds.test.empty()) throw ConfigError("dataset: empty test split");

  const fs::path decoy_path = spec.root / kDecoyFile;
  if (fs::is_regular_file(decoy_path)) {
    std::vector<DecoyEntry> decoys;
    try {
      decoys = parse_decoys(read_text(decoy_path));
    } catch (const FormatError& e) {
      throw ConfigError(std::string("dataset decoys: ") + e.what());
    }
    for (const DecoyEntry& d : decoys) {
      if (!fs::is_regular_file(spec.root / d.source)) {
        throw ConfigError("dataset decoys: no such file: " + d.source);
      }
      ds.decoys[d.config][spec.root / d.path] = spec.root / d.source;
    }
  }
  return ds;
}

SearchSplit search_split(std::span<const Clip> train, double val_fraction, std::uint64_t seed) {
  require(val_fraction > 0.0 && val_fraction < 1.0, "search_split: fraction must lie in (0, 1)");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, "search_split");
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(train.size()) * val_fraction));
  require(n_val >= 1 && n_val < train.size(), "search_split: training split too small to divide");
  SearchSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_val ? out.train : out.validation).push_back(train[order[i]]);
  }
  return out;
}

}  // namespace danas::engine
