// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <set>

#include "danas/cli/commands.hpp"
#include "danas/common/error.hpp"

namespace danas::cli {

namespace fs = std::filesystem;
using engine::ManifestEntry;
using engine::Split;

namespace {

std::set<std::string> read_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("prepare-data: missing split list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

}  // namespace

std::vector<ManifestEntry> gsc_manifest(const fs::path& root, const std::string& task) {
  if (task != "all35" && task != "names") {
    throw ConfigError("prepare-data: unknown task '" + task + "' (expected all35 or names)");
  }
  if (!fs::is_directory(root)) throw ConfigError("prepare-data: no such directory " + root.string());
  const std::set<std::string> validation = read_list(root / "validation_list.txt");
  const std::set<std::string> testing = read_list(root / "testing_list.txt");

  std::vector<std::string> words;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && !name.empty() && name[0] != '_' && name[0] != '.') words.push_back(name);
  }
  std::sort(words.begin(), words.end());
  if (words.empty()) throw ConfigError("prepare-data: no class directories under " + root.string());

  std::vector<ManifestEntry> out;
  for (const std::string& word : words) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(root / word)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    std::string label = word;
    if (task == "names" && word != "marvin" && word != "sheila") label = "unknown";
    for (const std::string& f : files) {
      const std::string rel = word + "/" + f;
      const Split split = validation.count(rel) ? Split::kValidation : testing.count(rel) ? Split::kTest : Split::kTrain;
      out.push_back({rel, label, split});
    }
  }
  // Every listed validation/test clip must exist on disk.
  std::set<std::string> present;
  for (const ManifestEntry& e : out) present.insert(e.path);
  for (const auto* list : {&validation, &testing}) {
    for (const std::string& p : *list) {
      if (!present.count(p)) throw ConfigError("prepare-data: split list names a missing file: " + p);
    }
  }
  return out;
}

}  // namespace danas::cli
