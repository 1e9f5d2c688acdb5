// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "danas/common/data_config.hpp"
#include "danas/diffcore/tape.hpp"

namespace danas::data {

using diff::Shape;
using diff::Tensor;

enum class EarlyStopMode {
  kWeights,   // compare softmax weights (default)
  kRawGamma,  // compare raw gamma values, kept for comparison only
};

struct GammaSnapshot {
  int epoch = 0;
  std::vector<double> gamma;
  std::vector<double> weights;
};

// Relaxation over data configs. gamma is a trainable parameter that the engine
// binds on its tape; everything else here is bookkeeping.
template <typename T>
struct GammaState {
  std::vector<DataConfig> configs;
  diff::Parameter<T> gamma;
  std::vector<GammaSnapshot> history;
  bool frozen = false;
  std::optional<int> frozen_epoch;
  // Instrumentation: gamma gradients computed, in total and after the freeze.
  std::uint64_t gradient_evaluations = 0;
  std::uint64_t post_freeze_gradient_evaluations = 0;

  explicit GammaState(std::vector<DataConfig> cfgs);

  std::size_t size() const { return configs.size(); }
  void freeze(int epoch);
  void snapshot(int epoch);
  void note_gradient();
};

// Numerically stable softmax, computed in double.
std::vector<double> softmax_weights(std::span<const double> gamma);

// True iff the largest entry is at least twice the second largest (inclusive).
bool double_rule(std::span<const double> values);

// Index of the maximum; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

template <typename T>
std::vector<double> gamma_values(const GammaState<T>& g);

template <typename T>
std::vector<double> gamma_weights(const GammaState<T>& g);

template <typename T>
bool early_stop_check(const GammaState<T>& g, EarlyStopMode mode = EarlyStopMode::kWeights);

template <typename T>
std::size_t select_index(const GammaState<T>& g);

template <typename T>
DataConfig select_config(const GammaState<T>& g);

// CSV: epoch,config_index,window,hop,mels,gamma,weight; one row per config per snapshot.
struct GammaRow {
  int epoch = 0;
  std::size_t config_index = 0;
  DataConfig config;
  double gamma = 0.0;
  double weight = 0.0;
  bool operator==(const GammaRow&) const = default;
};

inline constexpr const char* kGammaCsvHeader = "epoch,config_index,window,hop,mels,gamma,weight";

std::vector<GammaRow> gamma_rows(std::span<const DataConfig> configs, std::span<const GammaSnapshot> history);
std::string format_gamma_csv(std::span<const GammaRow> rows);
std::vector<GammaRow> parse_gamma_csv(const std::string& text);
void write_gamma_csv(const std::filesystem::path& path, std::span<const GammaRow> rows);
std::vector<GammaRow> read_gamma_csv(const std::filesystem::path& path);

}  // namespace danas::data
