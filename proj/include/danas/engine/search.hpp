// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Search phase: weight-only warm-up, then strictly alternating weight steps on
// search-train batches and architecture steps on search-validation batches.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "danas/archspace/network.hpp"
#include "danas/dataspace/align.hpp"
#include "danas/dataspace/gamma.hpp"
#include "danas/diffcore/optim.hpp"
#include "danas/engine/config.hpp"
#include "danas/engine/features.hpp"

namespace danas::engine {

using LogFn = std::function<void(const std::string&)>;

// One epoch of batches: a permutation of [0, n) drawn from the named stream and
// cut into runs of batch_size (the last run may be shorter).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::string_view stream, std::uint64_t epoch);

// Endless batch source; starts a fresh permutation whenever one is used up.
class BatchCycle {
 public:
  BatchCycle(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::string stream);
  const std::vector<std::size_t>& next();
  std::uint64_t cycles() const { return cycle_; }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  std::string stream_;
  std::uint64_t cycle_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::vector<std::size_t>> current_;
};

struct SearchData {
  std::vector<DataConfig> configs;
  std::vector<FeatureBank> train;  // one bank per config
  std::vector<FeatureBank> validation;
  std::vector<int> train_labels;
  std::vector<int> validation_labels;
  std::vector<std::string> class_names;
};

// Splits the training clips, computes features for every searched config and
// standardises them with statistics of the search-train half.
SearchData prepare_search_data(const SearchRunConfig& cfg, const Dataset& ds, unsigned threads = 0);

struct SearchResult {
  arch::Genotype genotype;
  DataConfig selected_config;
  std::vector<DataConfig> configs;
  std::vector<data::GammaSnapshot> gamma_history;
  std::vector<double> warmup_loss;  // mean per epoch
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::optional<int> early_stop_epoch;
  std::uint64_t gamma_gradient_evaluations = 0;
  std::uint64_t post_freeze_gamma_gradient_evaluations = 0;
  std::size_t supernet_parameters = 0;
  double wall_clock_seconds = 0.0;
};

class SearchSession {
 public:
  SearchSession(const SearchRunConfig& cfg, SearchData data, LogFn log = {});
  SearchSession(const SearchSession&) = delete;
  SearchSession& operator=(const SearchSession&) = delete;

  void warmup();         // cfg.warmup_epochs epochs
  double warmup_epoch();  // mean loss
  void search_epoch();

  // One update each; return the batch loss. NonFiniteLoss on NaN/Inf.
  double weight_step(std::span<const std::size_t> train_indices);
  double arch_step(std::span<const std::size_t> validation_indices);

  int warmup_epochs_done() const { return static_cast<int>(warmup_loss_.size()); }
  int search_epochs_done() const { return static_cast<int>(train_loss_.size()); }
  SearchResult result() const;

  arch::Supernet<float>& supernet() { return *net_; }
  diff::ParameterStore<float>& weights() { return *store_; }
  data::GammaState<float>& gamma() { return gamma_; }
  const data::AlignmentPlan<float>* plan() const { return plan_ ? &*plan_ : nullptr; }
  const SearchRunConfig& config() const { return cfg_; }
  const SearchData& data() const { return data_; }

 private:
  diff::Var<float> input(diff::Tape<float>& tape, const std::vector<FeatureBank>& banks,
                         std::span<const std::size_t> indices, bool weight_step, bool gamma_grad);
  void check_finite(double loss, std::string_view phase) const;
  void log(const std::string& line) const;

  SearchRunConfig cfg_;
  SearchData data_;
  LogFn log_;
  std::unique_ptr<diff::ParameterStore<float>> store_;
  std::unique_ptr<arch::Supernet<float>> net_;
  data::GammaState<float> gamma_;
  std::optional<data::AlignmentPlan<float>> plan_;
  diff::OptimizerState<float> weight_opt_;
  diff::OptimizerState<float> arch_opt_;
  BatchCycle val_cycle_;
  std::uint64_t train_epochs_ = 0;  // index into the "train" batch stream
  std::vector<double> warmup_loss_, train_loss_, val_loss_;
  std::chrono::steady_clock::time_point start_;
};

// validate, split, featurise, warm up, search, discretize. ConfigError on a bad
// config or unusable dataset, before any training.
SearchResult run_search(const SearchRunConfig& cfg, const Dataset& ds, LogFn log = {});

}  // namespace danas::engine
