// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/engine/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "danas/common/error.hpp"
#include "danas/common/rng.hpp"

namespace danas::engine {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::string_view stream, std::uint64_t epoch) {
  require(batch_size >= 1, "epoch_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, fmt::format("{}:{}", stream, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(std::min(n, i + batch_size)));
  }
  return out;
}

BatchCycle::BatchCycle(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::string stream)
    : n_(n), batch_size_(batch_size), seed_(seed), stream_(std::move(stream)) {
  require(n >= 1, "BatchCycle: empty split");
}

const std::vector<std::size_t>& BatchCycle::next() {
  if (pos_ == current_.size()) {
    current_ = epoch_batches(n_, batch_size_, seed_, stream_, cycle_++);
    pos_ = 0;
  }
  return current_[pos_++];
}

SearchData prepare_search_data(const SearchRunConfig& cfg, const Dataset& ds, unsigned threads) {
  SearchData out;
  out.configs = search_configs(cfg);
  out.class_names = ds.class_names;
  const SearchSplit split = search_split(ds.train, cfg.search_val_fraction, cfg.seed);
  out.train_labels = labels_of(split.train);
  out.validation_labels = labels_of(split.validation);
  for (const DataConfig& c : out.configs) {
    const RawFeatures tr = compute_features(split.train, c, ds, threads);
    const RawFeatures va = compute_features(split.validation, c, ds, threads);
    const Standardiser s = fit_standardiser(tr);
    out.train.emplace_back(tr, s);
    out.validation.emplace_back(va, s);
  }
  return out;
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<int> pick(const std::vector<int>& labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels.at(i));
  return out;
}

}  // namespace

SearchSession::SearchSession(const SearchRunConfig& cfg, SearchData data, LogFn log_fn)
    : cfg_(cfg),
      data_(std::move(data)),
      log_(std::move(log_fn)),
      store_(std::make_unique<diff::ParameterStore<float>>()),
      gamma_(data_.configs),
      val_cycle_(data_.validation_labels.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed, "validation"),
      start_(std::chrono::steady_clock::now()) {
  validate(cfg_);
  require(!data_.configs.empty() && data_.train.size() == data_.configs.size() &&
              data_.validation.size() == data_.configs.size(),
          "SearchSession: one feature bank per config is required");
  require(!data_.train_labels.empty() && !data_.validation_labels.empty(), "SearchSession: empty search split");

  Rng weight_rng = derive_rng(cfg_.seed, "weights");
  Rng arch_rng = derive_rng(cfg_.seed, "arch");
  net_ = std::make_unique<arch::Supernet<float>>(cell_topology(cfg_.topology),
                                                 network_shape(cfg_.topology, data_.class_names.size()), *store_,
                                                 weight_rng, arch_rng, cfg_.arch_init_sigma);
  if (cfg_.data_aware) {
    plan_ = data::make_plan<float>(data_.configs, cfg_.alignment, store_.get());
  }
  weight_opt_.learning_rate = static_cast<float>(cfg_.lr_weights);
  weight_opt_.momentum = static_cast<float>(cfg_.momentum);
  weight_opt_.weight_decay = static_cast<float>(cfg_.weight_decay);
  arch_opt_.learning_rate = static_cast<float>(cfg_.lr_arch);

  log(fmt::format("search: {} configs, {} search-train / {} search-validation clips, {} classes, {} weights",
                  data_.configs.size(), data_.train_labels.size(), data_.validation_labels.size(),
                  data_.class_names.size(), store_->scalar_count()));
  if (plan_) {
    log(fmt::format("alignment {}: target {}x{}", data::to_string(plan_->strategy), plan_->target.frames,
                    plan_->target.coefficients));
  }
}

void SearchSession::log(const std::string& line) const {
  if (log_) log_(line);
}

void SearchSession::check_finite(double loss, std::string_view phase) const {
  if (!std::isfinite(loss)) {
    throw NonFiniteLoss(fmt::format("non-finite {} loss ({}) after {} warm-up and {} search epochs; "
                                    "lower the learning rates or check the input features",
                                    phase, loss, warmup_epochs_done(), search_epochs_done()));
  }
}

diff::Var<float> SearchSession::input(diff::Tape<float>& tape, const std::vector<FeatureBank>& banks,
                                      std::span<const std::size_t> indices, bool weight_step, bool gamma_grad) {
  if (!cfg_.data_aware) {
    return tape.constant(banks.front().batch(indices));
  }
  std::vector<diff::Tensor<float>> inputs;
  inputs.reserve(banks.size());
  for (const FeatureBank& b : banks) inputs.push_back(b.batch(indices));
  const std::vector<diff::Var<float>> aligned = data::align<float>(tape, inputs, *plan_, weight_step);
  const diff::Var<float> weights = diff::softmax(tape.parameter(gamma_.gamma, gamma_grad));
  return data::mix_inputs<float>(aligned, weights);
}

double SearchSession::weight_step(std::span<const std::size_t> idx) {
  diff::Tape<float> tape;
  arch::Ctx<float> ctx{tape, diff::NormMode::kTrain, true, false};
  const diff::Var<float> x = input(tape, data_.train, idx, true, false);
  const std::vector<int> labels = pick(data_.train_labels, idx);
  const diff::Var<float> loss = diff::cross_entropy(net_->forward(ctx, x), std::span<const int>(labels));
  const double value = loss.value().item();
  check_finite(value, "training");
  const diff::Gradients<float> grads = tape.backward(loss);
  const std::vector<diff::Parameter<float>*> params = store_->parameters();
  diff::sgd_step<float>(params, grads, weight_opt_);
  return value;
}

double SearchSession::arch_step(std::span<const std::size_t> idx) {
  const bool gamma_grad = cfg_.data_aware && !gamma_.frozen;
  diff::Tape<float> tape;
  // Batch statistics, but the running averages belong to the weights and stay put.
  arch::Ctx<float> ctx{tape, diff::NormMode::kTrainFrozen, false, true};
  const diff::Var<float> x = input(tape, data_.validation, idx, false, gamma_grad);
  const std::vector<int> labels = pick(data_.validation_labels, idx);
  const diff::Var<float> loss = diff::cross_entropy(net_->forward(ctx, x), std::span<const int>(labels));
  const double value = loss.value().item();
  check_finite(value, "architecture");
  const diff::Gradients<float> grads = tape.backward(loss);
  std::vector<diff::Parameter<float>*> params = net_->arch().all();
  if (gamma_grad) {
    require(grads.count(&gamma_.gamma) == 1, "arch_step: gamma gradient missing");
    gamma_.note_gradient();
    params.push_back(&gamma_.gamma);
  }
  diff::sgd_step<float>(params, grads, arch_opt_);
  return value;
}

double SearchSession::warmup_epoch() {
  std::vector<double> losses;
  for (const auto& batch : epoch_batches(data_.train_labels.size(), static_cast<std::size_t>(cfg_.batch_size),
                                         cfg_.seed, "train", train_epochs_++)) {
    losses.push_back(weight_step(batch));
  }
  warmup_loss_.push_back(mean(losses));
  log(fmt::format("warmup epoch {}: loss {:.6f}", warmup_epochs_done(), warmup_loss_.back()));
  return warmup_loss_.back();
}

void SearchSession::warmup() {
  while (warmup_epochs_done() < cfg_.warmup_epochs) warmup_epoch();
}

void SearchSession::search_epoch() {
  const int epoch = search_epochs_done() + 1;
  std::vector<double> wl, al;
  for (const auto& batch : epoch_batches(data_.train_labels.size(), static_cast<std::size_t>(cfg_.batch_size),
                                         cfg_.seed, "train", train_epochs_++)) {
    wl.push_back(weight_step(batch));
    al.push_back(arch_step(val_cycle_.next()));
  }
  train_loss_.push_back(mean(wl));
  val_loss_.push_back(mean(al));
  std::string gamma_note;
  if (cfg_.data_aware) {
    if (!gamma_.frozen && data_.configs.size() > 1 && data::early_stop_check(gamma_, cfg_.early_stop)) {
      gamma_.freeze(epoch);
      log(fmt::format("epoch {}: data search stopped early, {} leads", epoch, data::select_config(gamma_).str()));
    }
    gamma_.snapshot(epoch);
    std::string w;
    for (double v : gamma_.history.back().weights) w += fmt::format(" {:.4f}", v);
    gamma_note = fmt::format(", gamma weights [{} ]{}", w, gamma_.frozen ? " (frozen)" : "");
  }
  log(fmt::format("search epoch {}: train loss {:.6f}, validation loss {:.6f}{}", epoch, train_loss_.back(),
                  val_loss_.back(), gamma_note));
}

SearchResult SearchSession::result() const {
  SearchResult r;
  r.genotype = net_->genotype();
  r.configs = data_.configs;
  r.selected_config = cfg_.data_aware ? data::select_config(gamma_) : data_.configs.front();
  r.gamma_history = gamma_.history;
  r.warmup_loss = warmup_loss_;
  r.train_loss = train_loss_;
  r.val_loss = val_loss_;
  r.early_stop_epoch = gamma_.frozen_epoch;
  r.gamma_gradient_evaluations = gamma_.gradient_evaluations;
  r.post_freeze_gamma_gradient_evaluations = gamma_.post_freeze_gradient_evaluations;
  r.supernet_parameters = store_->scalar_count();
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return r;
}

SearchResult run_search(const SearchRunConfig& cfg, const Dataset& ds, LogFn log) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  SearchData data = prepare_search_data(cfg, ds);
  SearchSession session(cfg, std::move(data), log);
  session.warmup();
  for (int e = 0; e < cfg.search_epochs; ++e) session.search_epoch();
  SearchResult r = session.result();
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log) {
    log(fmt::format("search done in {:.1f}s: selected {}", r.wall_clock_seconds, r.selected_config.str()));
  }
  return r;
}

}  // namespace danas::engine
