// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/engine/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "danas/common/error.hpp"
#include "danas/common/rng.hpp"
#include "danas/diffcore/optim.hpp"

namespace danas::engine {

using nlohmann::json;

json metrics_json(const Metrics& m) {
  json j;
  j["accuracy"] = m.accuracy;
  j["correct"] = m.correct;
  j["total"] = m.total;
  j["parameter_count"] = m.parameter_count;
  j["per_class"] = json::array();
  for (const ClassMetrics& c : m.per_class) {
    j["per_class"].push_back({{"class", c.name}, {"count", c.count}, {"correct", c.correct}, {"accuracy", c.accuracy}});
  }
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  return j;
}

TrainedModel build_model(const arch::Genotype& g, const arch::NetworkShape& shape, const DataConfig& config,
                         std::vector<std::string> class_names, std::uint64_t seed) {
  g.validate();
  require(shape.classes == class_names.size(), "build_model: head width does not match the class list");
  TrainedModel m;
  m.genotype = g;
  m.shape = shape;
  m.config = config;
  m.class_names = std::move(class_names);
  m.store = std::make_unique<diff::ParameterStore<float>>();
  Rng rng = derive_rng(seed, "final");
  m.net = std::make_unique<arch::DiscreteNet<float>>(g, shape, *m.store, rng);
  return m;
}

FinalRun train_final(const arch::Genotype& g, const DataConfig& data_config, const SearchRunConfig& cfg,
                     const Dataset& ds, LogFn log) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const RawFeatures raw = compute_features(ds.train, data_config, ds);
  FinalRun run{build_model(g, network_shape(cfg.topology, ds.classes()), data_config, ds.class_names, cfg.seed),
               {}};
  TrainedModel& m = run.model;
  m.standardiser = fit_standardiser(raw);
  const FeatureBank train(raw, m.standardiser);
  const std::vector<int> labels = labels_of(ds.train);

  diff::OptimizerState<float> opt;
  opt.learning_rate = static_cast<float>(cfg.lr_weights);
  opt.momentum = static_cast<float>(cfg.momentum);
  opt.weight_decay = static_cast<float>(cfg.weight_decay);
  const std::vector<diff::Parameter<float>*> params = m.store->parameters();
  if (log) {
    log(fmt::format("final training: {} on {} clips, {} parameters", data_config.str(), labels.size(),
                    m.store->scalar_count()));
  }
  for (int epoch = 0; epoch < cfg.eval_epochs; ++epoch) {
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : epoch_batches(labels.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed,
                                         "final_train", static_cast<std::uint64_t>(epoch))) {
      diff::Tape<float> tape;
      arch::Ctx<float> ctx{tape, diff::NormMode::kTrain, true, false};
      std::vector<int> y;
      for (std::size_t i : idx) y.push_back(labels[i]);
      const diff::Var<float> loss =
          diff::cross_entropy(m.net->forward(ctx, tape.constant(train.batch(idx))), std::span<const int>(y));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NonFiniteLoss(fmt::format("non-finite training loss ({}) in final training epoch {}", value, epoch + 1));
      }
      diff::sgd_step<float>(params, tape.backward(loss), opt);
      total += value;
      ++batches;
    }
    m.train_loss.push_back(batches ? total / static_cast<double>(batches) : 0.0);
    if (log) log(fmt::format("final epoch {}: loss {:.6f}", epoch + 1, m.train_loss.back()));
  }
  run.metrics = evaluate(m, ds, Split::kTest, static_cast<std::size_t>(cfg.batch_size));
  run.metrics.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log) {
    log(fmt::format("test accuracy {:.4f} ({}/{}), {} parameters", run.metrics.accuracy, run.metrics.correct,
                    run.metrics.total, run.metrics.parameter_count));
  }
  return run;
}

Metrics evaluate(const TrainedModel& model, const FeatureBank& features, std::span<const int> labels,
                 std::size_t batch_size) {
  require(batch_size >= 1, "evaluate: batch_size must be >= 1");
  if (labels.empty()) throw ConfigError("evaluate: empty split");
  require(features.clips() == labels.size(), "evaluate: feature and label counts differ");
  const auto t0 = std::chrono::steady_clock::now();
  Metrics m;
  m.parameter_count = arch::param_count(model.genotype, model.shape);
  m.per_class.resize(model.class_names.size());
  for (std::size_t c = 0; c < model.class_names.size(); ++c) m.per_class[c].name = model.class_names[c];

  for (std::size_t begin = 0; begin < labels.size(); begin += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, labels.size() - begin));
    std::iota(idx.begin(), idx.end(), begin);
    diff::Tape<float> tape;
    arch::Ctx<float> ctx{tape, diff::NormMode::kEval, false, false};
    const diff::Tensor<float> logits = model.net->forward(ctx, tape.constant(features.batch(idx))).value();
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const float* row = logits.data() + i * classes;
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (row[c] > row[best]) best = c;
      }
      const int y = labels[begin + i];
      require(y >= 0 && static_cast<std::size_t>(y) < m.per_class.size(), "evaluate: label out of range");
      ClassMetrics& cm = m.per_class[static_cast<std::size_t>(y)];
      ++cm.count;
      ++m.total;
      if (best == static_cast<std::size_t>(y)) {
        ++cm.correct;
        ++m.correct;
      }
    }
  }
  for (ClassMetrics& c : m.per_class) {
    c.accuracy = c.count ? static_cast<double>(c.correct) / static_cast<double>(c.count) : 0.0;
  }
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

Metrics evaluate(const TrainedModel& model, const Dataset& ds, Split split, std::size_t batch_size) {
  if (ds.class_names != model.class_names) {
    throw ConfigError(fmt::format("dataset has {} classes but the model head was trained for {}; class lists differ",
                                  ds.classes(), model.class_names.size()));
  }
  const std::vector<Clip>& clips = ds.split(split);
  if (clips.empty()) throw ConfigError(fmt::format("evaluate: the {} split is empty", to_string(split)));
  const FeatureBank bank(compute_features(clips, model.config, ds), model.standardiser);
  const std::vector<int> labels = labels_of(clips);
  return evaluate(model, bank, labels, batch_size);
}

namespace {

json shape_json(const arch::NetworkShape& s) {
  return {{"num_cells", s.num_cells},
          {"channels", s.channels},
          {"classes", s.classes},
          {"in_channels", s.in_channels},
          {"stem_multiplier", s.stem_multiplier}};
}

template <typename T>
std::vector<T> vec(const diff::Tensor<T>& t) {
  return std::vector<T>(t.values().begin(), t.values().end());
}

}  // namespace

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["genotype"] = json::parse(arch::genotype_to_json(model.genotype));
  j["shape"] = shape_json(model.shape);
  j["data_config"] = config_json(model.config);
  j["classes"] = model.class_names;
  j["standardiser"] = {{"mean", model.standardiser.mean}, {"stddev", model.standardiser.stddev}};
  j["parameters"] = json::array();
  for (const diff::Parameter<float>* p : std::as_const(*model.store).parameters()) {
    j["parameters"].push_back({{"name", p->name}, {"shape", p->value.shape()}, {"values", vec(p->value)}});
  }
  j["norm_stats"] = json::array();
  for (const diff::NormStats<float>& s : model.store->norm_stats()) {
    j["norm_stats"].push_back({{"mean", vec(s.running_mean)}, {"var", vec(s.running_var)}});
  }
  j["train_loss"] = model.train_loss;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << "\n";
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  try {
    json j;
    in >> j;
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw FormatError("model: unsupported schema_version");
    arch::NetworkShape shape;
    const json& s = j.at("shape");
    shape.num_cells = s.at("num_cells").get<int>();
    shape.channels = s.at("channels").get<std::size_t>();
    shape.classes = s.at("classes").get<std::size_t>();
    shape.in_channels = s.at("in_channels").get<std::size_t>();
    shape.stem_multiplier = s.at("stem_multiplier").get<std::size_t>();
    TrainedModel m = build_model(arch::genotype_from_json(j.at("genotype").dump()), shape,
                                 config_from(j.at("data_config"), "data_config"),
                                 j.at("classes").get<std::vector<std::string>>(), 0);
    m.standardiser.mean = j.at("standardiser").at("mean").get<std::vector<double>>();
    m.standardiser.stddev = j.at("standardiser").at("stddev").get<std::vector<double>>();
    m.train_loss = j.value("train_loss", std::vector<double>{});

    std::map<std::string, const json*> by_name;
    for (const json& p : j.at("parameters")) by_name[p.at("name").get<std::string>()] = &p;
    const auto params = m.store->parameters();
    if (by_name.size() != params.size()) throw FormatError("model: parameter count does not match the genotype");
    for (diff::Parameter<float>* p : params) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) throw FormatError("model: missing parameter " + p->name);
      if (it->second->at("shape").get<diff::Shape>() != p->value.shape()) {
        throw FormatError("model: shape mismatch for " + p->name);
      }
      p->value = diff::Tensor<float>(p->value.shape(), it->second->at("values").get<std::vector<float>>());
    }
    const json& stats = j.at("norm_stats");
    auto& dst = m.store->norm_stats();
    if (stats.size() != dst.size()) throw FormatError("model: normalisation statistics do not match the genotype");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i].running_mean = diff::Tensor<float>(dst[i].running_mean.shape(), stats[i].at("mean").get<std::vector<float>>());
      dst[i].running_var = diff::Tensor<float>(dst[i].running_var.shape(), stats[i].at("var").get<std::vector<float>>());
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

}  // namespace danas::engine
